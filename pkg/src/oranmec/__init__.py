"""Joint O-RAN/MEC orchestration simulator and branching double-Q agents."""

__version__ = "0.1.0"
