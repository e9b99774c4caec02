"""Per-slot traffic demands and the demand-to-compute utilization model.

Demands come either from a trace file (csv: ``t,bs,svc,demand_gbps``) or
from a synthetic diurnal generator.  Service 0 is the legacy mobile
broadband stream; services 1..C are MEC classes.

The utilization model maps a demand to the compute (reference cores) the
hosting platform actually burns serving it.  The real relation is platform
dependent and noisy; here an affine model with optional Gaussian noise
stands behind a small interface so a measurement-trained predictor can be
plugged in later.  Two stock parameter sets ("A" and "B") emulate two
different platforms for transfer experiments.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .splits import CompositeSplit, compute_shares

logger = logging.getLogger("oranmec.workload")

SLOTS_PER_DAY = 144

TRACE_HEADER = ("t", "bs", "svc", "demand_gbps")


class TraceError(ValueError):
    """Malformed or invalid demand trace."""


@dataclass(frozen=True, eq=False)
class DemandSlot:
    """Demands for one time slot: ``demand[k, 0]`` is BS-k's legacy traffic,
    ``demand[k, c]`` its MEC class-c demand (Gbps)."""

    t: int
    demand: np.ndarray

    def __post_init__(self):
        self.demand.setflags(write=False)

    @property
    def n_bs(self) -> int:
        return self.demand.shape[0]

    @property
    def n_services(self) -> int:
        return self.demand.shape[1] - 1

    def legacy(self, k: int) -> float:
        return float(self.demand[k, 0])

    def mec(self, k: int, c: int) -> float:
        return float(self.demand[k, c])


def load_trace(path, n_bs: int | None = None, n_services: int | None = None) -> list[DemandSlot]:
    """Read a demand trace; one slot per distinct ``t``, missing cells are 0.

    Rows must be sorted by slot.  ``n_bs``/``n_services`` override the shape
    inferred from the largest indices seen.
    """
    rows: list[tuple[int, int, int, float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            if not raw or (len(raw) == 1 and not raw[0].strip()):
                continue
            if lineno == 1:
                if tuple(s.strip() for s in raw) != TRACE_HEADER:
                    raise TraceError(
                        f"{path}: line 1: expected header {','.join(TRACE_HEADER)}"
                    )
                continue
            try:
                t, k, c = int(raw[0]), int(raw[1]), int(raw[2])
                demand = float(raw[3])
            except (ValueError, IndexError) as exc:
                raise TraceError(f"{path}: line {lineno}: {exc}") from exc
            if demand < 0:
                raise TraceError(f"{path}: line {lineno}: negative demand {demand}")
            if t < 0 or k < 0 or c < 0:
                raise TraceError(f"{path}: line {lineno}: negative index")
            if rows and t < rows[-1][0]:
                raise TraceError(f"{path}: line {lineno}: rows not sorted by t")
            rows.append((t, k, c, demand))

    if not rows:
        return []
    k_max = max(r[1] for r in rows)
    c_max = max(r[2] for r in rows)
    n_bs = n_bs if n_bs is not None else k_max + 1
    n_services = n_services if n_services is not None else c_max
    if k_max >= n_bs or c_max > n_services:
        raise TraceError(f"{path}: indices exceed declared shape ({n_bs} BS, {n_services} services)")

    horizon = rows[-1][0] + 1
    demand = np.zeros((horizon, n_bs, 1 + n_services))
    filled = np.zeros_like(demand, dtype=bool)
    for t, k, c, d in rows:
        demand[t, k, c] = d
        filled[t, k, c] = True
    n_missing = filled.size - int(filled.sum())
    if n_missing:
        logger.warning("%s: %d missing (t,bs,svc) cells defaulted to 0", path, n_missing)
    return [DemandSlot(t, demand[t]) for t in range(horizon)]


def synth_demands(
    seed: int,
    horizon: int,
    n_bs: int,
    n_services: int,
    peak_gbps: float,
    noise_frac: float = 0.05,
) -> list[DemandSlot]:
    """Synthetic diurnal demands: one sinusoidal day-cycle per (BS, service)
    with a per-BS phase offset plus seeded noise, clipped to [0, peak]."""
    if horizon % SLOTS_PER_DAY != 0:
        raise ValueError(f"horizon {horizon} must be a multiple of {SLOTS_PER_DAY}")
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 1.0, size=n_bs)
    amp = rng.uniform(0.4, 1.0, size=(n_bs, 1 + n_services)) * peak_gbps / 2.0
    t = np.arange(horizon)[:, None, None]
    wave = 1.0 + np.sin(2.0 * math.pi * (t / SLOTS_PER_DAY + phase[None, :, None]))
    demand = amp[None, :, :] * wave
    demand += rng.normal(0.0, noise_frac * peak_gbps, size=demand.shape)
    demand = np.clip(demand, 0.0, peak_gbps)
    return [DemandSlot(i, demand[i]) for i in range(horizon)]


def constant_demands(
    horizon: int, n_bs: int, legacy_gbps: float, mec_gbps
) -> list[DemandSlot]:
    """Stationary demand sequence (toy environments and oracles)."""
    row = np.array([legacy_gbps, *mec_gbps], dtype=float)
    demand = np.tile(row, (n_bs, 1))
    return [DemandSlot(t, demand.copy()) for t in range(horizon)]


def _per_class(value, n_services: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n_services
    out = tuple(float(v) for v in value)
    if len(out) != n_services:
        raise ValueError(f"{name} needs {n_services} entries, got {len(out)}")
    return out


@dataclass
class UtilizationModel:
    """Affine demand-to-reference-cores map with optional Gaussian noise.

    The BBU total is split between the DU and CU hosts according to the
    active composite split; each MEC class has its own affine parameters.
    Outputs are clamped at zero.  The model owns a private seeded noise
    stream; with ``noise_std`` 0 it is deterministic and the stream is
    never consumed.
    """

    bbu_base: float = 0.5
    bbu_slope: float = 1.5
    mec_base: tuple[float, ...] | float = 0.2
    mec_slope: tuple[float, ...] | float = 1.0
    noise_std: float = 0.0
    platform_id: str = "A"
    n_services: int = 2
    seed: int | None = None
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.mec_base = _per_class(self.mec_base, self.n_services, "mec_base")
        self.mec_slope = _per_class(self.mec_slope, self.n_services, "mec_slope")
        for name in ("bbu_base", "bbu_slope", "noise_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if min(self.mec_base) < 0 or min(self.mec_slope) < 0:
            raise ValueError("mec parameters must be nonnegative")
        self.reseed(self.seed)

    def reseed(self, seed: int | None) -> None:
        self._rng = np.random.default_rng(seed)

    def _noise(self) -> float:
        if self.noise_std == 0.0:
            return 0.0
        return float(self._rng.normal(0.0, self.noise_std))

    def bbu_utilization(self, split: CompositeSplit, legacy_gbps: float) -> tuple[float, float]:
        """Actual (DU, CU) reference-core draw for one BS's BBU."""
        if legacy_gbps < 0:
            raise ValueError(f"demand must be nonnegative, got {legacy_gbps}")
        total = max(0.0, self.bbu_base + self.bbu_slope * legacy_gbps + self._noise())
        du_share, cu_share = compute_shares(split)
        return du_share * total, cu_share * total

    def mec_utilization(self, c: int, demand_gbps: float) -> float:
        """Actual reference-core draw for MEC class ``c`` (1-based)."""
        if demand_gbps < 0:
            raise ValueError(f"demand must be nonnegative, got {demand_gbps}")
        if not 1 <= c <= self.n_services:
            raise ValueError(f"MEC class {c} out of range 1..{self.n_services}")
        base = self.mec_base[c - 1]
        slope = self.mec_slope[c - 1]
        return max(0.0, base + slope * demand_gbps + self._noise())


def platform_a(n_services: int = 2, noise_std: float = 0.0, seed: int | None = None) -> UtilizationModel:
    return UtilizationModel(
        n_services=n_services, noise_std=noise_std, seed=seed, platform_id="A"
    )


def platform_b(n_services: int = 2, noise_std: float = 0.0, seed: int | None = None) -> UtilizationModel:
    """Platform A with 25% steeper slopes and 10% higher floors: a genuinely
    different environment for pretraining/transfer studies."""
    a = platform_a(n_services)
    return UtilizationModel(
        bbu_base=a.bbu_base * 1.1,
        bbu_slope=a.bbu_slope * 1.25,
        mec_base=tuple(b * 1.1 for b in a.mec_base),
        mec_slope=tuple(s * 1.25 for s in a.mec_slope),
        noise_std=noise_std,
        platform_id="B",
        n_services=n_services,
        seed=seed,
    )
