"""Experiment runner: wire configs into envs and agents, write metrics.

A yaml experiment file describes the topology, the demand source, the
utilization platform, the cost coefficients and the agent; ``run_experiment``
executes it per seed and writes:

  * ``episodes_seed<S>_<mode>.csv``: one record per episode,
  * ``steps_seed<S>_<mode>.csv``: per-slot reward and cost aggregates,
  * ``checkpoint_seed<S>_<mode>.npz``: final network/posterior state.

``run_oracle`` exhaustively scores every action of a (single-BS) space as a
stationary policy and reports the best, and ``compare_runs`` summarizes
metric files against each other (mean of the last 20% of episodes plus an
episodes-to-convergence estimate: the first episode whose trailing
10-episode moving average lands within 5% of the final mean).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .agents import AgentConfig, BayesAgent, make_agent, run_training
from .env import (
    Action,
    ActionLayout,
    ActionSpaceTooLarge,
    OranMecEnv,
    RewardConfig,
    ServiceMix,
    State,
    enumerate_actions,
)
from .topology import build_topology
from .workload import (
    SLOTS_PER_DAY,
    UtilizationModel,
    constant_demands,
    load_trace,
    platform_a,
    platform_b,
    synth_demands,
)

logger = logging.getLogger("oranmec.harness")

EPISODE_FIELDS = (
    "episode", "total_reward", "mean_reward", "penalty_total",
    "reconfig_total", "routing_total", "elastic_delay_total",
    "compute_du_mec", "compute_cu_mec", "sla_underprovision",
    "sla_server_capacity", "sla_split_delay", "sla_inelastic_delay",
    "instantiation", "reconfig_flavor", "reconfig_mec_migration",
    "reconfig_server_migration", "routing", "is_convergence_episode",
)

STEP_FIELDS = (
    "episode", "step", "reward", "J", "D",
    "penalty_total", "reconfig_total", "routing_total",
)


class ConfigError(ValueError):
    """Unusable experiment configuration."""


@dataclass
class ExperimentConfig:
    topology: dict
    workload: dict
    reward: RewardConfig
    services: ServiceMix
    agent: AgentConfig
    episodes: int
    seeds: list[int]
    out_dir: Path
    utilization: dict = field(default_factory=dict)
    episode_slots: int = SLOTS_PER_DAY
    bbu_flavors: tuple[int, ...] = tuple(range(16))
    mec_flavors: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.episodes <= 0:
            raise ConfigError("episodes must be positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")


_AGENT_KEY_MAP = {"T_p": "T_p", "T_g": "T_g", "T_s": "T_s"}


def _parse_agent(raw: dict) -> AgentConfig:
    kwargs = {}
    valid = {f.name for f in AgentConfig.__dataclass_fields__.values()}
    for key, val in raw.items():
        name = _AGENT_KEY_MAP.get(key, key)
        if name not in valid:
            raise ConfigError(f"unknown agent config key {key!r}")
        if name == "trunk_widths":
            val = tuple(int(v) for v in val)
        kwargs[name] = val
    if kwargs.get("pretrained_checkpoint") and "eps_max" not in kwargs:
        kwargs["eps_max"] = 0.1   # pretrained runs explore less by default
    return AgentConfig(**kwargs)


def _parse_reward(raw: dict) -> RewardConfig:
    raw = dict(raw)
    if "delay_threshold" in raw:
        raw["delay_threshold"] = {int(k): float(v) for k, v in raw["delay_threshold"].items()}
    valid = {f.name for f in RewardConfig.__dataclass_fields__.values()}
    unknown = set(raw) - valid
    if unknown:
        raise ConfigError(f"unknown reward config keys {sorted(unknown)}")
    return RewardConfig(**raw)


def _parse_services(raw: dict | None) -> ServiceMix:
    if not raw:
        return ServiceMix()
    return ServiceMix(
        n_services=int(raw.get("n_services", 2)),
        inelastic=tuple(raw.get("inelastic", (1,))),
        elastic=tuple(raw.get("elastic", (2,))),
    )


def load_experiment_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        services = _parse_services(raw.get("services"))
        flavors = raw.get("flavors", {})
        return ExperimentConfig(
            topology=raw["topology"],
            workload=raw.get("workload", {"source": "synthetic", "seed": 0, "peak_gbps": 4.0}),
            reward=_parse_reward(raw.get("reward", {})),
            services=services,
            agent=_parse_agent(raw.get("agent", {})),
            episodes=int(raw.get("episodes", 1)),
            seeds=[int(s) for s in raw.get("seeds", [0])],
            out_dir=Path(raw.get("out_dir", "results")),
            utilization=raw.get("utilization", {}),
            episode_slots=int(raw.get("episode_slots", SLOTS_PER_DAY)),
            bbu_flavors=tuple(flavors.get("bbu", range(16))),
            mec_flavors=tuple(tuple(f) for f in flavors.get("mec", ())),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_utilization(cfg: dict, n_services: int, seed: int | None = None) -> UtilizationModel:
    platform = cfg.get("platform", "A")
    noise = float(cfg.get("noise_std", 0.0))
    if cfg.get("params"):
        p = cfg["params"]
        return UtilizationModel(
            bbu_base=float(p.get("bbu_base", 0.5)),
            bbu_slope=float(p.get("bbu_slope", 1.5)),
            mec_base=p.get("mec_base", 0.2),
            mec_slope=p.get("mec_slope", 1.0),
            noise_std=noise,
            platform_id=str(platform),
            n_services=n_services,
            seed=seed,
        )
    if str(platform).upper() == "B":
        return platform_b(n_services, noise_std=noise, seed=seed)
    return platform_a(n_services, noise_std=noise, seed=seed)


def build_env(cfg: ExperimentConfig, util_seed: int | None = None) -> OranMecEnv:
    topo = build_topology(cfg.topology)
    layout = ActionLayout.from_topology(
        topo,
        n_services=cfg.services.n_services,
        bbu_flavors=cfg.bbu_flavors,
        mec_flavors=cfg.mec_flavors,
    )
    util = build_utilization(cfg.utilization, cfg.services.n_services, seed=util_seed)
    return OranMecEnv(topo, layout, util, cfg.reward, cfg.services)


def make_demand_provider(cfg: ExperimentConfig, seed: int):
    """Per-episode demand sequences from the configured source."""
    wl = cfg.workload
    source = wl.get("source", "synthetic")
    slots = cfg.episode_slots
    n_bs = None

    def n_bs_lazy() -> int:
        nonlocal n_bs
        if n_bs is None:
            n_bs = len(build_topology(cfg.topology).ru_ids)
        return n_bs

    if source == "constant":
        episode = constant_demands(
            slots, n_bs_lazy(), float(wl.get("legacy_gbps", 1.0)),
            wl.get("mec_gbps", [0.5] * cfg.services.n_services),
        )
        return lambda e: episode
    if source == "trace":
        sequence = load_trace(
            wl["path"], n_bs=n_bs_lazy(), n_services=cfg.services.n_services
        )
        if len(sequence) < cfg.episodes * slots:
            raise ConfigError(
                f"trace holds {len(sequence)} slots, the experiment needs "
                f"{cfg.episodes * slots}"
            )
        return lambda e: sequence[e * slots:(e + 1) * slots]
    if source == "synthetic":
        sequence = synth_demands(
            int(wl.get("seed", seed)),
            cfg.episodes * slots,
            n_bs_lazy(),
            cfg.services.n_services,
            float(wl.get("peak_gbps", 4.0)),
        )
        return lambda e: sequence[e * slots:(e + 1) * slots]
    raise ConfigError(f"unknown workload source {source!r}")


def _convergence_episode(mean_rewards: list[float]) -> int:
    """First episode whose trailing 10-episode moving average is within 5%
    of the mean over the last 20% of episodes (1-based)."""
    n = len(mean_rewards)
    tail = max(1, int(math.ceil(0.2 * n)))
    final = float(np.mean(mean_rewards[-tail:]))
    band = 0.05 * abs(final)
    for e in range(1, n + 1):
        window = mean_rewards[max(0, e - 10):e]
        if abs(float(np.mean(window)) - final) <= band:
            return e
    return n


def write_episode_csv(path, records, convergence_episode: int | None = None) -> None:
    if convergence_episode is None:
        convergence_episode = _convergence_episode([r.mean_reward for r in records])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_FIELDS)
        for r in records:
            writer.writerow([
                r.episode, repr(r.total_reward), repr(r.mean_reward),
                repr(r.penalty_total), repr(r.reconfig_total),
                repr(r.routing_total), repr(r.elastic_delay_total),
                *(repr(r.cost_sums.get(k, 0.0)) for k in EPISODE_FIELDS[7:18]),
                int(r.episode + 1 == convergence_episode),
            ])


def write_step_csv(path, steps) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STEP_FIELDS)
        for s in steps:
            writer.writerow([
                s.episode, s.step, repr(s.reward), repr(s.total_cost),
                repr(s.elastic_delay), repr(s.penalty_total),
                repr(s.reconfig_total), repr(s.routing_total),
            ])


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Execute the experiment per seed; returns the written file paths."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for seed in cfg.seeds:
        ss = np.random.SeedSequence(seed)
        util_seed, agent_seed, ep_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
        env = build_env(cfg, util_seed=util_seed)
        agent_cfg = AgentConfig(**{
            **{f: getattr(cfg.agent, f) for f in cfg.agent.__dataclass_fields__},
            "seed": agent_seed,
        })
        agent = make_agent(env.layout, env.state_dim, agent_cfg)
        provider = make_demand_provider(cfg, seed)
        result = run_training(
            env, agent, provider, cfg.episodes, episode_seed_base=ep_seed
        )
        tag = f"seed{seed}_{agent_cfg.mode}"
        ep_path = cfg.out_dir / f"episodes_{tag}.csv"
        st_path = cfg.out_dir / f"steps_{tag}.csv"
        ck_path = cfg.out_dir / f"checkpoint_{tag}.npz"
        write_episode_csv(ep_path, result.episodes)
        write_step_csv(st_path, result.steps)
        agent.save_checkpoint(ck_path)
        written += [ep_path, st_path, ck_path]
        logger.info("seed %d done: %s", seed, ep_path)
    return written


# -- exhaustive stationary oracle -------------------------------------------

@dataclass
class OracleResult:
    action: Action
    mean_reward: float
    n_evaluated: int


def run_oracle(cfg: ExperimentConfig, limit: int = 1_000_000) -> OracleResult:
    """Score every action as a stationary policy over one episode and return
    the best by average reward.

    Reconfiguration charges appear only in the first slot (the change away
    from the initial configuration); with stationary demands and a
    noise-free utilization model each later slot costs the same, which the
    evaluation exploits.
    """
    env = build_env(cfg)
    n = env.layout.joint_cardinality()
    if env.layout.n_bs != 1 or n > limit:
        raise ActionSpaceTooLarge(
            f"oracle refuses: {n} joint actions over limit {limit} "
            f"(or more than one BS)"
        )
    demands = make_demand_provider(cfg, cfg.seeds[0])(0)
    noise_free = env.util.noise_std == 0.0
    stationary = noise_free and all(
        np.array_equal(d.demand, demands[0].demand) for d in demands[1:]
    )
    T = len(demands)
    best_action = None
    best_reward = -math.inf
    count = 0
    for action in enumerate_actions(env.layout, limit=limit):
        count += 1
        first = State(0, demands[0].demand, env.initial_action)
        r0 = env.compute_costs(first, action).reward
        if stationary:
            steady = env.compute_costs(State(1, demands[1 % T].demand, action), action).reward
            avg = (r0 + (T - 1) * steady) / T
        else:
            total = r0
            for t in range(1, T):
                total += env.compute_costs(State(t, demands[t].demand, action), action).reward
            avg = total / T
        if avg > best_reward:
            best_reward = avg
            best_action = action
    logger.info("oracle evaluated %d actions, best mean reward %.4f", count, best_reward)
    return OracleResult(best_action, best_reward, count)


# -- run comparison -----------------------------------------------------------

@dataclass
class RunSummary:
    path: Path
    mean_reward_last20: float
    convergence_episode: int
    pct_vs_first: float


def read_episode_csv(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def compare_runs(paths) -> list[RunSummary]:
    """Summarize runs: mean episodic reward over the last 20% of episodes,
    episodes-to-convergence, and percent difference versus the first run."""
    paths = [Path(p) for p in paths]
    if len(paths) < 2:
        raise ValueError("need at least two metric files to compare")
    series = []
    for p in paths:
        rows = read_episode_csv(p)
        series.append([float(r["mean_reward"]) for r in rows])
    lengths = {len(s) for s in series}
    if len(lengths) != 1:
        raise ValueError(f"episode counts differ across files: {sorted(lengths)}")
    summaries = []
    base = None
    for p, s in zip(paths, series):
        tail = max(1, int(math.ceil(0.2 * len(s))))
        mean = float(np.mean(s[-tail:]))
        conv = _convergence_episode(s)
        if base is None:
            base = mean
            pct = 0.0
        else:
            pct = 100.0 * abs(mean - base) / abs(base) if base != 0 else math.inf
        summaries.append(RunSummary(p, mean, conv, pct))
    return summaries


def format_comparison(summaries: list[RunSummary]) -> str:
    lines = [f"{'run':<40} {'mean(last 20%)':>16} {'converged@':>11} {'vs first':>9}"]
    for s in summaries:
        lines.append(
            f"{s.path.name:<40} {s.mean_reward_last20:>16.4f} "
            f"{s.convergence_episode:>11d} {s.pct_vs_first:>8.2f}%"
        )
    return "\n".join(lines)
