"""The orchestration MDP: state, multi-dimensional action, cost model, reward.

Each slot the operator picks, per BS: a functional split, DU/CU/MEC compute
flavors (discrete reference-core sizes), DU/CU hosting servers and the MEC
hosting side (DU- or CU-colocated).  Routing follows from the placement via
the topology's stored shortest paths, so it is part of the environment, not
of the action.

The monetary model itemizes, per slot:

  * compute reservation for DU-side and CU-side instances (CU-side capacity
    is cheaper, reflecting central-processing pooling gains),
  * SLA penalties: resource under-provisioning versus the actual platform
    utilization, server capacity overflow, split delay-budget violations and
    missed inelastic MEC deadlines,
  * change overheads: instantiating extra resources, reallocating flavors,
    migrating MEC between sides, and moving instances across servers (soft
    migration: a full new replica is charged at the new location),
  * bandwidth reservation on FH/MH/BH for the split-induced flows.

The reward is the negated total cost minus a weighted delay cost of the
elastic MEC services.  Constraint violations never abort an episode; they
only convert into penalties.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import splits as splits_mod
from .splits import DEMAND_CAP_GBPS, SPLIT_IDS, get_split
from .topology import Topology
from .workload import DemandSlot, UtilizationModel

logger = logging.getLogger("oranmec.env")

DEFAULT_FLAVORS = tuple(range(16))   # reference-core sizes 0..15


class ActionSpaceTooLarge(RuntimeError):
    """Exhaustive enumeration refused: joint space above the limit."""


class EpisodeExhausted(RuntimeError):
    """step() called after the terminal slot."""


@dataclass(frozen=True)
class Action:
    """Per-BS control tuple; every field is indexed by BS.

    ``mec_flavor[k][c-1]`` and ``mec_at_cu[k][c-1]`` refer to MEC class c.
    ``mec_at_cu`` is 1 when the class is hosted with the CU, 0 with the DU.
    """

    split: tuple[str, ...]
    du_server: tuple[int, ...]
    cu_server: tuple[int, ...]
    du_flavor: tuple[int, ...]
    cu_flavor: tuple[int, ...]
    mec_flavor: tuple[tuple[int, ...], ...]
    mec_at_cu: tuple[tuple[int, ...], ...]


@dataclass(frozen=True, eq=False)
class State:
    """Observation: current demands plus the configuration left over from
    the previous slot."""

    t: int
    demand: np.ndarray          # (K, 1 + C), read-only
    prev: Action

    def __post_init__(self):
        self.demand.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return (
            self.t == other.t
            and self.prev == other.prev
            and np.array_equal(self.demand, other.demand)
        )


@dataclass
class ServiceMix:
    """Which MEC classes are deadline-bound (inelastic) versus delay-cost
    weighted (elastic).  Class ids are 1-based; the two sets partition
    1..n_services."""

    n_services: int = 2
    inelastic: tuple[int, ...] = (1,)
    elastic: tuple[int, ...] = (2,)

    def __post_init__(self):
        all_ids = set(self.inelastic) | set(self.elastic)
        if sorted(all_ids) != list(range(1, self.n_services + 1)) or (
            set(self.inelastic) & set(self.elastic)
        ):
            raise ValueError(
                f"inelastic {self.inelastic} and elastic {self.elastic} must "
                f"partition classes 1..{self.n_services}"
            )


@dataclass
class RewardConfig:
    """Monetary coefficients and delay-model parameters.

    ``delay_weight`` is the relative importance of the elastic delay cost
    and ``delay_slope`` converts delay units into money (the "B" knob of
    the delay-coefficient experiments); the reward is
    ``-(total cost) - delay_weight * delay_slope * (elastic delay)``.
    """

    kappa_dm: float = 0.25     # $ per DU-side reserved RC
    kappa_cm: float = 0.125    # $ per CU-side reserved RC
    kappa_d: float = 5.0       # $ per unit of SLA violation
    kappa_i: float = 0.05      # $ per instantiated RC
    kappa_r: float = 0.05      # $ per reconfigured RC
    kappa_h: float = 1.0       # $ per reserved Gbps of transport
    delay_weight: float = 1.0  # eta
    delay_slope: float = 1.0   # b
    delta1: float = 1.0
    delta2: float = 1.0
    delay_threshold: dict[int, float] = field(default_factory=lambda: {1: 1.0})
    max_delay_ms: float = 1e3  # finite sentinel when a demanded service has no compute
    gamma: float = 1.0         # long-run discount (1 during online operation)

    def __post_init__(self):
        numeric = (
            self.kappa_dm, self.kappa_cm, self.kappa_d, self.kappa_i,
            self.kappa_r, self.kappa_h, self.delay_weight, self.delay_slope,
            self.delta1, self.delta2, self.max_delay_ms,
        )
        if any(v < 0 for v in numeric) or any(v < 0 for v in self.delay_threshold.values()):
            raise ValueError("reward coefficients must be nonnegative")


@dataclass
class CostBreakdown:
    """Itemized slot cost.  ``total`` excludes the elastic delay cost, which
    enters the reward separately through its own weight."""

    compute_du_mec: float = 0.0
    compute_cu_mec: float = 0.0
    sla_underprovision: float = 0.0
    sla_server_capacity: float = 0.0
    sla_split_delay: float = 0.0
    sla_inelastic_delay: float = 0.0
    instantiation: float = 0.0
    reconfig_flavor: float = 0.0
    reconfig_mec_migration: float = 0.0
    reconfig_server_migration: float = 0.0
    routing: float = 0.0
    elastic_delay: float = 0.0
    total: float = 0.0
    reward: float = 0.0

    _ITEMS = (
        "compute_du_mec", "compute_cu_mec", "sla_underprovision",
        "sla_server_capacity", "sla_split_delay", "sla_inelastic_delay",
        "instantiation", "reconfig_flavor", "reconfig_mec_migration",
        "reconfig_server_migration", "routing",
    )

    @property
    def penalty_total(self) -> float:
        return (
            self.sla_underprovision + self.sla_server_capacity
            + self.sla_split_delay + self.sla_inelastic_delay
        )

    @property
    def reconfig_total(self) -> float:
        return (
            self.instantiation + self.reconfig_flavor
            + self.reconfig_mec_migration + self.reconfig_server_migration
        )

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ActionLayout:
    """Finite per-BS control domains and their branch decomposition.

    Branch order per BS is: split, DU server, CU server, DU flavor,
    CU flavor, one MEC flavor per class, one MEC side per class.  All
    index/value conversions and the joint-space bookkeeping live here.
    """

    n_bs: int = 1
    splits: tuple[str, ...] = SPLIT_IDS
    du_servers: tuple[int, ...] = ()
    cu_servers: tuple[int, ...] = ()
    bbu_flavors: tuple[int, ...] = DEFAULT_FLAVORS
    mec_flavors: tuple[tuple[int, ...], ...] = ()   # one tuple per class
    n_services: int = 2

    def __post_init__(self):
        if not self.mec_flavors:
            object.__setattr__(
                self, "mec_flavors", tuple(self.bbu_flavors for _ in range(self.n_services))
            )
        if len(self.mec_flavors) != self.n_services:
            raise ValueError("need one MEC flavor set per service class")
        if not self.du_servers or not self.cu_servers:
            raise ValueError("layout needs at least one DU and one CU server")

    @classmethod
    def from_topology(
        cls,
        topo: Topology,
        n_services: int = 2,
        bbu_flavors: tuple[int, ...] = DEFAULT_FLAVORS,
        mec_flavors: tuple[tuple[int, ...], ...] = (),
    ) -> "ActionLayout":
        return cls(
            n_bs=len(topo.ru_ids),
            du_servers=topo.du_servers,
            cu_servers=topo.cu_servers,
            bbu_flavors=tuple(bbu_flavors),
            mec_flavors=tuple(tuple(f) for f in mec_flavors),
            n_services=n_services,
        )

    def per_bs_domains(self) -> list[tuple[str, tuple]]:
        doms: list[tuple[str, tuple]] = [
            ("split", self.splits),
            ("du_server", self.du_servers),
            ("cu_server", self.cu_servers),
            ("du_flavor", self.bbu_flavors),
            ("cu_flavor", self.bbu_flavors),
        ]
        for c in range(1, self.n_services + 1):
            doms.append((f"mec_flavor_{c}", self.mec_flavors[c - 1]))
        for c in range(1, self.n_services + 1):
            doms.append((f"mec_at_cu_{c}", (0, 1)))
        return doms

    @property
    def branches_per_bs(self) -> int:
        return 5 + 2 * self.n_services

    def branch_sizes(self) -> list[int]:
        per_bs = [len(dom) for _, dom in self.per_bs_domains()]
        return per_bs * self.n_bs

    def m_per_bs(self) -> list[int]:
        return [self.branches_per_bs] * self.n_bs

    def head_output_count(self) -> int:
        return sum(self.branch_sizes())

    def joint_cardinality(self) -> int:
        per_bs = math.prod(len(dom) for _, dom in self.per_bs_domains())
        return per_bs ** self.n_bs

    def action_to_indices(self, action: Action) -> np.ndarray:
        idx: list[int] = []
        for k in range(self.n_bs):
            values = self._bs_values(action, k)
            for (name, dom), val in zip(self.per_bs_domains(), values):
                try:
                    idx.append(dom.index(val))
                except ValueError:
                    raise ValueError(f"BS {k}: {name}={val!r} not in domain {dom}") from None
        return np.asarray(idx, dtype=np.int64)

    def indices_to_action(self, idx) -> Action:
        idx = list(idx)
        per = self.branches_per_bs
        if len(idx) != per * self.n_bs:
            raise ValueError(f"expected {per * self.n_bs} indices, got {len(idx)}")
        split, du_s, cu_s, du_f, cu_f, mec_f, mec_side = [], [], [], [], [], [], []
        doms = self.per_bs_domains()
        for k in range(self.n_bs):
            vals = [doms[j][1][idx[k * per + j]] for j in range(per)]
            split.append(vals[0])
            du_s.append(vals[1])
            cu_s.append(vals[2])
            du_f.append(vals[3])
            cu_f.append(vals[4])
            mec_f.append(tuple(vals[5:5 + self.n_services]))
            mec_side.append(tuple(vals[5 + self.n_services:]))
        return Action(
            split=tuple(split), du_server=tuple(du_s), cu_server=tuple(cu_s),
            du_flavor=tuple(du_f), cu_flavor=tuple(cu_f),
            mec_flavor=tuple(mec_f), mec_at_cu=tuple(mec_side),
        )

    def _bs_values(self, action: Action, k: int) -> list:
        return [
            action.split[k], action.du_server[k], action.cu_server[k],
            action.du_flavor[k], action.cu_flavor[k],
            *action.mec_flavor[k], *action.mec_at_cu[k],
        ]

    def validate(self, action: Action) -> None:
        self.action_to_indices(action)

    def default_initial_action(self) -> Action:
        """Start-of-episode configuration: first split, 1-RC flavors (or the
        smallest available), first servers, MEC with the DUs."""
        def pick(dom: tuple[int, ...]) -> int:
            return 1 if 1 in dom else dom[0]

        K = self.n_bs
        return Action(
            split=(self.splits[0],) * K,
            du_server=(self.du_servers[0],) * K,
            cu_server=(self.cu_servers[0],) * K,
            du_flavor=(pick(self.bbu_flavors),) * K,
            cu_flavor=(pick(self.bbu_flavors),) * K,
            mec_flavor=(tuple(pick(f) for f in self.mec_flavors),) * K,
            mec_at_cu=((0,) * self.n_services,) * K,
        )


def enumerate_actions(layout: ActionLayout, limit: int = 1_000_000):
    """Exhaustive, duplicate-free iterator over the joint action space.

    Only supported for single-BS layouts (oracle scale); refuses when the
    cardinality exceeds ``limit``.
    """
    if layout.n_bs != 1:
        raise ValueError("exhaustive enumeration is only supported for one BS")
    n = layout.joint_cardinality()
    if n > limit:
        raise ActionSpaceTooLarge(
            f"joint action space has {n} elements, above the limit {limit}"
        )
    domains = [dom for _, dom in layout.per_bs_domains()]
    per = layout.branches_per_bs
    for combo in itertools.product(*(range(len(d)) for d in domains)):
        yield layout.indices_to_action(list(combo[:per]))


class OranMecEnv:
    """One episode-scoped orchestration environment instance.

    Instances are independent; run any number in parallel with disjoint
    seeds.  Demands above the achievable cell rate are clipped at ingestion
    (error instead when ``strict_demand`` is set).
    """

    def __init__(
        self,
        topo: Topology,
        layout: ActionLayout,
        util_model: UtilizationModel,
        reward_cfg: RewardConfig | None = None,
        services: ServiceMix | None = None,
        initial_action: Action | None = None,
        strict_demand: bool = False,
    ):
        self.topo = topo
        self.layout = layout
        self.util = util_model
        self.reward_cfg = reward_cfg if reward_cfg is not None else RewardConfig()
        self.services = services if services is not None else ServiceMix(
            n_services=layout.n_services
        )
        if self.services.n_services != layout.n_services:
            raise ValueError("service mix and layout disagree on the class count")
        if util_model.n_services != layout.n_services:
            raise ValueError("utilization model and layout disagree on the class count")
        if len(topo.ru_ids) != layout.n_bs:
            raise ValueError("layout BS count must match the topology's RU count")
        for c in self.services.inelastic:
            if c not in self.reward_cfg.delay_threshold:
                raise ValueError(f"inelastic class {c} needs a delay threshold")
        self.initial_action = (
            initial_action if initial_action is not None
            else layout.default_initial_action()
        )
        self.layout.validate(self.initial_action)
        self.strict_demand = strict_demand
        self._demands: list[DemandSlot] | None = None
        self._state: State | None = None

    # -- episode control -------------------------------------------------

    def reset(self, episode_demands: list[DemandSlot], noise_seed: int | None = None) -> State:
        if not episode_demands:
            raise ValueError("episode demand sequence must be nonempty")
        self._demands = [self._ingest(slot) for slot in episode_demands]
        if noise_seed is not None:
            self.util.reseed(noise_seed)
        self._state = State(0, self._demands[0].demand, self.initial_action)
        return self._state

    def _ingest(self, slot: DemandSlot) -> DemandSlot:
        expected = (self.layout.n_bs, 1 + self.layout.n_services)
        if slot.demand.shape != expected:
            raise ValueError(f"demand slot shape {slot.demand.shape}, expected {expected}")
        if np.any(slot.demand < 0):
            raise ValueError(f"slot {slot.t}: negative demand")
        if np.any(slot.demand > DEMAND_CAP_GBPS):
            if self.strict_demand:
                raise splits_mod.DemandCapError(
                    f"slot {slot.t}: demand above {DEMAND_CAP_GBPS} Gbps"
                )
            logger.warning("slot %d: demands clipped to %.1f Gbps", slot.t, DEMAND_CAP_GBPS)
            return DemandSlot(slot.t, np.minimum(slot.demand, DEMAND_CAP_GBPS))
        return slot

    @property
    def horizon(self) -> int:
        if self._demands is None:
            raise RuntimeError("reset() the environment first")
        return len(self._demands)

    @property
    def state(self) -> State:
        if self._state is None:
            raise RuntimeError("reset() the environment first")
        return self._state

    def step(self, action: Action) -> tuple[State, float, CostBreakdown, bool]:
        state = self.state
        if state.t >= self.horizon:
            raise EpisodeExhausted(f"episode of {self.horizon} slots is exhausted")
        self.layout.validate(action)
        costs = self.compute_costs(state, action)
        terminal = state.t == self.horizon - 1
        next_demand = self._demands[min(state.t + 1, self.horizon - 1)].demand
        next_state = State(state.t + 1, next_demand, action)
        self._state = next_state
        return next_state, costs.reward, costs, terminal

    # -- cost model -------------------------------------------------------

    def compute_costs(self, state: State, action: Action) -> CostBreakdown:
        cfg = self.reward_cfg
        lay = self.layout
        prev = state.prev
        out = CostBreakdown()
        elastic_delay = 0.0
        server_load: dict[int, float] = {}

        for k in range(lay.n_bs):
            split = get_split(action.split[k])
            x, y = action.du_flavor[k], action.cu_flavor[k]
            z = action.mec_flavor[k]
            zeta = action.mec_at_cu[k]
            xp, yp = prev.du_flavor[k], prev.cu_flavor[k]
            zp, zetap = prev.mec_flavor[k], prev.mec_at_cu[k]
            lam0 = state.demand[k, 0]

            x_hat, y_hat = self.util.bbu_utilization(split, lam0)
            z_hat = [
                self.util.mec_utilization(c, state.demand[k, c])
                for c in range(1, lay.n_services + 1)
            ]

            du_side = x + sum((1 - zeta[c]) * z[c] for c in range(lay.n_services))
            cu_side = y + sum(zeta[c] * z[c] for c in range(lay.n_services))
            out.compute_du_mec += cfg.kappa_dm * du_side
            out.compute_cu_mec += cfg.kappa_cm * cu_side

            shortfall = max(0.0, x_hat - x, y_hat - y)
            shortfall += sum(
                max(0.0, z_hat[c] - z[c]) for c in range(lay.n_services)
            )
            out.sla_underprovision += cfg.kappa_d * shortfall

            alpha, beta = action.du_server[k], action.cu_server[k]
            server_load[alpha] = server_load.get(alpha, 0.0) + du_side
            server_load[beta] = server_load.get(beta, 0.0) + cu_side

            entry = self.topo.path_entry(self.topo.ru_ids[k], alpha, beta)
            hls_req, lls_req = splits_mod.delay_requirements(split)
            out.sla_split_delay += cfg.kappa_d * max(
                0.0, entry.fh_delay_ms - lls_req, entry.mh_delay_ms - hls_req
            )

            for c in range(1, lay.n_services + 1):
                d_kc = self._service_delay(
                    state.demand[k, c], z[c - 1], z_hat[c - 1], zeta[c - 1],
                    entry.fh_delay_ms, entry.mh_delay_ms, alpha, beta,
                )
                if c in self.services.inelastic:
                    out.sla_inelastic_delay += cfg.kappa_d * max(
                        0.0, d_kc - cfg.delay_threshold[c]
                    )
                else:
                    elastic_delay += d_kc

            dz = [z[c] - zp[c] for c in range(lay.n_services)]
            out.instantiation += cfg.kappa_i * (
                max(0.0, x - xp) + max(0.0, y - yp) + sum(max(0.0, d) for d in dz)
            )
            out.reconfig_flavor += cfg.kappa_r * (
                abs(x - xp) + abs(y - yp) + sum(abs(d) for d in dz)
            )
            out.reconfig_mec_migration += cfg.kappa_r * sum(
                z[c] * abs(zeta[c] - zetap[c]) for c in range(lay.n_services)
            )
            moved = du_side * (alpha != prev.du_server[k]) + cu_side * (
                beta != prev.cu_server[k]
            )
            out.reconfig_server_migration += cfg.kappa_r * moved

            fh, mh, bh = splits_mod.segment_loads(split, lam0, strict=self.strict_demand)
            out.routing += cfg.kappa_h * (fh + mh + bh)

        for server, load in server_load.items():
            out.sla_server_capacity += cfg.kappa_d * max(
                0.0, load - self.topo.capacity_rc[server]
            )

        out.elastic_delay = elastic_delay
        out.total = sum(getattr(out, name) for name in CostBreakdown._ITEMS)
        out.reward = -out.total - cfg.delay_weight * cfg.delay_slope * elastic_delay
        return out

    def _service_delay(
        self, lam, z, z_hat, at_cu, fh_delay, mh_delay, alpha, beta
    ) -> float:
        """Routing plus processing delay for one MEC flow.

        A demanded service with no compute at all gets a large finite
        sentinel instead of a division by zero.
        """
        cfg = self.reward_cfg
        host = beta if at_cu else alpha
        d_pc = fh_delay + (mh_delay if at_cu else 0.0)
        if lam > 0 and z == 0:
            logger.debug(
                "service with %.3f Gbps demand but no compute; delay set to %.0f",
                lam, cfg.max_delay_ms,
            )
            return cfg.max_delay_ms
        processing = 0.0 if lam == 0 else cfg.delta1 * lam * self.topo.server_rate[host] / z
        congestion = cfg.delta2 * (z_hat / self.topo.capacity_rc[host]) ** 2
        return lam * d_pc + processing + congestion

    # -- observation encoding ---------------------------------------------

    @property
    def state_dim(self) -> int:
        lay = self.layout
        per_bs = (
            (1 + lay.n_services)
            + len(lay.splits) + len(lay.du_servers) + len(lay.cu_servers)
            + 2 * lay.n_services          # MEC side one-hots
            + 2 + lay.n_services          # scaled flavors
        )
        return lay.n_bs * per_bs

    def encode_state(self, state: State) -> np.ndarray:
        """Flat observation: demands scaled by the cell-rate cap, categorical
        fields one-hot, flavors scaled by their largest value."""
        lay = self.layout
        prev = state.prev
        bbu_scale = max(max(lay.bbu_flavors), 1)
        mec_scale = [max(max(f), 1) for f in lay.mec_flavors]
        vec: list[float] = []
        for k in range(lay.n_bs):
            vec.extend(state.demand[k] / DEMAND_CAP_GBPS)
            vec.extend(_one_hot(lay.splits.index(prev.split[k]), len(lay.splits)))
            vec.extend(_one_hot(lay.du_servers.index(prev.du_server[k]), len(lay.du_servers)))
            vec.extend(_one_hot(lay.cu_servers.index(prev.cu_server[k]), len(lay.cu_servers)))
            for c in range(lay.n_services):
                vec.extend(_one_hot(prev.mec_at_cu[k][c], 2))
            vec.append(prev.du_flavor[k] / bbu_scale)
            vec.append(prev.cu_flavor[k] / bbu_scale)
            for c in range(lay.n_services):
                vec.append(prev.mec_flavor[k][c] / mec_scale[c])
        return np.asarray(vec, dtype=np.float64)

    def decode_prev_action(self, vec: np.ndarray) -> Action:
        """Recover the previous-configuration fields from an encoded state."""
        lay = self.layout
        bbu_scale = max(max(lay.bbu_flavors), 1)
        mec_scale = [max(max(f), 1) for f in lay.mec_flavors]
        per_bs = self.state_dim // lay.n_bs
        split, du_s, cu_s, du_f, cu_f, mec_f, mec_side = [], [], [], [], [], [], []
        for k in range(lay.n_bs):
            block = vec[k * per_bs:(k + 1) * per_bs]
            pos = 1 + lay.n_services
            split.append(lay.splits[int(np.argmax(block[pos:pos + len(lay.splits)]))])
            pos += len(lay.splits)
            du_s.append(lay.du_servers[int(np.argmax(block[pos:pos + len(lay.du_servers)]))])
            pos += len(lay.du_servers)
            cu_s.append(lay.cu_servers[int(np.argmax(block[pos:pos + len(lay.cu_servers)]))])
            pos += len(lay.cu_servers)
            sides = []
            for _ in range(lay.n_services):
                sides.append(int(np.argmax(block[pos:pos + 2])))
                pos += 2
            mec_side.append(tuple(sides))
            du_f.append(round(float(block[pos]) * bbu_scale))
            cu_f.append(round(float(block[pos + 1]) * bbu_scale))
            pos += 2
            mec_f.append(tuple(
                round(float(block[pos + c]) * mec_scale[c]) for c in range(lay.n_services)
            ))
        return Action(
            split=tuple(split), du_server=tuple(du_s), cu_server=tuple(cu_s),
            du_flavor=tuple(du_f), cu_flavor=tuple(cu_f),
            mec_flavor=tuple(mec_f), mec_at_cu=tuple(mec_side),
        )


def _one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v
