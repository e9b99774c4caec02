"""Hand-computed scenarios for the slot cost model.

Every scenario freezes the full itemized breakdown; expected numbers are
derived by hand from the cost definitions (working shown in comments) and
asserted to 1e-12.  The shared topology routes are:

    via DU host 2: FH 0.125 ms, MH 0.0625 ms, BH 0.03125 ms
    via DU host 3: FH 0.5 ms (breaks the 0.25 ms low-layer budget)

Host compute capacities are {2: 20, 3: 4, 4: 100} RC and host 3 processes
2 units per cycle (others 1).  Coefficients are the defaults:
kappa_dm 0.25, kappa_cm 0.125, kappa_d 5, kappa_i = kappa_r = 0.05,
kappa_h 1, delay weight and slope 1, delta1 = delta2 = 1.
"""
import numpy as np
import pytest

from oranmec.env import (
    Action,
    ActionLayout,
    OranMecEnv,
    RewardConfig,
    ServiceMix,
    State,
    enumerate_actions,
)
from oranmec.topology import build_topology
from oranmec.workload import UtilizationModel
from tests.conftest import COST_TOPOLOGY

APPROX = dict(abs=1e-12)

# single-route variant used by the delay-formula and greedy scenarios
SINGLE_ROUTE_TOPOLOGY = {
    "nodes": [
        {"id": 0, "kind": "epc"},
        {"id": 1, "kind": "ru"},
        {"id": 2, "kind": "du_server"},
        {"id": 4, "kind": "cu_server"},
    ],
    "links": [
        {"src": 1, "dst": 2, "capacity_gbps": 50.0, "delay_ms": 0.125, "weight": 0.01},
        {"src": 2, "dst": 4, "capacity_gbps": 50.0, "delay_ms": 0.0625, "weight": 0.01},
        {"src": 4, "dst": 0, "capacity_gbps": 50.0, "delay_ms": 0.03125, "weight": 0.01},
    ],
    "du_servers": [2],
    "cu_servers": [4],
    "capacity_rc": {2: 20, 4: 100},
}


def act(split="S1", du=2, cu=4, x=0, y=0, z=(0, 0), zeta=(0, 0)):
    return Action(
        split=(split,), du_server=(du,), cu_server=(cu,),
        du_flavor=(x,), cu_flavor=(y,),
        mec_flavor=(tuple(z),), mec_at_cu=(tuple(zeta),),
    )


def build_env(
    topology=COST_TOPOLOGY,
    bbu=(0.5, 1.5),
    mec=(0.2, 1.0),
    n_services=2,
    services=None,
    reward=None,
    bbu_flavors=tuple(range(16)),
):
    topo = build_topology(topology)
    layout = ActionLayout.from_topology(
        topo, n_services=n_services, bbu_flavors=bbu_flavors
    )
    util = UtilizationModel(
        bbu_base=bbu[0], bbu_slope=bbu[1], mec_base=mec[0], mec_slope=mec[1],
        n_services=n_services,
    )
    return OranMecEnv(topo, layout, util, reward, services)


def state_for(env, demand, prev):
    return State(0, np.asarray([demand], dtype=float), prev)


def assert_breakdown(costs, expected):
    got = costs.as_dict()
    for key, val in expected.items():
        assert got[key] == pytest.approx(val, **APPROX), key
    assert costs.total == pytest.approx(
        sum(v for k, v in expected.items()
            if k not in ("total", "reward", "elastic_delay")),
        **APPROX,
    )


class TestHandScenarios:
    def test_sc1_zero_demand_zero_flavors_is_routing_only(self):
        # S1 with no demand: FH carries the constant 10.1, MH/BH nothing.
        env = build_env(bbu=(0.0, 0.0), mec=(0.0, 0.0))
        a = act()
        costs = env.compute_costs(state_for(env, (0, 0, 0), a), a)
        assert_breakdown(costs, {
            "compute_du_mec": 0.0, "compute_cu_mec": 0.0,
            "sla_underprovision": 0.0, "sla_server_capacity": 0.0,
            "sla_split_delay": 0.0, "sla_inelastic_delay": 0.0,
            "instantiation": 0.0, "reconfig_flavor": 0.0,
            "reconfig_mec_migration": 0.0, "reconfig_server_migration": 0.0,
            "routing": 10.1, "elastic_delay": 0.0,
            "total": 10.1, "reward": -10.1,
        })

    def test_sc2_underprovision_item(self):
        # BBU total = 0.75 + 1.5*2 = 3.75 -> du 3.0, cu 0.75 under S1 shares.
        # shortfall = max(0, 3-2, 0.75-2) + max(0, 2-1) + max(0, 0-0) = 2
        # item = 5 * 2 = 10
        env = build_env(bbu=(0.75, 1.5), mec=(0.0, 1.0))
        a = act(x=2, y=2, z=(1, 0))
        costs = env.compute_costs(state_for(env, (2, 2, 0), a), a)
        assert costs.sla_underprovision == pytest.approx(10.0, **APPROX)
        # inelastic: D = 2*0.125 + 2*1/1 + (2/20)^2 = 2.26 -> 5*(2.26-1)
        assert costs.sla_inelastic_delay == pytest.approx(6.3, **APPROX)
        assert_breakdown(costs, {
            "compute_du_mec": 0.75,       # 0.25*(2 + 1)
            "compute_cu_mec": 0.25,       # 0.125*2
            "sla_underprovision": 10.0,
            "sla_server_capacity": 0.0, "sla_split_delay": 0.0,
            "sla_inelastic_delay": 6.3,
            "instantiation": 0.0, "reconfig_flavor": 0.0,
            "reconfig_mec_migration": 0.0, "reconfig_server_migration": 0.0,
            "routing": 14.1,              # 10.1 + 2 + 2
            "elastic_delay": 0.0,
            "total": 31.4, "reward": -31.4,
        })

    def test_sc3_service_delay_formula(self):
        # one elastic class: demand 1, flavor 2, actual draw 1 RC, host 2
        # (P=20, rate 1), 0.001 ms fronthaul:
        # D = 1*0.001 + 1*(1*1/2) + (1/20)^2 = 0.5035
        topo = dict(SINGLE_ROUTE_TOPOLOGY)
        topo["links"] = [dict(l) for l in SINGLE_ROUTE_TOPOLOGY["links"]]
        topo["links"][0]["delay_ms"] = 0.001
        env = build_env(
            topology=topo, bbu=(0.0, 0.0), mec=(0.0, 1.0), n_services=1,
            services=ServiceMix(n_services=1, inelastic=(), elastic=(1,)),
        )
        a = Action(("S1",), (2,), (4,), (0,), (0,), ((2,),), ((0,),))
        costs = env.compute_costs(State(0, np.array([[0.0, 1.0]]), a), a)
        assert costs.elastic_delay == pytest.approx(0.5035, **APPROX)
        assert costs.compute_du_mec == pytest.approx(0.5, **APPROX)
        assert costs.routing == pytest.approx(10.1, **APPROX)
        assert costs.total == pytest.approx(10.6, **APPROX)
        assert costs.reward == pytest.approx(-11.1035, **APPROX)

    def test_sc4_low_layer_deadline_violation(self):
        # DU host 3 sits behind a 0.5 ms fronthaul; S1's low-layer budget is
        # 0.25 ms -> 5 * 0.25 = 1.25
        env = build_env()
        a = act(du=3, x=2, y=1, z=(1, 1))
        costs = env.compute_costs(state_for(env, (1, 0, 0), a), a)
        assert costs.sla_split_delay == pytest.approx(1.25, **APPROX)
        assert costs.sla_underprovision == 0.0      # 1.6 <= 2, 0.4 <= 1
        assert costs.sla_server_capacity == 0.0     # load 4 == capacity 4
        # per-service congestion term only: (0.2/4)^2 each
        assert costs.elastic_delay == pytest.approx(0.0025, **APPROX)
        assert costs.routing == pytest.approx(12.1, **APPROX)
        assert costs.total == pytest.approx(14.475, **APPROX)
        assert costs.reward == pytest.approx(-14.4775, **APPROX)

    def test_sc4b_integrated_stack_has_no_midhaul_deadline(self):
        # same placement under S4: the high-layer budget is unbounded, the
        # low-layer violation is unchanged; fronthaul now carries 157.3
        env = build_env()
        a = act(split="S4", du=3, x=2, y=1, z=(1, 1))
        costs = env.compute_costs(state_for(env, (1, 0, 0), a), a)
        assert costs.sla_split_delay == pytest.approx(1.25, **APPROX)
        assert costs.routing == pytest.approx(159.3, **APPROX)
        assert costs.sla_underprovision == 0.0      # du draw 2.0 <= 2
        assert costs.reward == pytest.approx(-161.6775, **APPROX)

    def test_sc5_inelastic_deadline_miss(self):
        # class 1 hosted CU-side: D = 1*0.1875 + 1*(1/1) + (1.2/100)^2
        #                           = 1.187644; 5*(D-1) = 0.93822
        env = build_env()
        a = act(x=1, y=1, z=(1, 1), zeta=(1, 0))
        costs = env.compute_costs(state_for(env, (0, 1, 0), a), a)
        assert costs.sla_inelastic_delay == pytest.approx(0.93822, **APPROX)
        assert_breakdown(costs, {
            "compute_du_mec": 0.5,        # 0.25*(1 + z2 at DU)
            "compute_cu_mec": 0.25,       # 0.125*(1 + z1 at CU)
            "sla_underprovision": 1.0,    # 5*max(0, 1.2 - 1)
            "sla_server_capacity": 0.0, "sla_split_delay": 0.0,
            "sla_inelastic_delay": 0.93822,
            "instantiation": 0.0, "reconfig_flavor": 0.0,
            "reconfig_mec_migration": 0.0, "reconfig_server_migration": 0.0,
            "routing": 10.1,
            "elastic_delay": 0.0001,      # (0.2/20)^2
            "total": 12.78822, "reward": -12.78832,
        })

    def test_sc6_server_capacity_overflow(self):
        # host 3 carries 3 + 2 + 2 = 7 RC against capacity 4 -> 5*3 = 15
        env = build_env()
        a = act(du=3, x=3, y=0, z=(2, 2))
        costs = env.compute_costs(state_for(env, (0, 0, 0), a), a)
        assert costs.sla_server_capacity == pytest.approx(15.0, **APPROX)
        assert costs.sla_split_delay == pytest.approx(1.25, **APPROX)
        assert costs.sla_underprovision == pytest.approx(0.5, **APPROX)  # cu draw 0.1 vs y=0
        assert costs.compute_du_mec == pytest.approx(1.75, **APPROX)
        assert costs.total == pytest.approx(28.6, **APPROX)
        assert costs.reward == pytest.approx(-28.6025, **APPROX)

    def test_sc7_instantiation_and_flavor_reconfig(self):
        # (x,y,z) from (1,1,(1,1)) to (3,0,(2,0)):
        # growth 2+0+1 -> 0.05*3 = 0.15; churn 2+1+1+1 = 5 -> 0.05*5 = 0.25
        env = build_env(bbu=(0.0, 0.0), mec=(0.0, 0.0))
        prev = act(x=1, y=1, z=(1, 1))
        a = act(x=3, y=0, z=(2, 0))
        costs = env.compute_costs(state_for(env, (0, 0, 0), prev), a)
        assert costs.instantiation == pytest.approx(0.15, **APPROX)
        assert costs.reconfig_flavor == pytest.approx(0.25, **APPROX)
        assert costs.compute_du_mec == pytest.approx(1.25, **APPROX)
        assert costs.total == pytest.approx(11.75, **APPROX)
        assert costs.reward == pytest.approx(-11.75, **APPROX)

    def test_sc8_mec_migration_charges_new_size(self):
        # class 1 moves DU -> CU carrying 2 RC: 0.05 * 2 = 0.1
        env = build_env(bbu=(0.0, 0.0), mec=(0.0, 0.0))
        prev = act(z=(2, 3), zeta=(0, 1))
        a = act(z=(2, 3), zeta=(1, 1))
        costs = env.compute_costs(state_for(env, (0, 0, 0), prev), a)
        assert costs.reconfig_mec_migration == pytest.approx(0.1, **APPROX)
        assert costs.compute_cu_mec == pytest.approx(0.625, **APPROX)  # 0.125*(0+2+3)
        assert costs.compute_du_mec == 0.0
        assert costs.total == pytest.approx(10.825, **APPROX)

    def test_sc9_server_migration_charges_instance_size(self):
        # DU instance of 2 + DU-side MEC of 1 moves host 2 -> 3: 0.05*3
        env = build_env(bbu=(0.0, 0.0), mec=(0.0, 0.0))
        prev = act(du=2, x=2, y=1, z=(1, 1), zeta=(0, 1))
        a = act(du=3, x=2, y=1, z=(1, 1), zeta=(0, 1))
        costs = env.compute_costs(state_for(env, (0, 0, 0), prev), a)
        assert costs.reconfig_server_migration == pytest.approx(0.15, **APPROX)
        assert costs.sla_split_delay == pytest.approx(1.25, **APPROX)
        assert costs.total == pytest.approx(12.5, **APPROX)

    def test_sc10_missing_compute_sentinel(self):
        # elastic demand with zero flavor: delay pinned at the 1000 sentinel
        env = build_env()
        a = act(x=1, y=1, z=(1, 0))
        costs = env.compute_costs(state_for(env, (0, 0, 1), a), a)
        assert costs.elastic_delay == pytest.approx(1000.0, **APPROX)
        assert costs.sla_underprovision == pytest.approx(6.0, **APPROX)  # 5*1.2
        assert costs.total == pytest.approx(16.725, **APPROX)
        assert costs.reward == pytest.approx(-1016.725, **APPROX)

    def test_sc11_midhaul_load_follows_split(self):
        # S3 at 2 Gbps: FH 10.1, MH 1.02*2 + 0.5 = 2.54, BH 2
        env = build_env(bbu=(0.0, 0.0), mec=(0.0, 0.0))
        a = act(split="S3", x=3, y=2)
        costs = env.compute_costs(state_for(env, (2, 0, 0), a), a)
        assert costs.routing == pytest.approx(14.64, **APPROX)
        assert costs.total == pytest.approx(15.64, **APPROX)

    def test_sc12_kitchen_sink_consistency(self):
        env = build_env()
        prev = act(x=1, y=1, z=(1, 1))
        a = act(split="S2", du=3, x=2, y=1, z=(2, 1), zeta=(1, 0))
        costs = env.compute_costs(state_for(env, (1.5, 0.5, 0.5), prev), a)
        assert costs.instantiation == pytest.approx(0.1, **APPROX)       # dx=1, dz1=1
        assert costs.reconfig_flavor == pytest.approx(0.1, **APPROX)
        assert costs.reconfig_mec_migration == pytest.approx(0.1, **APPROX)   # 2 RC flips
        assert costs.reconfig_server_migration == pytest.approx(0.15, **APPROX)  # 2 + z2
        items = [
            costs.compute_du_mec, costs.compute_cu_mec, costs.sla_underprovision,
            costs.sla_server_capacity, costs.sla_split_delay,
            costs.sla_inelastic_delay, costs.instantiation, costs.reconfig_flavor,
            costs.reconfig_mec_migration, costs.reconfig_server_migration,
            costs.routing,
        ]
        assert all(v >= 0 for v in items)
        assert costs.total == pytest.approx(sum(items), **APPROX)
        assert costs.reward == pytest.approx(-costs.total - costs.elastic_delay, **APPROX)


class TestCostProperties:
    def _random_action(self, layout, rng):
        idx = [rng.integers(n) for n in layout.branch_sizes()]
        return layout.indices_to_action(idx)

    def test_items_nonnegative_and_reward_nonpositive(self, rng):
        env = build_env()
        for _ in range(200):
            prev = self._random_action(env.layout, rng)
            a = self._random_action(env.layout, rng)
            demand = rng.uniform(0, 4, size=3)
            costs = env.compute_costs(State(0, demand[None, :], prev), a)
            assert all(v >= 0 for v in costs.as_dict().values() if v is not costs.reward)
            assert costs.reward <= 0

    def test_unchanged_action_has_no_change_costs(self, rng):
        env = build_env()
        for _ in range(100):
            a = self._random_action(env.layout, rng)
            demand = rng.uniform(0, 4, size=3)
            costs = env.compute_costs(State(0, demand[None, :], a), a)
            assert costs.instantiation == 0.0
            assert costs.reconfig_flavor == 0.0
            assert costs.reconfig_mec_migration == 0.0
            assert costs.reconfig_server_migration == 0.0

    def test_penalties_zero_when_well_provisioned(self):
        env = build_env()
        a = act(x=4, y=2, z=(2, 2))       # draws: 1.6/0.4 BBU, 1.2 MEC
        costs = env.compute_costs(state_for(env, (1, 1, 1), a), a)
        assert costs.penalty_total == 0.0

    def test_service_delay_monotone_in_flavor(self):
        env = build_env()
        delays = []
        for z in range(1, 6):
            a = act(x=2, y=1, z=(1, z))
            costs = env.compute_costs(state_for(env, (0, 0, 2), a), a)
            delays.append(costs.elastic_delay)
        assert all(a >= b for a, b in zip(delays, delays[1:]))

    def test_service_delay_monotone_in_demand(self):
        env = build_env()
        a = act(x=2, y=1, z=(1, 2))
        delays = [
            env.compute_costs(state_for(env, (0, 0, lam), a), a).elastic_delay
            for lam in np.linspace(0.1, 4.0, 8)
        ]
        assert all(a <= b for a, b in zip(delays, delays[1:]))


class TestGreedyOneStepOracle:
    """Exhaustive one-step argmax versus hand-computed optima."""

    def _build(self, bbu, mec, prev):
        topo = build_topology(SINGLE_ROUTE_TOPOLOGY)
        layout = ActionLayout.from_topology(
            topo, n_services=1, bbu_flavors=(0, 1, 2, 3)
        )
        util = UtilizationModel(
            bbu_base=bbu[0], bbu_slope=bbu[1], mec_base=mec[0], mec_slope=mec[1],
            n_services=1,
        )
        env = OranMecEnv(
            topo, layout, util,
            services=ServiceMix(n_services=1, inelastic=(), elastic=(1,)),
            initial_action=prev,
        )
        return env

    def _best(self, env, demand, prev):
        state = State(0, np.asarray([demand], dtype=float), prev)
        best_action, best_reward = None, -np.inf
        for a in enumerate_actions(env.layout):
            r = env.compute_costs(state, a).reward
            if r > best_reward:
                best_action, best_reward = a, r
        return best_action, best_reward

    def test_idle_network_drops_all_flavors(self):
        # keeping the 1-RC instances costs 0.625/slot; releasing them costs
        # a one-off 0.05*3 churn -> release everything, keep the cheap split
        prev = Action(("S1",), (2,), (4,), (1,), (1,), ((1,),), ((0,),))
        env = self._build((0.0, 0.0), (0.0, 0.0), prev)
        best, reward = self._best(env, (0.0, 0.0), prev)
        assert best == Action(("S1",), (2,), (4,), (0,), (0,), ((0,),), ((0,),))
        assert reward == pytest.approx(-10.25, **APPROX)

    def test_loaded_bs_scales_up_and_centralizes_mec(self):
        # BBU draw 3.5 (du 2.8 / cu 0.7 under S1) forces x=3, y=1; the MEC
        # service is cheapest at the CU with 2 RC:
        #   J = 0.75 + 0.375 + 14.1 + 0.05 + 0.05 + 0.1 = 15.425
        #   D = 0.1875 + 0.5 + 0.0001 -> reward -16.1126
        prev = Action(("S1",), (2,), (4,), (3,), (1,), ((1,),), ((0,),))
        env = self._build((0.5, 1.5), (0.0, 1.0), prev)
        best, reward = self._best(env, (2.0, 1.0), prev)
        assert best == Action(("S1",), (2,), (4,), (3,), (1,), ((2,),), ((1,),))
        assert reward == pytest.approx(-16.1126, **APPROX)

    def test_mec_only_load_migrates_to_cu(self):
        # moving the 2-RC service to the cheaper CU host pays off even with
        # the migration charge: reward -11.1376 vs -11.2275 for staying
        prev = Action(("S1",), (2,), (4,), (0,), (0,), ((2,),), ((0,),))
        env = self._build((0.0, 0.0), (0.0, 1.0), prev)
        best, reward = self._best(env, (0.0, 1.0), prev)
        assert best == Action(("S1",), (2,), (4,), (0,), (0,), ((2,),), ((1,),))
        assert reward == pytest.approx(-11.1376, **APPROX)
