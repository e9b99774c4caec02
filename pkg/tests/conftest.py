import numpy as np
import pytest

from oranmec.env import ActionLayout, OranMecEnv, RewardConfig, ServiceMix
from oranmec.topology import build_topology
from oranmec.workload import UtilizationModel, constant_demands

# Five-node cluster: one RU, two far-edge DU hosts, one CU host, the core.
# Server 3 is reachable only over a slow fronthaul link and server 3's
# compute is deliberately tiny so capacity/delay violations are reachable.
COST_TOPOLOGY = {
    "nodes": [
        {"id": 0, "kind": "epc"},
        {"id": 1, "kind": "ru"},
        {"id": 2, "kind": "du_server"},
        {"id": 3, "kind": "du_server"},
        {"id": 4, "kind": "cu_server"},
    ],
    "links": [
        {"src": 1, "dst": 2, "capacity_gbps": 50.0, "delay_ms": 0.125, "weight": 0.01},
        {"src": 1, "dst": 3, "capacity_gbps": 50.0, "delay_ms": 0.5, "weight": 0.03},
        {"src": 2, "dst": 4, "capacity_gbps": 50.0, "delay_ms": 0.0625, "weight": 0.01},
        {"src": 3, "dst": 4, "capacity_gbps": 50.0, "delay_ms": 0.0625, "weight": 0.02},
        {"src": 4, "dst": 0, "capacity_gbps": 50.0, "delay_ms": 0.03125, "weight": 0.01},
    ],
    "du_servers": [2, 3],
    "cu_servers": [4],
    "capacity_rc": {2: 20, 3: 4, 4: 100},
    "server_rate": {2: 1.0, 3: 2.0, 4: 1.0},
}

# The learning toy: same shape but symmetric fast links everywhere.
TOY_TOPOLOGY = {
    "nodes": COST_TOPOLOGY["nodes"],
    "links": [
        {"src": 1, "dst": 2, "capacity_gbps": 50.0, "delay_ms": 0.05, "weight": 0.01},
        {"src": 1, "dst": 3, "capacity_gbps": 50.0, "delay_ms": 0.05, "weight": 0.02},
        {"src": 2, "dst": 4, "capacity_gbps": 50.0, "delay_ms": 0.05, "weight": 0.01},
        {"src": 3, "dst": 4, "capacity_gbps": 50.0, "delay_ms": 0.05, "weight": 0.01},
        {"src": 4, "dst": 0, "capacity_gbps": 50.0, "delay_ms": 0.05, "weight": 0.01},
    ],
    "du_servers": [2, 3],
    "cu_servers": [4],
}


def make_cost_env(
    bbu_base=0.5,
    bbu_slope=1.5,
    mec_base=0.2,
    mec_slope=1.0,
    n_services=2,
    services=None,
    reward=None,
    topology=None,
):
    topo = build_topology(topology or COST_TOPOLOGY)
    layout = ActionLayout.from_topology(topo, n_services=n_services)
    util = UtilizationModel(
        bbu_base=bbu_base,
        bbu_slope=bbu_slope,
        mec_base=mec_base,
        mec_slope=mec_slope,
        n_services=n_services,
    )
    if services is None:
        services = ServiceMix(n_services=n_services) if n_services == 2 else None
    return OranMecEnv(topo, layout, util, reward, services)


def make_toy_env():
    """Small noise-free environment the learning acceptance tests use."""
    topo = build_topology(TOY_TOPOLOGY)
    layout = ActionLayout.from_topology(topo, n_services=2, bbu_flavors=(0, 1, 2, 3))
    reward = RewardConfig(
        kappa_dm=0.05, kappa_cm=0.025, kappa_h=2.0,
        kappa_i=0.01, kappa_r=0.01, max_delay_ms=40.0,
    )
    util = UtilizationModel(
        bbu_base=0.2, bbu_slope=1.2, mec_base=0.2, mec_slope=1.0, n_services=2
    )
    return OranMecEnv(topo, layout, util, reward, ServiceMix())


def toy_demands(slots=144):
    return constant_demands(slots, 1, 0.5, [0.6, 0.6])


def toy_agent_config(seed, mode="bayes", **overrides):
    from oranmec.agents import AgentConfig

    base = dict(
        mode=mode,
        gamma=0.5,
        lr=1e-3,
        T_p=36,
        T_g=72,
        T_s=8,
        sigma_eps=3.0,
        prior_sigma=9.0,
        trunk_widths=(64, 64, 64),
        feature_dim=48,
        blr_dataset_cap=1500,
        seed=seed,
    )
    if mode == "egreedy":
        base.update(eps_max=1.0, eps_min=0.05, eps_decay_episodes=50)
    base.update(overrides)
    return AgentConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
