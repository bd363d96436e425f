import copy

import pytest

from edgemigsim.model import ContainerInstance, Resources, load_scenario
from edgemigsim.planner import Candidate, PlacementProblem

BUNDLED_DIR = None


def scenario_path(name: str) -> str:
    from edgemigsim.cli import _resolve_scenario

    return _resolve_scenario(name)


def base_doc() -> dict:
    """Small two-BS corridor with deterministic radio, for unit tests."""
    cap = {"cpu_millicores": 8000, "memory_mb": 16000, "storage_mb": 256000,
           "net_io_mbps": 1000}
    return {
        "sim": {"duration_s": 100, "seed": 1, "noise_sigma": 0.0,
                "handover_duration_s": 0.5, "probe_warmup_s": 10},
        "radio": {"shadowing_sigma_db": 0.0},
        "planner": {"downtime_weight": 100.0, "gain_window_s": 30.0},
        "orchestrator": {"margin": 0.10, "horizon_dt_s": 30.0},
        "topology": {
            "base_stations": [
                {"id": "bs1", "position": [0.0, 0.0], "server": "edge1"},
                {"id": "bs2", "position": [100.0, 0.0], "server": "edge2"},
            ],
            "servers": [
                {"id": "edge1", "tier": "edge-L1", "position": [0.0, 0.0],
                 "compute_power": 2000.0, "checkpoint_coeff": 1.0,
                 "restore_coeff": 1.0, "capacity": dict(cap)},
                {"id": "edge2", "tier": "edge-L1", "position": [100.0, 0.0],
                 "compute_power": 2000.0, "checkpoint_coeff": 1.0,
                 "restore_coeff": 1.0, "capacity": dict(cap)},
                {"id": "cloud", "tier": "cloud", "position": [50.0, 50000.0],
                 "compute_power": 4000.0, "checkpoint_coeff": 1.0,
                 "restore_coeff": 1.0, "capacity": dict(cap)},
            ],
        },
        "links": {
            "local_bw_mbps": 1000.0,
            "entries": [
                {"a": "edge1", "b": "edge2", "bw_mbps": 100.0, "latency_ms": 50.0},
                {"a": "edge1", "b": "cloud", "bw_mbps": 75.0, "latency_ms": 150.0},
                {"a": "edge2", "b": "cloud", "bw_mbps": 75.0, "latency_ms": 150.0},
            ],
        },
        "apps": [
            {"name": "app", "image_mb": 100.0, "checkpoint_mb": 10.0, "delta_mb": 1.0,
             "base_proc_delay_ms": 100.0, "ref_compute_power": 2000.0,
             "demand": {"cpu_millicores": 1000, "memory_mb": 2000,
                        "storage_mb": 4000, "net_io_mbps": 50}},
        ],
        "users": [
            {"id": "u1", "app": "app", "speed_mps": 1.0,
             "waypoints": [[0.0, 3.0], [100.0, 3.0]],
             "task_size_kb": 100.0, "task_rate_hz": 2.0, "sla_ms": 10000.0},
        ],
    }


def deploy(world, uid: str = "u1", host: str = "edge1", bs: str = "bs1"):
    """Manually host the user's container, as the engine would at t=0."""
    user = world.users[uid]
    prof = world.profiles[user.app]
    cont = ContainerInstance(id=user.container, profile=prof, host=host)
    world.containers[cont.id] = cont
    world.servers[host].hosted.add(cont.id)
    user.bs = bs
    user.d_proc_ewma_ms = prof.base_proc_delay_ms * (
        prof.ref_compute_power / world.servers[host].compute_power
    )
    return cont


@pytest.fixture
def tiny_doc():
    return base_doc()


@pytest.fixture
def tiny_world(tiny_doc):
    return load_scenario(copy.deepcopy(tiny_doc))


@pytest.fixture
def deployed_world(tiny_world):
    deploy(tiny_world)
    return tiny_world


def random_problem(rng, max_users: int = 6, max_candidates: int = 8,
                   max_enum: int = 20000) -> PlacementProblem:
    """Randomized placement instance small enough for the enumeration oracle."""
    n_users = rng.randint(1, max_users)
    servers = [f"s{i}" for i in range(rng.randint(1, 4))]
    bss = [f"b{i}" for i in range(rng.randint(1, 3))]
    server_cap = {s: Resources(cpu_millicores=rng.randint(2, 8)) for s in servers}
    bs_cap = {b: rng.randint(1, 5) for b in bss}
    users = [f"u{i}" for i in range(n_users)]
    candidates = {}
    product = 1
    for uid in users:
        k = rng.randint(1, max_candidates)
        while product * k > max_enum and k > 1:
            k -= 1
        product *= k
        cands = []
        for _ in range(k):
            cands.append(Candidate(
                bs=rng.choice(bss),
                server=rng.choice(servers),
                gain=round(rng.uniform(-100.0, 100.0), 3),
                cost_s=round(rng.uniform(0.0, 2.0), 3),
                demand=Resources(cpu_millicores=rng.randint(0, 3)),
                tier_rank=rng.randint(0, 2),
            ))
        candidates[uid] = cands
    return PlacementProblem(
        users=users,
        candidates=candidates,
        server_capacity=server_cap,
        bs_capacity=bs_cap,
        downtime_weight=rng.choice([1.0, 100.0, 1000.0]),
        node_budget=10**6,
    )
