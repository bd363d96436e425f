import copy
import math
import random

import pytest

from edgemigsim import latency
from edgemigsim.latency import (
    STATUS_COMPLETED,
    STATUS_LOST,
    UnreachableError,
    estimate_e2e,
    estimate_e2e_delta,
    estimate_processing,
    estimate_transmission,
    measure_request,
)
from edgemigsim.model import load_scenario

from conftest import base_doc, deploy


def test_processing_identity_and_scaling():
    assert estimate_processing(100.0, 1000.0, 1000.0) == 100.0
    assert estimate_processing(100.0, 1000.0, 2000.0) == 50.0
    assert estimate_processing(0.0, 123.0, 456.0) == 0.0
    with pytest.raises(ValueError):
        estimate_processing(10.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        estimate_processing(10.0, 1.0, -5.0)


def test_transmission_hand_values():
    assert estimate_transmission(800e3, 100e6, 100e6) == 8.0
    slow = estimate_transmission(800e3, 6.5e6, 100e6)
    assert slow == pytest.approx(800e3 / 6.5e6 * 1000.0, rel=1e-12)
    assert round(slow, 1) == 123.1
    with pytest.raises(UnreachableError):
        estimate_transmission(800e3, 0.0, 100e6)
    with pytest.raises(ValueError):
        estimate_transmission(0.0, 1.0, 1.0)


def test_e2e_breakdown_collocated_and_cloud(deployed_world):
    world = deployed_world
    user = world.users["u1"]
    local = estimate_e2e(user, "bs1", "edge1", world, t_prime=0.0)
    assert local.propagation_ms == 0.0
    assert local.total_ms == (local.processing_ms + local.transmission_ms
                              + local.propagation_ms + local.queuing_ms)
    remote = estimate_e2e(user, "bs1", "cloud", world, t_prime=0.0)
    assert remote.propagation_ms == 300.0  # round trip over the 150 ms one-way link
    again = estimate_e2e(user, "bs1", "cloud", world, t_prime=0.0)
    assert remote == again


def test_e2e_monotonicity(deployed_world):
    world = deployed_world
    user = world.users["u1"]
    base = estimate_e2e(user, "bs1", "edge1", world, 0.0).total_ms
    # farther in time = farther from bs1 = lower access rate = higher delay
    later = estimate_e2e(user, "bs1", "edge1", world, 40.0).total_ms
    assert later >= base


def _rtt_only_world():
    # equal compute and equal bottleneck bandwidth everywhere: only the
    # propagation term differs between candidate pairs
    doc = base_doc()
    for srv in doc["topology"]["servers"]:
        srv["compute_power"] = 2000.0
    doc["links"]["entries"] = [
        {"a": "edge1", "b": "edge2", "bw_mbps": 100.0, "latency_ms": 50.0},
        {"a": "edge1", "b": "cloud", "bw_mbps": 100.0, "latency_ms": 150.0},
        {"a": "edge2", "b": "cloud", "bw_mbps": 100.0, "latency_ms": 150.0},
    ]
    world = load_scenario(doc)
    deploy(world, host="cloud")
    return world


def test_delta_identity_is_exact(deployed_world):
    world = deployed_world
    user = world.users["u1"]
    cur = (user.bs, world.container_of(user).host)
    assert estimate_e2e_delta(user, cur, cur, world, 0.0) == 0.0


def test_delta_equals_rtt_difference_when_only_rtt_changes():
    world = _rtt_only_world()
    user = world.users["u1"]
    # moving off the cloud (round trip 300 ms) to the adjacent edge (100 ms)
    delta = estimate_e2e_delta(user, ("bs1", "cloud"), ("bs1", "edge2"), world, 0.0)
    assert delta == 200.0


def test_delta_slower_server_is_processing_term():
    doc = base_doc()
    doc["topology"]["servers"][1]["compute_power"] = 1000.0  # edge2 at half speed
    doc["links"]["entries"][0]["latency_ms"] = 0.0           # kill the prop difference
    world = load_scenario(doc)
    deploy(world, host="edge1")
    user = world.users["u1"]
    user.d_proc_ewma_ms = 100.0
    delta = estimate_e2e_delta(user, ("bs1", "edge1"), ("bs1", "edge2"), world, 0.0)
    assert delta == -100.0  # 100 * (1 - 2000/1000)


def test_delta_antisymmetry_random_sample():
    rng = random.Random(11)
    doc = base_doc()
    world = load_scenario(doc)
    deploy(world)
    user = world.users["u1"]
    pairs = [(b, s) for b in sorted(world.base_stations) for s in sorted(world.servers)]
    for _ in range(200):
        user.d_proc_ewma_ms = rng.uniform(0.0, 500.0)
        user.task_size_bits = rng.uniform(1e4, 1e7)
        a = pairs[rng.randrange(len(pairs))]
        b = pairs[rng.randrange(len(pairs))]
        t = rng.uniform(0.0, 200.0)
        d_ab = estimate_e2e_delta(user, a, b, world, t)
        d_ba = estimate_e2e_delta(user, b, a, world, t)
        assert d_ab == -d_ba
        assert estimate_e2e_delta(user, a, a, world, t) == 0.0


def test_measure_request_fast_path_and_losses(tiny_doc):
    tiny_doc["apps"][0]["base_proc_delay_ms"] = 0.0
    tiny_doc["users"][0]["task_size_kb"] = 10.0
    world = load_scenario(tiny_doc)
    cont = deploy(world)
    user = world.users["u1"]
    world.rssi_meas[("u1", "bs1")] = -40.0
    rec = measure_request(world, user, 1.0)
    assert rec.status == STATUS_COMPLETED
    assert rec.total_ms < 5.0
    assert cont.state_counter == 1

    cont.status = "frozen"
    rec2 = measure_request(world, user, 2.0)
    assert rec2.status == STATUS_LOST
    assert cont.state_counter == 1

    cont.status = "running"
    user.bs = None
    assert measure_request(world, user, 3.0).status == STATUS_LOST

    user.bs = "bs1"
    world.rssi_meas[("u1", "bs1")] = -95.0  # below the decode floor
    assert measure_request(world, user, 4.0).status == STATUS_LOST


def test_measure_request_updates_ewma(deployed_world):
    world = deployed_world
    user = world.users["u1"]
    world.rssi_meas[("u1", "bs1")] = -40.0
    r1 = measure_request(world, user, 1.0)
    assert user.e2e_ewma_ms == r1.total_ms
    r2 = measure_request(world, user, 2.0)
    assert user.e2e_ewma_ms == pytest.approx(
        latency.EWMA_ALPHA * r2.total_ms + (1 - latency.EWMA_ALPHA) * r1.total_ms)


def test_measure_request_deterministic(deployed_world):
    world = deployed_world
    world.rssi_meas[("u1", "bs1")] = -55.0
    twin = copy.deepcopy(world)
    a = measure_request(world, world.users["u1"], 5.0)
    b = measure_request(twin, twin.users["u1"], 5.0)
    assert a == b


def test_completed_total_at_least_propagation(deployed_world):
    world = deployed_world
    user = world.users["u1"]
    world.rssi_meas[("u1", "bs1")] = -60.0
    cont = world.container_of(user)
    cont.host = "cloud"
    world.servers["edge1"].hosted.discard(cont.id)
    world.servers["cloud"].hosted.add(cont.id)
    rec = measure_request(world, user, 1.0)
    assert rec.status == STATUS_COMPLETED
    assert rec.total_ms >= rec.prop_ms == 300.0
