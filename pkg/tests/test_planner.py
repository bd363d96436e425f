import random

import pytest

from edgemigsim.model import Resources, load_scenario
from edgemigsim.planner import (
    Candidate,
    InfeasibleProblem,
    PlacementProblem,
    brute_force,
    build_problem_for_user,
    check_solution,
    compute_cost,
    compute_gain,
    plan_cloud,
    plan_nearest,
    plan_random,
    solve,
)

from conftest import base_doc, deploy, random_problem, scenario_path


# -- gain / cost ----------------------------------------------------------------

def _gain_world():
    doc = base_doc()
    doc["planner"]["gain_window_s"] = 20.0  # task_rate 2 Hz -> 40 projected tasks
    for srv in doc["topology"]["servers"]:
        srv["compute_power"] = 2000.0
    for entry in doc["links"]["entries"]:
        if "cloud" in (entry["a"], entry["b"]):
            entry["bw_mbps"] = 100.0
            entry["latency_ms"] = 25.0
    world = load_scenario(doc)
    deploy(world, host="cloud")
    return world


def test_gain_of_current_assignment_is_zero(deployed_world):
    user = deployed_world.users["u1"]
    cur = (user.bs, deployed_world.container_of(user).host)
    assert compute_gain(user, cur, deployed_world, 0.0) == 0.0


def test_gain_hand_product():
    world = _gain_world()
    user = world.users["u1"]
    # identical compute and bottleneck bandwidth; only the 25 ms one-way cloud
    # latency differs -> delta is exactly 50 ms, times 40 projected tasks
    gain = compute_gain(user, ("bs1", "edge1"), world, 0.0)
    assert gain == 2000.0


def test_gain_negative_for_worse_candidate():
    world = _gain_world()
    user = world.users["u1"]
    cont = world.container_of(user)
    cont.host = "edge1"
    world.servers["cloud"].hosted.discard(cont.id)
    world.servers["edge1"].hosted.add(cont.id)
    assert compute_gain(user, ("bs1", "cloud"), world, 0.0) == -2000.0


def _cost_world(image_mb, chkpt_mb, delta_mb):
    doc = base_doc()
    for srv in doc["topology"]["servers"]:
        srv["compute_power"] = 1.0e9
        srv["checkpoint_coeff"] = 0.25
        srv["restore_coeff"] = 0.25
    doc["apps"][0].update(image_mb=image_mb, checkpoint_mb=chkpt_mb, delta_mb=delta_mb)
    world = load_scenario(doc)
    deploy(world)
    return world


def test_cost_no_action_is_zero(deployed_world):
    user = deployed_world.users["u1"]
    assert compute_cost(user, ("bs1", "edge1"), deployed_world, 0.0) == 0.0


def test_cost_migration_dominates():
    # chkpt 0.3 s + delta transfer 0.4 s + restore 0.5 s = 1.2 s > 0.5 s handover
    world = _cost_world(image_mb=1200.0, chkpt_mb=795.0, delta_mb=5.0)
    user = world.users["u1"]
    cost = compute_cost(user, ("bs2", "edge2"), world, 0.0)
    assert cost == pytest.approx(1.2, abs=1e-12)


def test_cost_handover_dominates():
    # chkpt 0.05 + transfer 0.1 + restore 0.15 = 0.3 s < 0.5 s handover
    world = _cost_world(image_mb=200.0, chkpt_mb=398.75, delta_mb=1.25)
    user = world.users["u1"]
    cost = compute_cost(user, ("bs2", "edge2"), world, 0.0)
    assert cost == pytest.approx(0.5, abs=1e-12)
    # same BS: only the migration term remains
    assert compute_cost(user, ("bs1", "edge2"), world, 0.0) == pytest.approx(0.3, abs=1e-12)
    # same server, new BS: only the handover term remains
    assert compute_cost(user, ("bs2", "edge1"), world, 0.0) == 0.5


# -- solver ------------------------------------------------------------------------

def _problem(users, candidates, server_cap=None, bs_cap=None, weight=1.0):
    return PlacementProblem(
        users=users,
        candidates=candidates,
        server_capacity=server_cap or {},
        bs_capacity=bs_cap or {},
        downtime_weight=weight,
    )


def test_solve_picks_argmax():
    prob = _problem(["u"], {"u": [
        Candidate(bs="b", server="s1", gain=3.0),
        Candidate(bs="b", server="s2", gain=5.0),
    ]})
    sol = solve(prob)
    assert sol.assignment["u"] == ("b", "s2")
    assert sol.objective == 5.0
    assert sol.optimal


def test_solve_contention_matches_enumeration():
    cap = {"s": Resources(cpu_millicores=1)}
    cands = {
        "u1": [Candidate(bs="b", server="s", gain=10.0, demand=Resources(cpu_millicores=1)),
               Candidate(bs="b", server="alt", gain=4.0)],
        "u2": [Candidate(bs="b", server="s", gain=8.0, demand=Resources(cpu_millicores=1)),
               Candidate(bs="b", server="alt", gain=7.0)],
    }
    prob = _problem(["u1", "u2"], cands, server_cap=cap)
    sol = solve(prob)
    ref = brute_force(prob)
    assert sol.objective == ref.objective == 17.0
    assert sol.assignment["u1"] == ("b", "s")
    assert sol.assignment["u2"] == ("b", "alt")
    assert check_solution(prob, sol) == []


def test_solve_equals_brute_force_on_random_instances():
    rng = random.Random(2024)
    solved = 0
    for _ in range(100):
        prob = random_problem(rng)
        try:
            ref = brute_force(prob)
        except InfeasibleProblem:
            with pytest.raises(InfeasibleProblem):
                solve(prob)
            continue
        sol = solve(prob)
        assert sol.optimal
        assert sol.objective == ref.objective
        assert check_solution(prob, sol) == []
        solved += 1
    assert solved > 50


def test_scaling_gains_and_costs_preserves_argmax():
    rng = random.Random(7)
    for _ in range(20):
        prob = random_problem(rng)
        try:
            sol = solve(prob)
        except InfeasibleProblem:
            continue
        scale = 3.5
        scaled = PlacementProblem(
            users=prob.users,
            candidates={u: [Candidate(bs=c.bs, server=c.server, gain=c.gain * scale,
                                      cost_s=c.cost_s * scale, demand=c.demand,
                                      is_current=c.is_current, tier_rank=c.tier_rank)
                            for c in cands]
                        for u, cands in prob.candidates.items()},
            server_capacity=prob.server_capacity,
            bs_capacity=prob.bs_capacity,
            downtime_weight=prob.downtime_weight,
        )
        sol2 = solve(scaled)
        assert sol2.objective == pytest.approx(scale * sol.objective, rel=1e-9)
        assert sol2.assignment == sol.assignment


def test_tie_breaking_prefers_current_then_tier_then_ids():
    cands = [
        Candidate(bs="b2", server="s2", gain=5.0, tier_rank=0),
        Candidate(bs="b1", server="s1", gain=5.0, tier_rank=2, is_current=True),
    ]
    sol = solve(_problem(["u"], {"u": cands}))
    assert sol.assignment["u"] == ("b1", "s1")

    cands = [
        Candidate(bs="b2", server="cloudy", gain=5.0, tier_rank=2),
        Candidate(bs="b2", server="edgy", gain=5.0, tier_rank=0),
    ]
    sol = solve(_problem(["u"], {"u": cands}))
    assert sol.assignment["u"] == ("b2", "edgy")

    cands = [
        Candidate(bs="b2", server="zeta", gain=5.0),
        Candidate(bs="b2", server="alpha", gain=5.0),
    ]
    sol = solve(_problem(["u"], {"u": cands}))
    assert sol.assignment["u"] == ("b2", "alpha")


def test_solve_no_candidates_names_user():
    with pytest.raises(InfeasibleProblem, match="u7"):
        solve(_problem(["u7"], {"u7": []}))


def test_solve_node_budget_returns_best_effort():
    cands = {
        "u1": [Candidate(bs="b", server="s1", gain=1.0),
               Candidate(bs="b", server="s2", gain=2.0)],
        "u2": [Candidate(bs="b", server="s1", gain=1.0),
               Candidate(bs="b", server="s2", gain=2.0)],
    }
    prob = _problem(["u1", "u2"], cands)
    prob.node_budget = 1
    sol = solve(prob)
    assert not sol.optimal
    assert set(sol.assignment) == {"u1", "u2"}


def test_brute_force_trivial_cases():
    assert brute_force(_problem([], {})).assignment == {}
    assert brute_force(_problem([], {})).objective == 0.0
    sol = brute_force(_problem(["u"], {"u": [Candidate(bs="b", server="s", gain=-3.0)]}))
    assert sol.assignment["u"] == ("b", "s")


def test_brute_force_rejects_oversized_instances():
    cands = {f"u{i}": [Candidate(bs="b", server=f"s{j}") for j in range(10)]
             for i in range(8)}
    with pytest.raises(ValueError, match="too large"):
        brute_force(_problem(list(cands), cands), max_nodes=10**6)


def test_brute_force_dominates_random_feasible_assignments():
    rng = random.Random(5)
    for _ in range(20):
        prob = random_problem(rng)
        try:
            ref = brute_force(prob)
        except InfeasibleProblem:
            continue
        for _ in range(25):
            combo = {u: rng.choice(prob.candidates[u]) for u in prob.users}
            used = {}
            bs_used = {}
            feasible = True
            for cand in combo.values():
                used[cand.server] = used.get(cand.server, Resources()) + cand.demand
                bs_used[cand.bs] = bs_used.get(cand.bs, 0) + 1
            for sid, tot in used.items():
                cap = prob.server_capacity.get(sid)
                if cap is not None and not tot.fits_within(cap):
                    feasible = False
            for bid, n in bs_used.items():
                cap = prob.bs_capacity.get(bid)
                if cap is not None and n > cap:
                    feasible = False
            if not feasible:
                continue
            obj = 0.0
            for u in prob.users:
                obj = obj + combo[u].profit(prob.downtime_weight)
            assert ref.objective >= obj - 1e-9


def test_checker_flags_violations():
    cap = {"s": Resources(cpu_millicores=1)}
    cands = {"u": [Candidate(bs="b", server="s", gain=1.0,
                             demand=Resources(cpu_millicores=2))]}
    prob = _problem(["u"], cands, server_cap=cap)
    from edgemigsim.planner import PlacementSolution
    bad = PlacementSolution({"u": ("b", "s")}, 1.0, True)
    issues = check_solution(prob, bad)
    assert any("capacity" in i for i in issues)
    wrong_obj = PlacementSolution({"u": ("b", "s")}, 99.0, True)
    prob_loose = _problem(["u"], cands)
    assert any("objective" in i for i in check_solution(prob_loose, wrong_obj))


# -- runtime problem + baselines ------------------------------------------------------

def test_build_problem_candidates(deployed_world):
    world = deployed_world
    user = world.users["u1"]
    world.rssi_meas[("u1", "bs1")] = -50.0
    world.rssi_meas[("u1", "bs2")] = -60.0
    prob = build_problem_for_user(world, user, t_prime=0.0)
    pairs = {(c.bs, c.server) for c in prob.candidates["u1"]}
    assert ("bs1", "edge1") in pairs
    assert len(pairs) == 6  # 2 feasible BSs x 3 servers
    current = [c for c in prob.candidates["u1"] if c.is_current]
    assert [(c.bs, c.server) for c in current] == [("bs1", "edge1")]
    assert all(c.rssi_ok for c in prob.candidates["u1"])


def test_build_problem_infeasible_far_user(tiny_doc):
    tiny_doc["users"][0]["waypoints"] = [[50000.0, 0.0]]
    world = load_scenario(tiny_doc)
    deploy(world)
    with pytest.raises(InfeasibleProblem, match="u1"):
        build_problem_for_user(world, world.users["u1"], 0.0)


def _bundled_near_bs2():
    world = load_scenario(scenario_path("openface"))
    deploy(world, uid="mu1", host="edge1", bs="bs1")
    user = world.users["mu1"]
    user.position = (60.0, 3.0)
    world.rssi_meas[("mu1", "bs1")] = -70.0
    world.rssi_meas[("mu1", "bs2")] = -50.0
    world.rssi_meas[("mu1", "bs3")] = -70.0
    return world, user


def test_plan_cloud_always_cloud():
    world, user = _bundled_near_bs2()
    assert plan_cloud(world, user) == ("bs2", "cloud")


def test_plan_nearest_prefers_collocated_edge():
    world, user = _bundled_near_bs2()
    assert plan_nearest(world, user) == ("bs2", "edge2")


def test_plan_random_reproducible():
    world, user = _bundled_near_bs2()
    a = plan_random(world, user, random.Random(5))
    b = plan_random(world, user, random.Random(5))
    assert a == b
    assert a[0] == "bs2"
    assert a[1] in world.servers
