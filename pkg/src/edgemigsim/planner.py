"""Placement optimization and baseline planners.

The orchestrated planner maximizes estimated profit = delay gain (ms-tasks)
minus weighted downtime cost (seconds x downtime_weight) over per-user
candidate (base station, server) pairs, subject to: one pair per user,
componentwise server capacity, an RSSI floor on any candidate BS, and a
per-BS user cap.  The desk-scale instances are solved exactly by
branch-and-bound; brute_force is the independent enumeration oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import latency, migration
from .model import Resources, WorldState, ZERO_RESOURCES, path_delay
from .radio import bandwidth_from_rssi, mean_rssi, predict_rssi

TIER_RANK = {"edge-L1": 0, "edge-L2": 1, "cloud": 2}


class InfeasibleProblem(RuntimeError):
    """A user has no feasible candidate pair."""


@dataclass
class Candidate:
    bs: str
    server: str
    gain: float = 0.0        # ms-tasks
    cost_s: float = 0.0      # estimated downtime seconds
    demand: Resources = ZERO_RESOURCES
    is_current: bool = False
    tier_rank: int = 0
    rssi_ok: bool = True     # candidate passed the RSSI-floor pre-filter

    def profit(self, downtime_weight: float) -> float:
        return self.gain - downtime_weight * self.cost_s


@dataclass
class PlacementProblem:
    users: list                    # ordered user ids
    candidates: dict               # user id -> list[Candidate]
    server_capacity: dict          # server id -> Resources available to this problem
    bs_capacity: dict              # bs id -> max users
    downtime_weight: float = 1000.0
    t_prime: float = 0.0
    node_budget: int = 200000


@dataclass
class PlacementSolution:
    assignment: dict               # user id -> (bs, server)
    objective: float
    optimal: bool


@dataclass
class PlannerParams:
    downtime_weight: float = 1000.0  # profit units per second of downtime
    gain_window_s: float = 30.0      # horizon over which offloaded-task count is projected
    node_budget: int = 200000


def compute_gain(user, candidate_pair, world: WorldState, t_prime: float,
                 gain_window_s: float | None = None) -> float:
    """Delay gain of a candidate in ms-tasks: estimated delta times projected task count."""
    window = world.planner.gain_window_s if gain_window_s is None else gain_window_s
    container = world.container_of(user)
    current = (user.bs, container.host)
    delta_ms = latency.estimate_e2e_delta(user, current, candidate_pair, world, t_prime)
    n_hat = user.task_rate_hz * window
    return delta_ms * n_hat


def compute_cost(user, candidate_pair, world: WorldState, t_prime: float) -> float:
    """Estimated downtime seconds: max of migration time and handover time.

    The handover term is 0 when the BS is unchanged; the migration term is 0
    when the server is unchanged (no migration is executed at all).
    """
    bs_id, server_id = candidate_pair
    container = world.container_of(user)
    t_mig = 0.0
    if server_id != container.host:
        src = world.servers[container.host]
        dst = world.servers[server_id]
        full, delta = migration.probed_sizes(container)
        t_mig = migration.estimate_times(container.profile, src, dst, world.links,
                                         full, delta).t_mig
    t_ho = world.sim.handover_duration_s if bs_id != user.bs else 0.0
    return max(t_mig, t_ho)


def _candidate_sort_key(cand: Candidate, weight: float):
    return (-cand.profit(weight), 0 if cand.is_current else 1,
            cand.tier_rank, cand.bs, cand.server)


def solve(problem: PlacementProblem) -> PlacementSolution:
    """Profit-maximal assignment by depth-first branch-and-bound with capacity pruning.

    Candidates are visited best-profit-first with stable tie-breaking (current
    pair, then lower tier, then ids), and the incumbent is replaced only on a
    strict improvement, so equal-objective ties resolve deterministically.
    Returns optimal=False if the node budget runs out (best found so far).
    """
    users = list(problem.users)
    if not users:
        return PlacementSolution({}, 0.0, True)
    weight = problem.downtime_weight
    ordered: list[list[Candidate]] = []
    for uid in users:
        cands = sorted(problem.candidates.get(uid, []), key=lambda c: _candidate_sort_key(c, weight))
        if not cands:
            raise InfeasibleProblem(f"user {uid!r} has no feasible candidate")
        ordered.append(cands)

    # capacity-relaxed bound: best achievable profit from user i onward
    suffix_best = [0.0] * (len(users) + 1)
    for i in range(len(users) - 1, -1, -1):
        suffix_best[i] = suffix_best[i + 1] + max(c.profit(weight) for c in ordered[i])

    best_obj = -math.inf
    best_assign: list[Candidate] | None = None
    nodes = 0
    exhausted = False
    used: dict[str, Resources] = {s: ZERO_RESOURCES for s in problem.server_capacity}
    bs_used: dict[str, int] = {b: 0 for b in problem.bs_capacity}
    chosen: list[Candidate] = []

    def dfs(i: int, acc: float) -> None:
        nonlocal best_obj, best_assign, nodes, exhausted
        if exhausted:
            return
        if i == len(users):
            if acc > best_obj:
                best_obj = acc
                best_assign = list(chosen)
            return
        if acc + suffix_best[i] <= best_obj:
            return
        for cand in ordered[i]:
            nodes += 1
            if nodes > problem.node_budget:
                exhausted = True
                return
            cap = problem.server_capacity.get(cand.server)
            if cap is not None:
                new_used = used[cand.server] + cand.demand
                if not new_used.fits_within(cap):
                    continue
            bs_cap = problem.bs_capacity.get(cand.bs)
            if bs_cap is not None and bs_used[cand.bs] + 1 > bs_cap:
                continue
            if cap is not None:
                used[cand.server] = new_used
            if bs_cap is not None:
                bs_used[cand.bs] += 1
            chosen.append(cand)
            dfs(i + 1, acc + cand.profit(weight))
            chosen.pop()
            if cap is not None:
                used[cand.server] = used[cand.server] - cand.demand
            if bs_cap is not None:
                bs_used[cand.bs] -= 1

    dfs(0, 0.0)
    if best_assign is None and exhausted:
        # budget ran out before any leaf: fall back to greedy first-fit
        best_assign, best_obj = _greedy(problem, ordered, weight)
    if best_assign is None:
        raise InfeasibleProblem("no feasible joint assignment exists")
    assignment = {uid: (c.bs, c.server) for uid, c in zip(users, best_assign)}
    return PlacementSolution(assignment, best_obj, optimal=not exhausted)


def _greedy(problem: PlacementProblem, ordered, weight: float):
    used = {s: ZERO_RESOURCES for s in problem.server_capacity}
    bs_used = {b: 0 for b in problem.bs_capacity}
    chosen = []
    obj = 0.0
    for cands in ordered:
        picked = None
        for cand in cands:
            cap = problem.server_capacity.get(cand.server)
            if cap is not None and not (used[cand.server] + cand.demand).fits_within(cap):
                continue
            bs_cap = problem.bs_capacity.get(cand.bs)
            if bs_cap is not None and bs_used[cand.bs] + 1 > bs_cap:
                continue
            picked = cand
            break
        if picked is None:
            return None, -math.inf
        if picked.server in used:
            used[picked.server] = used[picked.server] + picked.demand
        if picked.bs in bs_used:
            bs_used[picked.bs] += 1
        chosen.append(picked)
        obj = obj + picked.profit(weight)
    return chosen, obj


def brute_force(problem: PlacementProblem, max_nodes: int = 10**6) -> PlacementSolution:
    """Exhaustive-enumeration optimum; the test oracle for solve()."""
    import itertools

    users = list(problem.users)
    if not users:
        return PlacementSolution({}, 0.0, True)
    lists = []
    size = 1
    for uid in users:
        cands = problem.candidates.get(uid, [])
        if not cands:
            raise InfeasibleProblem(f"user {uid!r} has no feasible candidate")
        lists.append(cands)
        size *= len(cands)
    if size > max_nodes:
        raise ValueError(f"instance too large for enumeration ({size} > {max_nodes})")

    weight = problem.downtime_weight
    best_obj = -math.inf
    best = None
    for combo in itertools.product(*lists):
        used: dict[str, Resources] = {}
        bs_used: dict[str, int] = {}
        ok = True
        for cand in combo:
            if cand.server in problem.server_capacity:
                used[cand.server] = used.get(cand.server, ZERO_RESOURCES) + cand.demand
                if not used[cand.server].fits_within(problem.server_capacity[cand.server]):
                    ok = False
                    break
            if cand.bs in problem.bs_capacity:
                bs_used[cand.bs] = bs_used.get(cand.bs, 0) + 1
                if bs_used[cand.bs] > problem.bs_capacity[cand.bs]:
                    ok = False
                    break
        if not ok:
            continue
        obj = 0.0
        for cand in combo:
            obj = obj + cand.profit(weight)
        if obj > best_obj:
            best_obj = obj
            best = combo
    if best is None:
        raise InfeasibleProblem("no feasible joint assignment exists")
    assignment = {uid: (c.bs, c.server) for uid, c in zip(users, best)}
    return PlacementSolution(assignment, best_obj, optimal=True)


def check_solution(problem: PlacementProblem, solution: PlacementSolution) -> list[str]:
    """Independent feasibility audit; returns human-readable violations (empty = feasible)."""
    issues = []
    for uid in problem.users:
        if uid not in solution.assignment:
            issues.append(f"user {uid!r}: no assignment (one pair per user required)")
    for uid in solution.assignment:
        if uid not in problem.users:
            issues.append(f"user {uid!r}: assigned but not part of the problem")
    used: dict[str, Resources] = {}
    bs_used: dict[str, int] = {}
    objective = 0.0
    for uid in problem.users:
        pair = solution.assignment.get(uid)
        if pair is None:
            continue
        cand = next((c for c in problem.candidates.get(uid, [])
                     if (c.bs, c.server) == tuple(pair)), None)
        if cand is None:
            issues.append(f"user {uid!r}: assigned pair {pair} is not a feasible candidate")
            continue
        if not cand.rssi_ok:
            issues.append(f"user {uid!r}: pair {pair} fails the RSSI floor")
        used[cand.server] = used.get(cand.server, ZERO_RESOURCES) + cand.demand
        bs_used[cand.bs] = bs_used.get(cand.bs, 0) + 1
        objective = objective + cand.profit(problem.downtime_weight)
    for sid, tot in sorted(used.items()):
        cap = problem.server_capacity.get(sid)
        if cap is not None and not tot.fits_within(cap):
            issues.append(f"server {sid!r}: capacity exceeded")
    for bid, count in sorted(bs_used.items()):
        cap = problem.bs_capacity.get(bid)
        if cap is not None and count > cap:
            issues.append(f"base station {bid!r}: user cap exceeded ({count} > {cap})")
    if not issues and abs(objective - solution.objective) > 1e-9 * max(1.0, abs(objective)):
        issues.append(
            f"objective mismatch: reported {solution.objective}, recomputed {objective}"
        )
    return issues


# ---------------------------------------------------------------------------
# Runtime problem construction


def feasible_base_stations(world: WorldState, user, t_prime: float) -> list[str]:
    """BS ids passing the RSSI floor on max(latest measured, predicted at t_prime)."""
    out = []
    for bid in sorted(world.base_stations):
        bs = world.base_stations[bid]
        measured = world.rssi_meas.get((user.id, bid), -math.inf)
        predicted = predict_rssi(user, bs, t_prime, world.radio)
        if max(measured, predicted) >= world.radio.rssi_min_dbm:
            out.append(bid)
    return out


def build_problem_for_user(world: WorldState, user, t_prime: float) -> PlacementProblem:
    """Single-user placement instance with other containers' usage pinned."""
    container = world.container_of(user)
    demand = container.profile.demand
    cands = []
    for bid in feasible_base_stations(world, user, t_prime):
        for sid in sorted(world.servers):
            if sid != container.host and not demand.fits_within(world.server_free(sid)):
                continue
            try:
                gain = compute_gain(user, (bid, sid), world, t_prime)
            except latency.UnreachableError:
                continue
            cost = compute_cost(user, (bid, sid), world, t_prime)
            cands.append(Candidate(
                bs=bid,
                server=sid,
                gain=gain,
                cost_s=cost,
                demand=demand,
                is_current=(bid == user.bs and sid == container.host),
                tier_rank=TIER_RANK.get(world.servers[sid].tier, 0),
            ))
    if not cands:
        raise InfeasibleProblem(f"user {user.id!r} has no feasible candidate")
    return PlacementProblem(
        users=[user.id],
        candidates={user.id: cands},
        server_capacity={sid: world.server_free(sid) + (demand if sid == container.host
                                                        else ZERO_RESOURCES)
                         for sid in sorted(world.servers)},
        bs_capacity={bid: world.base_stations[bid].max_users
                     for bid in sorted(world.base_stations)},
        downtime_weight=world.planner.downtime_weight,
        t_prime=t_prime,
    )


# ---------------------------------------------------------------------------
# Baseline planners.  All pick the strongest feasible BS; they differ only in
# the server choice, and are consulted when a handover fires.


def _strongest_bs(world: WorldState, user, measured: bool = True) -> str:
    best_id, best_val = None, -math.inf
    for bid in sorted(world.base_stations):
        if measured:
            val = world.rssi_meas.get((user.id, bid), -math.inf)
        else:
            val = mean_rssi(user.position, world.base_stations[bid], world.radio)
        if val >= world.radio.rssi_min_dbm and val > best_val:
            best_id, best_val = bid, val
    if best_id is None:
        raise InfeasibleProblem(f"user {user.id!r} is out of coverage of every base station")
    return best_id


def _servers_with_room(world: WorldState, user) -> list[str]:
    container = world.container_of(user)
    demand = container.profile.demand
    out = []
    for sid in sorted(world.servers):
        if sid == container.host or demand.fits_within(world.server_free(sid)):
            out.append(sid)
    if not out:
        raise InfeasibleProblem(f"no server has room for user {user.id!r}")
    return out


def plan_cloud(world: WorldState, user) -> tuple[str, str]:
    clouds = [sid for sid in sorted(world.servers) if world.servers[sid].tier == "cloud"]
    if not clouds:
        raise InfeasibleProblem("scenario declares no cloud server")
    return (_strongest_bs(world, user), clouds[0])


def plan_random(world: WorldState, user, rng) -> tuple[str, str]:
    return (_strongest_bs(world, user), rng.choice(_servers_with_room(world, user)))


def plan_nearest(world: WorldState, user) -> tuple[str, str]:
    bs_id = _strongest_bs(world, user)
    collocated = world.base_stations[bs_id].server
    best_sid, best_d = None, math.inf
    for sid in _servers_with_room(world, user):
        srv = world.servers[sid]
        d = math.dist(user.position, srv.position) if srv.position is not None else math.inf
        if d < best_d or (d == best_d and sid == collocated):
            best_sid, best_d = sid, d
    return (bs_id, best_sid)


def _servers_with_room_for(world: WorldState, demand: Resources,
                           current: str | None = None) -> list[str]:
    out = []
    for sid in sorted(world.servers):
        if sid == current or demand.fits_within(world.server_free(sid)):
            out.append(sid)
    if not out:
        raise InfeasibleProblem("no server has room for the container")
    return out


def initial_placement(world: WorldState, user, choice: str, rng, t0: float) -> tuple[str, str]:
    """Cold-deploy pair for a fresh container (no migration or handover cost).

    Runs before any radio sample exists, so BS feasibility uses the mean model.
    """
    prof = world.profiles[user.app]
    demand = prof.demand
    bs_id = _strongest_bs(world, user, measured=False)
    if choice == "cloud":
        clouds = [sid for sid in sorted(world.servers) if world.servers[sid].tier == "cloud"]
        if not clouds:
            raise InfeasibleProblem("scenario declares no cloud server")
        return (bs_id, clouds[0])
    if choice == "random":
        return (bs_id, rng.choice(_servers_with_room_for(world, demand)))
    if choice == "nearest":
        collocated = world.base_stations[bs_id].server
        best_sid, best_d = None, math.inf
        for sid in _servers_with_room_for(world, demand):
            srv = world.servers[sid]
            d = math.dist(user.position, srv.position) if srv.position is not None else math.inf
            if d < best_d or (d == best_d and sid == collocated):
                best_sid, best_d = sid, d
        return (bs_id, best_sid)
    # orchestrated: feasible pair minimizing the estimated absolute delay
    best = None
    pos = user.position_at(t0)
    for bid in sorted(world.base_stations):
        bs = world.base_stations[bid]
        rssi_hat = mean_rssi(pos, bs, world.radio)
        if rssi_hat < world.radio.rssi_min_dbm:
            continue
        access = bandwidth_from_rssi(rssi_hat, world.radio)
        if access <= 0:
            continue
        for sid in _servers_with_room_for(world, demand):
            srv = world.servers[sid]
            proc = prof.base_proc_delay_ms * (prof.ref_compute_power / srv.compute_power)
            bw_backhaul, lat = path_delay(world.links, bid, sid)
            trans = user.task_size_bits / min(access, bw_backhaul) * 1000.0
            total = proc + trans + 2.0 * lat + srv.queue_delay_ms
            if best is None or total < best[0]:
                best = (total, bid, sid)
    if best is None:
        raise InfeasibleProblem(f"user {user.id!r}: no feasible initial placement")
    return (best[1], best[2])
