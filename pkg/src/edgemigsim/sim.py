"""Deterministic discrete-event engine and experiment driver.

One run owns a deep copy of the world, a single seeded noise source, and a
heapq event queue.  Events at equal timestamps are ordered by a fixed kind
priority (availability transitions before request measurement) and then by
insertion sequence, so identical (scenario, planner, seed) inputs replay
bit-identically.
"""

from __future__ import annotations

import copy
import csv
import heapq
import io
import json
import math
import os
import random
from dataclasses import dataclass, field

from . import latency, migration, orchestrator, planner
from .model import WorldState
from .radio import predict_handover_time, predict_rssi, rssi_at

PLANNERS = ("cloud", "random", "nearest", "orchestrated")

# tie-break priority at equal timestamps; ho_done, then mig_done, precede requests
_PRIO = {
    "move_tick": 0,
    "radio_sample": 1,
    "ho_done": 2,
    "mig_restore": 3,
    "mig_done": 4,
    "pre_mig_done": 5,
    "probe": 6,
    "pre_mig_start": 7,
    "mig_start": 8,
    "ho_start": 9,
    "monitor_tick": 10,
    "request": 11,
}

CROSSING_RESCAN_S = 2.0  # how often the monitor re-runs the handover prediction scan

EVENT_COLUMNS = ("time_s", "user", "kind", "src", "dst", "bytes",
                 "t_trig_pre_mig", "t_trig_mig", "t_trig_ho", "est_downtime", "note")
REQUEST_COLUMNS = ("time_s", "user", "bs", "server", "proc_ms", "trans_ms",
                   "prop_ms", "queue_ms", "total_ms", "status")
DOWNTIME_COLUMNS = ("user", "start_s", "end_s", "cause", "episode")


@dataclass
class DowntimeInterval:
    user: str
    start: float
    end: float
    cause: str   # handover | migration | overlap | late_plan
    episode: int


@dataclass
class RunOutput:
    planner: str
    seed: int
    duration_s: float
    app_of_user: dict
    records: list
    intervals: list          # merged DowntimeInterval per user, time-ordered
    events: list             # event-log rows (dicts with EVENT_COLUMNS keys)
    state_counters: dict     # user -> final container state counter
    completed: dict          # user -> completed request count
    lost: dict               # user -> lost request count
    downtime: dict           # user -> {"total": s, "by_cause": {cause: s}}
    world: WorldState | None = None

    def requests_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REQUEST_COLUMNS)
        for r in self.records:
            w.writerow([r.time_s, r.user, r.bs, r.server, r.proc_ms, r.trans_ms,
                        r.prop_ms, r.queue_ms, r.total_ms, r.status])
        return buf.getvalue()

    def downtime_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DOWNTIME_COLUMNS)
        for iv in self.intervals:
            w.writerow([iv.user, iv.start, iv.end, iv.cause, iv.episode])
        return buf.getvalue()

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for ev in self.events:
            w.writerow([ev.get(col, "") for col in EVENT_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        per_user = {}
        for uid in sorted(self.app_of_user):
            totals = [r.total_ms for r in self.records
                      if r.user == uid and r.status == latency.STATUS_COMPLETED]
            per_user[uid] = {
                "app": self.app_of_user[uid],
                "completed": self.completed.get(uid, 0),
                "lost": self.lost.get(uid, 0),
                "state_counter": self.state_counters.get(uid, 0),
                "mean_total_ms": (sum(totals) / len(totals)) if totals else None,
                "downtime_s": self.downtime.get(uid, {}).get("total", 0.0),
                "downtime_by_cause": self.downtime.get(uid, {}).get("by_cause", {}),
            }
        return {
            "planner": self.planner,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "users": per_user,
        }

    def write(self, out_dir) -> list:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for name, text in (("requests.csv", self.requests_csv()),
                           ("downtime.csv", self.downtime_csv()),
                           ("events.csv", self.events_csv())):
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            paths.append(path)
        path = os.path.join(out_dir, "summary.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(path)
        return paths


def move_user(user, dt: float):
    """Advance the user dt seconds along its round-trip trajectory."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    user._elapsed_s = getattr(user, "_elapsed_s", 0.0) + dt
    user.position = user.position_at(user._elapsed_s)
    return user.position


def merge_spans(spans) -> list:
    """Merge overlapping unavailability spans of one user into DowntimeIntervals.

    Touching spans coalesce; a merged interval's cause is the single shared
    cause, "late_plan" if any member carries it, otherwise "overlap".
    """
    merged = []
    for start, end, cause, episode in sorted(spans, key=lambda s: (s[0], s[1])):
        if merged and start <= merged[-1][1]:
            prev = merged[-1]
            prev[1] = max(prev[1], end)
            prev[2].add(cause)
            prev[3] = min(prev[3], episode)
        else:
            merged.append([start, end, {cause}, episode])
    out = []
    for start, end, causes, episode in merged:
        if len(causes) == 1:
            cause = next(iter(causes))
        elif "late_plan" in causes:
            cause = "late_plan"
        else:
            cause = "overlap"
        out.append((start, end, cause, episode))
    return out


def account_downtime(intervals) -> dict:
    """Per-user merged downtime totals, overall and per cause."""
    out = {}
    for iv in intervals:
        acc = out.setdefault(iv.user, {"total": 0.0, "by_cause": {}})
        length = iv.end - iv.start
        acc["total"] += length
        acc["by_cause"][iv.cause] = acc["by_cause"].get(iv.cause, 0.0) + length
    return out


@dataclass
class _UserRuntime:
    episode: int = 0
    action_gen: int = 0              # bumped per plan/episode and on cancellation
    plan: object | None = None       # orchestrator.MigrationPlan when one is pending
    plan_started: bool = False       # pre-migration (or ho for ho-only) has fired
    pending: set = field(default_factory=set)  # {"mig", "ho"} still outstanding
    busy: bool = False               # baseline episode in flight
    baseline_dst: str | None = None
    ho_done_time: float = 0.0
    crossing: tuple | None = None    # cached (t_ho, target_bs) prediction
    crossing_scanned_at: float = -math.inf


class Engine:
    """Single-threaded event loop; owns the world and all mutation."""

    def __init__(self, world: WorldState, planner_choice: str, seed: int):
        if planner_choice not in PLANNERS:
            raise ValueError(f"unknown planner {planner_choice!r}")
        self.world = world
        self.choice = planner_choice
        self.rng = random.Random(seed)
        self.seed = seed
        self.now = 0.0
        self._heap = []
        self._seq = 0
        self.records = []
        self.events = []
        self._spans = {}        # (user, channel) -> [start, cause, episode] open span
        self._closed_spans = {} # user -> list of (start, end, cause, episode)
        self.histories = {sid: migration.CalibrationHistory() for sid in world.servers}
        self.rt = {uid: _UserRuntime() for uid in world.users}
        self._container_user = {}

    # -- engine surface used by the migration executors ----------------------

    def schedule(self, t: float, kind: str, **payload):
        heapq.heappush(self._heap, (t, _PRIO[kind], self._seq, kind, payload))
        self._seq += 1

    def user_of(self, container) -> str:
        return self._container_user[container.id]

    def log_event(self, kind: str, user: str = "", **fields):
        row = {"time_s": self.now, "user": user, "kind": kind}
        if "nbytes" in fields:
            fields["bytes"] = fields.pop("nbytes")
        row.update(fields)
        self.events.append(row)

    # -- downtime span bookkeeping -------------------------------------------

    def _open_span(self, user_id: str, channel: str, cause: str):
        key = (user_id, channel)
        if key not in self._spans:
            self._spans[key] = [self.now, cause, self.rt[user_id].episode]

    def _close_span(self, user_id: str, channel: str):
        key = (user_id, channel)
        span = self._spans.pop(key, None)
        if span is not None:
            start, cause, episode = span
            self._closed_spans.setdefault(user_id, []).append((start, self.now, cause, episode))

    # -- deployment -----------------------------------------------------------

    def _deploy_all(self):
        from .model import ContainerInstance

        world = self.world
        for uid in sorted(world.users):
            user = world.users[uid]
            user.position = user.position_at(0.0)
            bs_id, server_id = planner.initial_placement(world, user, self.choice,
                                                         self.rng, 0.0)
            prof = world.profiles[user.app]
            cont = ContainerInstance(id=user.container, profile=prof, host=server_id)
            world.containers[cont.id] = cont
            world.servers[server_id].hosted.add(cont.id)
            self._container_user[cont.id] = uid
            user.bs = bs_id
            user.d_proc_ewma_ms = prof.base_proc_delay_ms * (
                prof.ref_compute_power / world.servers[server_id].compute_power
            )
            bad = world.capacity_violations()
            if bad:
                raise RuntimeError(f"deployment violates capacity on servers {bad}")
            self.schedule(world.sim.probe_warmup_s, "probe", user=uid)
            self.schedule(1.0 / user.task_rate_hz, "request", user=uid)
            self.log_event("deploy", user=uid, dst=server_id, note=f"bs={bs_id}")

    # -- run loop --------------------------------------------------------------

    def run(self, duration_s: float) -> RunOutput:
        world = self.world
        if duration_s <= 0:
            return self._finish(0.0)
        self._deploy_all()
        self.schedule(0.0, "move_tick")
        self.schedule(0.0, "radio_sample")
        self.schedule(0.0, "monitor_tick")
        handlers = {
            "move_tick": self._on_move_tick,
            "radio_sample": self._on_radio_sample,
            "monitor_tick": self._on_monitor_tick,
            "probe": self._on_probe,
            "request": self._on_request,
            "pre_mig_start": self._on_pre_mig_start,
            "pre_mig_done": self._on_pre_mig_done,
            "mig_start": self._on_mig_start,
            "mig_restore": self._on_mig_restore,
            "mig_done": self._on_mig_done,
            "ho_start": self._on_ho_start,
            "ho_done": self._on_ho_done,
        }
        while self._heap:
            t, _, _, kind, payload = heapq.heappop(self._heap)
            if t > duration_s:
                break
            self.now = t
            world.time_s = t
            handlers[kind](payload)
            bad = world.capacity_violations()
            if bad:
                raise RuntimeError(f"capacity invariant violated on {bad} at t={t}")
        return self._finish(duration_s)

    def _finish(self, duration_s: float) -> RunOutput:
        world = self.world
        self.now = duration_s
        for uid in sorted(world.users):
            self._close_span(uid, "radio")
            self._close_span(uid, "container")
        intervals = []
        downtime = {}
        for uid in sorted(world.users):
            merged = merge_spans(self._closed_spans.get(uid, []))
            for start, end, cause, episode in merged:
                intervals.append(DowntimeInterval(uid, start, end, cause, episode))
        downtime = account_downtime(intervals)
        completed = {}
        lost = {}
        for rec in self.records:
            if rec.status == latency.STATUS_COMPLETED:
                completed[rec.user] = completed.get(rec.user, 0) + 1
            else:
                lost[rec.user] = lost.get(rec.user, 0) + 1
        counters = {uid: world.containers[world.users[uid].container].state_counter
                    for uid in sorted(world.users) if world.users[uid].container in world.containers}
        return RunOutput(
            planner=self.choice,
            seed=self.seed,
            duration_s=duration_s,
            app_of_user={uid: world.users[uid].app for uid in sorted(world.users)},
            records=self.records,
            intervals=intervals,
            events=self.events,
            state_counters=counters,
            completed=completed,
            lost=lost,
            downtime=downtime,
            world=world,
        )

    # -- periodic ticks ---------------------------------------------------------

    def _on_move_tick(self, payload):
        tick = self.world.sim.tick_s
        for uid in sorted(self.world.users):
            user = self.world.users[uid]
            user.position = user.position_at(self.now)
            user._elapsed_s = self.now
        self.schedule(self.now + tick, "move_tick")

    def _on_radio_sample(self, payload):
        world = self.world
        for uid in sorted(world.users):
            user = world.users[uid]
            for bid in sorted(world.base_stations):
                world.rssi_meas[(uid, bid)] = rssi_at(user.position,
                                                      world.base_stations[bid],
                                                      world.radio, self.rng)
        self.schedule(self.now + world.sim.tick_s, "radio_sample")

    def _on_probe(self, payload):
        user = self.world.users[payload["user"]]
        cont = self.world.container_of(user)
        if cont.status != "running":
            # probing waits for the container to settle again
            self.schedule(self.now + self.world.sim.tick_s, "probe", user=user.id)
            return
        full, delta = migration.probe_delta_sizes(cont, self.now,
                                                  warmup_s=self.world.sim.probe_warmup_s)
        self.log_event("probe", user=user.id, src=cont.host, nbytes=full,
                       note=f"delta_bytes={delta}")

    def _on_request(self, payload):
        user = self.world.users[payload["user"]]
        nxt = self.now + 1.0 / user.task_rate_hz
        self.schedule(nxt, "request", user=user.id)
        self.records.append(latency.measure_request(self.world, user, self.now))

    # -- monitoring and planning -------------------------------------------------

    def _on_monitor_tick(self, payload):
        for uid in sorted(self.world.users):
            if self.choice == "orchestrated":
                self._monitor_orchestrated(uid)
            else:
                self._monitor_baseline(uid)
        self.schedule(self.now + self.world.orchestrator.sla_check_period_s, "monitor_tick")

    def _predict_crossing(self, user):
        """Cached radio-prediction scan; deterministic, so cache until consumed."""
        rt = self.rt[user.id]
        stale = (rt.crossing is None
                 and self.now - rt.crossing_scanned_at >= CROSSING_RESCAN_S)
        passed = rt.crossing is not None and rt.crossing[0] < self.now
        if stale or passed or rt.crossing_scanned_at < 0:
            if user.bs is None:
                return None
            current = self.world.base_stations[user.bs]
            others = [b for b in self.world.base_stations.values() if b.id != user.bs]
            rt.crossing = predict_handover_time(
                user, current, others, self.world.radio,
                self.now, self.world.orchestrator.horizon_dt_s)
            rt.crossing_scanned_at = self.now
        return rt.crossing

    def _monitor_orchestrated(self, uid: str):
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        if rt.plan is not None:
            if not rt.plan_started and self.now < rt.plan.t_trig_pre_mig:
                crossing = None
                if user.bs is not None:
                    current = world.base_stations[user.bs]
                    others = [b for b in world.base_stations.values() if b.id != user.bs]
                    crossing = predict_handover_time(user, current, others, world.radio,
                                                     self.now, world.orchestrator.horizon_dt_s)
                if orchestrator.should_cancel(rt.plan, crossing[0] if crossing else None,
                                              world.orchestrator):
                    self._cancel_plan(uid, "prediction drifted")
            return
        if user.bs is None:
            return
        crossing = self._predict_crossing(user)
        req = orchestrator.monitor_tick(world, user, self.now, world.orchestrator,
                                        crossing=crossing)
        if req is not None:
            self._plan_orchestrated(uid, req)

    def _cancel_plan(self, uid: str, why: str):
        rt = self.rt[uid]
        if rt.plan is None:
            return
        self.log_event("cancel", user=uid, note=why)
        rt.plan = None
        rt.pending.clear()
        rt.plan_started = False
        rt.action_gen += 1
        rt.crossing = None
        rt.crossing_scanned_at = -math.inf

    def _plan_orchestrated(self, uid: str, req):
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        cont = world.container_of(user)
        problem = planner.build_problem_for_user(world, user, req.t_ho_need)
        problem.node_budget = world.planner.node_budget
        solution = planner.solve(problem)
        dst = solution.assignment[uid]
        src = (user.bs, cont.host)
        if tuple(dst) == src:
            return  # staying put is optimal; keep monitoring
        est = None
        if dst[1] != src[1]:
            full, delta = migration.probed_sizes(cont)
            est = migration.estimate_times(cont.profile, world.servers[src[1]],
                                           world.servers[dst[1]], world.links, full, delta)
        plan = orchestrator.build_plan(uid, src, dst, est, req.t_ho_need,
                                       world.sim.handover_duration_s,
                                       world.orchestrator, self.now)
        rt.episode += 1
        rt.action_gen += 1
        plan.generation = rt.action_gen
        rt.plan = plan
        rt.plan_started = False
        rt.pending = ({"mig"} if plan.migrates else set()) | ({"ho"} if plan.hands_over else set())
        rt.crossing = None
        rt.crossing_scanned_at = -math.inf
        self.log_event("plan", user=uid, src=f"{src[0]}/{src[1]}", dst=f"{dst[0]}/{dst[1]}",
                       t_trig_pre_mig=plan.t_trig_pre_mig, t_trig_mig=plan.t_trig_mig,
                       t_trig_ho=plan.t_trig_ho, est_downtime=plan.est_downtime,
                       note=("late_plan" if plan.late else req.reason))
        if plan.migrates:
            self.schedule(max(self.now, plan.t_trig_pre_mig), "pre_mig_start",
                          user=uid, dst=plan.dst[1], gen=plan.generation)
        else:
            self.schedule(max(self.now, plan.t_trig_ho), "ho_start",
                          user=uid, target=plan.dst[0], gen=plan.generation)

    def _monitor_baseline(self, uid: str):
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        if rt.busy or user.bs is None:
            return
        current = world.rssi_meas.get((uid, user.bs))
        if current is None:
            return
        best_id, best_val = None, -math.inf
        for bid in sorted(world.base_stations):
            if bid == user.bs:
                continue
            val = world.rssi_meas.get((uid, bid), -math.inf)
            if val > best_val:
                best_id, best_val = bid, val
        if best_id is None or best_val <= current + world.radio.hysteresis_margin_db:
            return
        if best_val < world.radio.rssi_min_dbm:
            return
        if (world.bs_user_count(best_id) + 1
                > world.base_stations[best_id].max_users):
            return  # target already full; retry once the cap clears
        # measured hysteresis crossing: hand over now, re-place per policy,
        # pre-migrate in the background, migrate once both finish
        cont = world.container_of(user)
        if self.choice == "cloud":
            dst_server = planner.plan_cloud(world, user)[1]
        elif self.choice == "random":
            dst_server = planner.plan_random(world, user, self.rng)[1]
        else:
            dst_server = planner.plan_nearest(world, user)[1]
        rt.episode += 1
        rt.action_gen += 1
        rt.busy = True
        rt.baseline_dst = dst_server if dst_server != cont.host else None
        rt.ho_done_time = self.now + world.sim.handover_duration_s
        self.log_event("plan", user=uid, src=f"{user.bs}/{cont.host}",
                       dst=f"{best_id}/{dst_server}", note=f"baseline:{self.choice}")
        self.schedule(self.now, "ho_start", user=uid, target=best_id, gen=rt.action_gen)
        if rt.baseline_dst is not None:
            self.schedule(self.now, "pre_mig_start", user=uid, dst=dst_server,
                          gen=rt.action_gen)

    # -- migration events ----------------------------------------------------------

    def _stale(self, uid: str, payload) -> bool:
        return payload.get("gen") != self.rt[uid].action_gen

    def _on_pre_mig_start(self, payload):
        uid = payload["user"]
        if self._stale(uid, payload):
            return
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        cont = world.container_of(user)
        dst = world.servers[payload["dst"]]
        if rt.plan is not None:
            rt.plan_started = True
        try:
            migration.execute_pre_migration(self, cont, dst, payload["gen"])
        except migration.InfeasibleMigration as exc:
            self.log_event("infeasible", user=uid, dst=dst.id, note=str(exc))
            if rt.plan is not None:
                self._cancel_plan(uid, "destination capacity")
            else:
                rt.baseline_dst = None

    def _on_pre_mig_done(self, payload):
        uid = payload["user"]
        if self._stale(uid, payload):
            return
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        cont = world.container_of(user)
        cont.premig_done = True
        if cont.status == "pre-migrating":
            cont.status = "running"
        self.log_event("pre_mig_done", user=uid, src=cont.host, dst=cont.premig_dst)
        if rt.plan is not None:
            start = max(self.now, rt.plan.t_trig_mig)
        else:
            start = max(self.now, rt.ho_done_time)
        self.schedule(start, "mig_start", user=uid, dst=cont.premig_dst,
                      gen=payload["gen"])

    def _on_mig_start(self, payload):
        uid = payload["user"]
        if self._stale(uid, payload):
            return
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        cont = world.container_of(user)
        dst = world.servers[payload["dst"]]
        cause = "late_plan" if (rt.plan is not None and rt.plan.late) else "migration"
        migration.execute_migration(self, cont, dst, payload["gen"])
        self._open_span(uid, "container", cause)
        if rt.plan is not None and rt.plan.hands_over:
            # end-align the handover gap with the migration freeze
            est_mig = rt.plan.est.t_mig
            ho_dur = rt.plan.t_ho_duration
            ho_start = self.now + max(est_mig - ho_dur, 0.0)
            self.schedule(ho_start, "ho_start", user=uid, target=rt.plan.dst[0],
                          gen=payload["gen"])

    def _on_mig_restore(self, payload):
        uid = payload["user"]
        if self._stale(uid, payload):
            return
        cont = self.world.container_of(self.world.users[uid])
        if cont.status == "frozen":
            cont.status = "restoring"

    def _on_mig_done(self, payload):
        uid = payload["user"]
        if self._stale(uid, payload):
            return
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        cont = world.container_of(user)
        src = world.servers[payload["src"]]
        dst = world.servers[payload["dst"]]
        counter_before = payload["counter_before"]
        if cont.state_counter != counter_before:
            raise RuntimeError(
                f"state counter changed while frozen: {counter_before} -> {cont.state_counter}"
            )
        src.hosted.discard(cont.id)
        dst.reserved.discard(cont.id)
        dst.hosted.add(cont.id)
        cont.host = dst.id
        cont.status = "running"
        cont.premig_dst = None
        cont.premig_done = False
        self._close_span(uid, "container")
        self.log_event("mig_done", user=uid, src=src.id, dst=dst.id,
                       note=f"counter={cont.state_counter}")
        if rt.plan is not None:
            rt.pending.discard("mig")
            if not rt.pending:
                rt.plan = None
                rt.plan_started = False
        else:
            rt.baseline_dst = None
            rt.busy = False

    # -- handover events -------------------------------------------------------------

    def _on_ho_start(self, payload):
        uid = payload["user"]
        if self._stale(uid, payload):
            return
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        target_id = payload["target"]
        target = world.base_stations[target_id]
        measured = world.rssi_meas.get((uid, target_id), -math.inf)
        predicted = predict_rssi(user, target, self.now, world.radio)
        if max(measured, predicted) < world.radio.rssi_min_dbm:
            self.log_event("ho_rejected", user=uid, dst=target_id, note="below RSSI floor")
            if rt.plan is not None:
                rt.pending.discard("ho")
                if not rt.pending:
                    rt.plan = None
            return
        prev = user.bs
        user.bs = None
        self._open_span(uid, "radio", "handover")
        self.log_event("ho_start", user=uid, src=prev or "", dst=target_id)
        self.schedule(self.now + world.sim.handover_duration_s, "ho_done",
                      user=uid, target=target_id, prev=prev, gen=payload["gen"])

    def _on_ho_done(self, payload):
        uid = payload["user"]
        world = self.world
        user = world.users[uid]
        rt = self.rt[uid]
        target_id = payload["target"]
        # attach-side user cap: reattach to the previous BS on rejection
        if world.bs_user_count(target_id) + 1 > world.base_stations[target_id].max_users:
            user.bs = payload["prev"]
            self._close_span(uid, "radio")
            self.log_event("ho_rejected", user=uid, dst=target_id,
                           note="user cap reached; staying on previous BS")
        else:
            user.bs = target_id
            self._close_span(uid, "radio")
            self.log_event("ho_done", user=uid, src=payload["prev"] or "", dst=target_id)
        if self._stale(uid, payload):
            return
        if rt.plan is not None:
            rt.pending.discard("ho")
            if not rt.pending:
                rt.plan = None
                rt.plan_started = False
        elif rt.busy and rt.baseline_dst is None:
            rt.busy = False


def run(world: WorldState, planner_choice: str, seed: int | None = None,
        duration_s: float | None = None) -> RunOutput:
    """Simulate a fresh copy of the world; bit-identical for identical inputs."""
    world = copy.deepcopy(world)
    if seed is None:
        seed = world.sim.seed
    if duration_s is None:
        duration_s = world.sim.duration_s
    engine = Engine(world, planner_choice, seed)
    return engine.run(duration_s)
