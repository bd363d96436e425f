"""Domain entities, world state, and scenario loading.

Unit conventions used across the package:
  positions        planar metres
  bandwidth        bits/s
  link latency     one-way milliseconds (propagation charges the round trip)
  sizes            bytes (task payloads are carried as bits)
  simulated time   seconds
  delay components milliseconds
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field


class ScenarioError(ValueError):
    """Malformed scenario document or violated scenario invariant."""


class LinkNotDeclared(KeyError):
    """A (node, node) pair was requested that the link matrix does not declare."""


SERVER_TIERS = ("edge-L1", "edge-L2", "cloud")

MB = 1e6  # decimal megabyte, the unit scenario files quote sizes in


@dataclass(frozen=True)
class Resources:
    """4-dimensional resource vector (cpu, memory, storage, net I/O), compared componentwise."""

    cpu_millicores: float = 0.0
    memory_bytes: float = 0.0
    storage_bytes: float = 0.0
    net_io_bps: float = 0.0

    def __add__(self, other: "Resources") -> "Resources":
        return Resources(
            self.cpu_millicores + other.cpu_millicores,
            self.memory_bytes + other.memory_bytes,
            self.storage_bytes + other.storage_bytes,
            self.net_io_bps + other.net_io_bps,
        )

    def __sub__(self, other: "Resources") -> "Resources":
        return Resources(
            self.cpu_millicores - other.cpu_millicores,
            self.memory_bytes - other.memory_bytes,
            self.storage_bytes - other.storage_bytes,
            self.net_io_bps - other.net_io_bps,
        )

    def fits_within(self, cap: "Resources") -> bool:
        return (
            self.cpu_millicores <= cap.cpu_millicores
            and self.memory_bytes <= cap.memory_bytes
            and self.storage_bytes <= cap.storage_bytes
            and self.net_io_bps <= cap.net_io_bps
        )


ZERO_RESOURCES = Resources()


@dataclass
class ContainerProfile:
    """Static per-application container characteristics."""

    app_name: str
    image_bytes: float
    demand: Resources
    base_proc_delay_ms: float  # processing delay at ref_compute_power (0 for the echo service)
    ref_compute_power: float
    checkpoint_bytes: float    # full memory-state snapshot size
    delta_bytes: float         # second-snapshot difference size

    def validate(self) -> None:
        if self.image_bytes <= 0 or self.checkpoint_bytes <= 0:
            raise ScenarioError(f"app {self.app_name!r}: image and checkpoint sizes must be > 0")
        if self.delta_bytes < 0 or self.delta_bytes > self.checkpoint_bytes:
            raise ScenarioError(
                f"app {self.app_name!r}: delta size must satisfy 0 <= delta <= checkpoint"
            )
        if self.base_proc_delay_ms < 0:
            raise ScenarioError(f"app {self.app_name!r}: base_proc_delay_ms must be >= 0")
        if self.ref_compute_power <= 0:
            raise ScenarioError(f"app {self.app_name!r}: ref_compute_power must be > 0")


@dataclass
class BaseStation:
    id: str
    position: tuple[float, float]
    tx_power_dbm: float = 20.0
    max_users: int = 8
    server: str | None = None  # collocated server id, if any


@dataclass
class Server:
    id: str
    tier: str
    compute_power: float              # benchmark score, events/s
    capacity: Resources
    checkpoint_coeff: float = 1.0     # wall seconds per (byte / compute_power) checkpointed
    restore_coeff: float = 1.0        # same, for restores
    position: tuple[float, float] | None = None
    queue_delay_ms: float = 0.0
    hosted: set = field(default_factory=set)    # container ids running here
    reserved: set = field(default_factory=set)  # container ids pre-migrating in


@dataclass
class ContainerInstance:
    """A deployed, running service instance owned by exactly one user."""

    id: str
    profile: ContainerProfile
    host: str
    state_counter: int = 0
    status: str = "running"  # running | pre-migrating | frozen | restoring
    # set by the delta-size probe; estimators fall back to the profile before probing
    probed_checkpoint_bytes: float | None = None
    probed_delta_bytes: float | None = None
    premig_dst: str | None = None
    premig_done: bool = False

    @property
    def available(self) -> bool:
        return self.status in ("running", "pre-migrating")


@dataclass
class MobileUser:
    id: str
    app: str
    waypoints: list[tuple[float, float]]
    speed_mps: float
    task_size_bits: float
    task_rate_hz: float
    sla_max_delay_ms: float
    start_offset_m: float = 0.0
    container: str = ""
    bs: str | None = None     # attached base station (None only during a handover gap)
    position: tuple[float, float] = (0.0, 0.0)
    d_proc_ewma_ms: float | None = None  # monitored processing delay at the current host
    e2e_ewma_ms: float | None = None

    def __post_init__(self):
        self.position = tuple(self.waypoints[0])
        self._seg_lengths = [
            math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:])
        ]
        self._path_length = sum(self._seg_lengths)

    @property
    def path_length_m(self) -> float:
        return self._path_length

    def position_at(self, t: float) -> tuple[float, float]:
        """Deterministic round-trip position along the waypoint polyline at time t."""
        if self._path_length == 0.0:
            return tuple(self.waypoints[0])
        period = 2.0 * self._path_length
        s = math.fmod(self.speed_mps * t + self.start_offset_m, period)
        if s < 0.0:
            s += period
        if s > self._path_length:
            s = period - s
        for (a, b), seg in zip(zip(self.waypoints, self.waypoints[1:]), self._seg_lengths):
            if s <= seg or seg == 0.0:
                if seg == 0.0:
                    continue
                f = s / seg
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            s -= seg
        return tuple(self.waypoints[-1])


@dataclass
class LinkMatrix:
    """Symmetric (bandwidth, one-way latency) lookup over BS and server ids."""

    entries: dict = field(default_factory=dict)  # (a, b) sorted tuple -> (bw_bps, latency_ms)
    local_bw_bps: float = 1e9                    # self links and BS<->collocated-server hops

    def declare(self, a: str, b: str, bw_bps: float, latency_ms: float) -> None:
        if bw_bps <= 0 or latency_ms < 0:
            raise ScenarioError(f"link {a}<->{b}: need bw > 0 and latency >= 0")
        self.entries[tuple(sorted((a, b)))] = (bw_bps, latency_ms)

    def has(self, a: str, b: str) -> bool:
        return a == b or tuple(sorted((a, b))) in self.entries


def path_delay(links: LinkMatrix, a: str, b: str) -> tuple[float, float]:
    """Configured (bandwidth bits/s, one-way latency ms) between two nodes; symmetric."""
    if a == b:
        return (links.local_bw_bps, 0.0)
    key = tuple(sorted((a, b)))
    if key not in links.entries:
        raise LinkNotDeclared(f"no link declared between {a!r} and {b!r}")
    return links.entries[key]


@dataclass
class SimParams:
    duration_s: float = 1600.0
    seed: int = 1
    tick_ms: float = 1000.0
    noise_sigma: float = 0.05        # lognormal sigma on executed migration phase durations
    handover_duration_s: float = 0.5
    probe_warmup_s: float = 10.0

    @property
    def tick_s(self) -> float:
        return self.tick_ms / 1000.0


@dataclass
class WorldState:
    """Everything the simulation loop owns: static topology plus mutable runtime state."""

    users: dict
    base_stations: dict
    servers: dict
    links: LinkMatrix
    profiles: dict
    containers: dict
    radio: "object"         # radio.RadioConfig
    orchestrator: "object"  # orchestrator.OrchestratorConfig
    planner: "object"       # planner.PlannerParams
    sim: SimParams
    rssi_meas: dict = field(default_factory=dict)  # (user_id, bs_id) -> latest shadowed dBm
    time_s: float = 0.0

    def container_of(self, user: MobileUser) -> ContainerInstance:
        return self.containers[user.container]

    def server_used(self, server_id: str) -> Resources:
        srv = self.servers[server_id]
        used = ZERO_RESOURCES
        for cid in sorted(srv.hosted | srv.reserved):
            used = used + self.containers[cid].profile.demand
        return used

    def server_free(self, server_id: str) -> Resources:
        return self.servers[server_id].capacity - self.server_used(server_id)

    def bs_user_count(self, bs_id: str) -> int:
        return sum(1 for u in self.users.values() if u.bs == bs_id)

    def capacity_violations(self) -> list[str]:
        """Servers whose hosted+reserved demand exceeds capacity componentwise."""
        bad = []
        for sid in sorted(self.servers):
            if not self.server_used(sid).fits_within(self.servers[sid].capacity):
                bad.append(sid)
        return bad


# ---------------------------------------------------------------------------
# Scenario loading


def _req(section: dict, key: str, where: str):
    if key not in section:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return section[key]


def _resources(section: dict, where: str) -> Resources:
    try:
        return Resources(
            cpu_millicores=float(section.get("cpu_millicores", 0.0)),
            memory_bytes=float(section.get("memory_mb", 0.0)) * MB,
            storage_bytes=float(section.get("storage_mb", 0.0)) * MB,
            net_io_bps=float(section.get("net_io_mbps", 0.0)) * 1e6,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: bad resource vector ({exc})") from exc


def load_scenario(source) -> WorldState:
    """Build a WorldState from a scenario document.

    ``source`` may be a mapping, a path to a YAML file, or YAML text.
    Loading is deterministic and validates ids, references, and invariants,
    reporting the offending entity in every error.
    """
    import yaml

    from .orchestrator import OrchestratorConfig
    from .planner import PlannerParams
    from .radio import RadioConfig, validate_rate_table

    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"scenario parse failure: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a key/value tree")

    sim_sec = doc.get("sim", {}) or {}
    sim = SimParams(
        duration_s=float(sim_sec.get("duration_s", 1600.0)),
        seed=int(sim_sec.get("seed", 1)),
        tick_ms=float(sim_sec.get("tick_ms", 1000.0)),
        noise_sigma=float(sim_sec.get("noise_sigma", 0.05)),
        handover_duration_s=float(sim_sec.get("handover_duration_s", 0.5)),
        probe_warmup_s=float(sim_sec.get("probe_warmup_s", 10.0)),
    )
    if sim.duration_s < 0 or sim.tick_ms <= 0 or sim.noise_sigma < 0:
        raise ScenarioError("sim: duration_s >= 0, tick_ms > 0, noise_sigma >= 0 required")

    radio_sec = doc.get("radio", {}) or {}
    rate_table = RadioConfig.default_rate_table()
    if "rate_table" in radio_sec:
        rate_table = tuple(
            (float(row["rssi_dbm"]), float(row["rate_mbps"]) * 1e6)
            for row in radio_sec["rate_table"]
        )
    radio_cfg = RadioConfig(
        pathloss_exponent=float(radio_sec.get("pathloss_exponent", 3.0)),
        ref_distance_m=float(radio_sec.get("ref_distance_m", 1.0)),
        pathloss_at_ref_db=float(radio_sec.get("pathloss_at_ref_db", 40.0)),
        shadowing_sigma_db=float(radio_sec.get("shadowing_sigma_db", 2.0)),
        rssi_min_dbm=float(radio_sec.get("rssi_min_dbm", -82.0)),
        hysteresis_margin_db=float(radio_sec.get("hysteresis_margin_db", 5.0)),
        rate_table=rate_table,
    )
    try:
        validate_rate_table(radio_cfg)
    except ValueError as exc:
        raise ScenarioError(f"radio: {exc}") from exc

    plan_sec = doc.get("planner", {}) or {}
    planner_params = PlannerParams(
        downtime_weight=float(plan_sec.get("downtime_weight", 1000.0)),
        gain_window_s=float(plan_sec.get("gain_window_s", 30.0)),
        node_budget=int(plan_sec.get("node_budget", 200000)),
    )

    orch_sec = doc.get("orchestrator", {}) or {}
    orch_cfg = OrchestratorConfig(
        margin=float(orch_sec.get("margin", 0.10)),
        horizon_dt_s=float(orch_sec.get("horizon_dt_s", 30.0)),
        sla_check_period_s=float(orch_sec.get("sla_check_period_s", 1.0)),
    )
    if orch_cfg.margin < 0 or orch_cfg.horizon_dt_s <= 0:
        raise ScenarioError("orchestrator: margin >= 0 and horizon_dt_s > 0 required")

    topo = doc.get("topology", {}) or {}
    servers: dict[str, Server] = {}
    for sec in topo.get("servers", []) or []:
        sid = str(_req(sec, "id", "server"))
        if sid in servers:
            raise ScenarioError(f"server {sid!r}: duplicate id")
        tier = str(sec.get("tier", "edge-L1"))
        if tier not in SERVER_TIERS:
            raise ScenarioError(f"server {sid!r}: unknown tier {tier!r}")
        srv = Server(
            id=sid,
            tier=tier,
            compute_power=float(_req(sec, "compute_power", f"server {sid!r}")),
            capacity=_resources(sec.get("capacity", {}) or {}, f"server {sid!r}"),
            checkpoint_coeff=float(sec.get("checkpoint_coeff", 1.0)),
            restore_coeff=float(sec.get("restore_coeff", 1.0)),
            position=tuple(sec["position"]) if sec.get("position") is not None else None,
            queue_delay_ms=float(sec.get("queue_delay_ms", 0.0)),
        )
        if srv.compute_power <= 0:
            raise ScenarioError(f"server {sid!r}: compute_power must be > 0")
        if srv.checkpoint_coeff <= 0 or srv.restore_coeff <= 0:
            raise ScenarioError(f"server {sid!r}: checkpoint/restore coefficients must be > 0")
        servers[sid] = srv

    base_stations: dict[str, BaseStation] = {}
    for sec in topo.get("base_stations", []) or []:
        bid = str(_req(sec, "id", "base station"))
        if bid in base_stations or bid in servers:
            raise ScenarioError(f"base station {bid!r}: duplicate id")
        bs = BaseStation(
            id=bid,
            position=tuple(_req(sec, "position", f"base station {bid!r}")),
            tx_power_dbm=float(sec.get("tx_power_dbm", 20.0)),
            max_users=int(sec.get("max_users", 8)),
            server=str(sec["server"]) if sec.get("server") is not None else None,
        )
        if bs.max_users < 1:
            raise ScenarioError(f"base station {bid!r}: max_users must be >= 1")
        if bs.server is not None and bs.server not in servers:
            raise ScenarioError(
                f"base station {bid!r}: references undefined server {bs.server!r}"
            )
        base_stations[bid] = bs

    links_sec = doc.get("links", {}) or {}
    links = LinkMatrix(local_bw_bps=float(links_sec.get("local_bw_mbps", 1000.0)) * 1e6)
    known = set(servers) | set(base_stations)
    for sec in links_sec.get("entries", []) or []:
        a, b = str(_req(sec, "a", "link")), str(_req(sec, "b", "link"))
        for node in (a, b):
            if node not in known:
                raise ScenarioError(f"link {a!r}<->{b!r}: references undefined node {node!r}")
        links.declare(a, b, float(_req(sec, "bw_mbps", f"link {a}<->{b}")) * 1e6,
                      float(sec.get("latency_ms", 0.0)))

    # Every server pair must be reachable for migration; BS->server paths not
    # declared explicitly are composed through the BS's collocated server.
    sids = sorted(servers)
    for i, a in enumerate(sids):
        for b in sids[i + 1:]:
            if not links.has(a, b):
                raise ScenarioError(f"link matrix: no server-server link {a!r}<->{b!r}")
    for bs in base_stations.values():
        for sid in sids:
            if links.has(bs.id, sid):
                continue
            if bs.server is None:
                raise ScenarioError(
                    f"base station {bs.id!r}: no path to server {sid!r} "
                    "(declare a link or a collocated server)"
                )
            if bs.server == sid:
                links.declare(bs.id, sid, links.local_bw_bps, 0.0)
            else:
                bw, lat = path_delay(links, bs.server, sid)
                links.declare(bs.id, sid, min(links.local_bw_bps, bw), lat)

    profiles: dict[str, ContainerProfile] = {}
    for sec in doc.get("apps", []) or []:
        name = str(_req(sec, "name", "app"))
        if name in profiles:
            raise ScenarioError(f"app {name!r}: duplicate name")
        prof = ContainerProfile(
            app_name=name,
            image_bytes=float(_req(sec, "image_mb", f"app {name!r}")) * MB,
            demand=_resources(sec.get("demand", {}) or {}, f"app {name!r}"),
            base_proc_delay_ms=float(sec.get("base_proc_delay_ms", 0.0)),
            ref_compute_power=float(sec.get("ref_compute_power", 1.0)),
            checkpoint_bytes=float(_req(sec, "checkpoint_mb", f"app {name!r}")) * MB,
            delta_bytes=float(_req(sec, "delta_mb", f"app {name!r}")) * MB,
        )
        prof.validate()
        profiles[name] = prof

    users: dict[str, MobileUser] = {}
    containers: dict[str, ContainerInstance] = {}
    for sec in doc.get("users", []) or []:
        uid = str(_req(sec, "id", "user"))
        if uid in users:
            raise ScenarioError(f"user {uid!r}: duplicate id")
        app = str(_req(sec, "app", f"user {uid!r}"))
        if app not in profiles:
            raise ScenarioError(f"user {uid!r}: references undefined app {app!r}")
        waypoints = [tuple(map(float, p)) for p in _req(sec, "waypoints", f"user {uid!r}")]
        if not waypoints:
            raise ScenarioError(f"user {uid!r}: waypoints must be non-empty")
        user = MobileUser(
            id=uid,
            app=app,
            waypoints=waypoints,
            speed_mps=float(_req(sec, "speed_mps", f"user {uid!r}")),
            task_size_bits=float(_req(sec, "task_size_kb", f"user {uid!r}")) * 1000.0 * 8.0,
            task_rate_hz=float(_req(sec, "task_rate_hz", f"user {uid!r}")),
            sla_max_delay_ms=float(sec.get("sla_ms", math.inf)),
            start_offset_m=float(sec.get("start_offset_m", 0.0)),
        )
        if user.speed_mps <= 0:
            raise ScenarioError(f"user {uid!r}: speed_mps must be > 0")
        if user.task_size_bits <= 0 or user.task_rate_hz <= 0:
            raise ScenarioError(f"user {uid!r}: task size and rate must be > 0")
        if not base_stations:
            raise ScenarioError(f"user {uid!r}: scenario declares no base stations")
        if not servers:
            raise ScenarioError(f"user {uid!r}: scenario declares no servers")
        user.container = f"ct-{uid}"
        users[uid] = user

    world = WorldState(
        users=users,
        base_stations=base_stations,
        servers=servers,
        links=links,
        profiles=profiles,
        containers=containers,
        radio=radio_cfg,
        orchestrator=orch_cfg,
        planner=planner_params,
        sim=sim,
    )
    return world
