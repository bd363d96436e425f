"""End-to-end delay estimation and per-request measurement.

Delay decomposes into processing + transmission + propagation + queuing.
Propagation is the round trip of one bit over the wired BS->server path,
i.e. twice the configured one-way latency; the wireless hop is neglected.
Result-return payloads are ignored in the transmission term.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import WorldState, path_delay
from .radio import bandwidth_from_rssi, predict_rssi

EWMA_ALPHA = 0.3  # weight of the newest sample in monitored-delay averages

STATUS_COMPLETED = "completed"
STATUS_LOST = "lost_downtime"


class UnreachableError(RuntimeError):
    """The requested path has no usable bandwidth (user out of coverage or no link)."""


@dataclass
class DelayBreakdown:
    processing_ms: float
    transmission_ms: float
    propagation_ms: float
    queuing_ms: float

    @property
    def total_ms(self) -> float:
        return self.processing_ms + self.transmission_ms + self.propagation_ms + self.queuing_ms


@dataclass
class RequestRecord:
    time_s: float
    user: str
    bs: str
    server: str
    proc_ms: float
    trans_ms: float
    prop_ms: float
    queue_ms: float
    total_ms: float
    status: str


def estimate_processing(d_proc_now_ms: float, c_src: float, c_dst: float) -> float:
    """Processing delay rescaled by the ratio of source to destination compute power."""
    if c_src <= 0 or c_dst <= 0:
        raise ValueError("compute power must be > 0")
    return d_proc_now_ms * (c_src / c_dst)


def estimate_transmission(task_bits: float, bw_access_bps: float, bw_backhaul_bps: float) -> float:
    """Task upload time in ms over the bottleneck of the access and backhaul links."""
    if task_bits <= 0:
        raise ValueError("task size must be > 0")
    bw = min(bw_access_bps, bw_backhaul_bps)
    if bw <= 0:
        raise UnreachableError("effective bandwidth is zero (out of coverage)")
    return task_bits / bw * 1000.0


def _pair_terms(user, bs_id: str, server_id: str, world: WorldState, t_prime: float):
    """(processing, transmission, propagation) in ms for hosting via (bs, server) at t_prime.

    The processing term is scaled from the user's monitored delay at the host
    it currently occupies, so deltas between two pairs are exactly antisymmetric.
    """
    bs = world.base_stations[bs_id]
    server = world.servers[server_id]
    rssi_hat = predict_rssi(user, bs, t_prime, world.radio)
    access = bandwidth_from_rssi(rssi_hat, world.radio)
    bw_backhaul, latency_ms = path_delay(world.links, bs_id, server_id)
    trans = estimate_transmission(user.task_size_bits, access, bw_backhaul)
    current_host = world.containers[user.container].host
    d_proc = user.d_proc_ewma_ms
    if d_proc is None:
        prof = world.profiles[user.app]
        d_proc = prof.base_proc_delay_ms * (
            prof.ref_compute_power / world.servers[current_host].compute_power
        )
    proc = estimate_processing(d_proc, world.servers[current_host].compute_power,
                               server.compute_power)
    prop = 2.0 * latency_ms
    return proc, trans, prop


def estimate_e2e(user, bs_id: str, server_id: str, world: WorldState,
                 t_prime: float) -> DelayBreakdown:
    """Predicted delay breakdown for serving the user via (bs, server) at t_prime."""
    proc, trans, prop = _pair_terms(user, bs_id, server_id, world, t_prime)
    return DelayBreakdown(
        processing_ms=proc,
        transmission_ms=trans,
        propagation_ms=prop,
        queuing_ms=world.servers[server_id].queue_delay_ms,
    )


def estimate_e2e_delta(user, current_pair, candidate_pair, world: WorldState,
                       t_prime: float) -> float:
    """Estimated E2E change (ms) of re-placing from current to candidate (positive = better).

    Computed as the difference of the two per-pair estimates, which keeps the
    no-move identity and antisymmetry exact.  Queuing cancels and is omitted.
    May be negative for a poorly chosen candidate.
    """
    cur = _pair_terms(user, current_pair[0], current_pair[1], world, t_prime)
    cand = _pair_terms(user, candidate_pair[0], candidate_pair[1], world, t_prime)
    return sum(cur) - sum(cand)


def measure_request(world: WorldState, user, send_time: float) -> RequestRecord:
    """Ground-truth delay of one offloaded task from the current world state.

    Requests sent while the user is detached, the container is frozen, or the
    access rate is zero are recorded as lost during downtime.  Completed
    requests increment the container's state counter and update the user's
    monitored-delay averages.
    """
    container = world.containers[user.container]
    lost = RequestRecord(send_time, user.id, user.bs or "", container.host,
                         0.0, 0.0, 0.0, 0.0, 0.0, STATUS_LOST)
    if user.bs is None or not container.available:
        return lost
    rssi = world.rssi_meas.get((user.id, user.bs))
    if rssi is None:
        return lost
    access = bandwidth_from_rssi(rssi, world.radio)
    if access <= 0.0:
        return lost

    server = world.servers[container.host]
    bw_backhaul, latency_ms = path_delay(world.links, user.bs, container.host)
    trans = estimate_transmission(user.task_size_bits, access, bw_backhaul)
    prof = container.profile
    proc = prof.base_proc_delay_ms * (prof.ref_compute_power / server.compute_power)
    prop = 2.0 * latency_ms
    queue = server.queue_delay_ms
    total = proc + trans + prop + queue

    container.state_counter += 1
    if user.d_proc_ewma_ms is None:
        user.d_proc_ewma_ms = proc
    else:
        user.d_proc_ewma_ms = EWMA_ALPHA * proc + (1.0 - EWMA_ALPHA) * user.d_proc_ewma_ms
    if user.e2e_ewma_ms is None:
        user.e2e_ewma_ms = total
    else:
        user.e2e_ewma_ms = EWMA_ALPHA * total + (1.0 - EWMA_ALPHA) * user.e2e_ewma_ms

    return RequestRecord(send_time, user.id, user.bs, container.host,
                         proc, trans, prop, queue, total, STATUS_COMPLETED)
