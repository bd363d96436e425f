"""Coordinated trigger timing for pre-migration, migration, and handover.

A plan back-schedules from the predicted handover-necessity time so the
frozen migration phase completes just before the user must switch BS, with a
configurable error margin.  Handover downtime is end-aligned with migration
downtime (when the handover is the longer action, both start together), so
one merged unavailability interval of length max(migration time, handover
time) results instead of two separate gaps.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import WorldState
from .radio import predict_handover_time


@dataclass
class OrchestratorConfig:
    margin: float = 0.10          # fractional slack applied to every estimated duration
    horizon_dt_s: float = 30.0    # look-ahead for handover prediction and replanning
    sla_check_period_s: float = 1.0


@dataclass
class MigrationPlan:
    user: str
    src: tuple            # (bs, server) now
    dst: tuple            # (bs, server) planned
    t_ho_need: float      # predicted time the handover becomes necessary
    est: object | None    # migration.MigrationEstimate, None for handover-only plans
    t_ho_duration: float
    t_trig_pre_mig: float
    t_trig_mig: float
    t_trig_ho: float
    est_downtime: float
    late: bool = False    # prediction arrived too late; start immediately
    generation: int = 0

    @property
    def migrates(self) -> bool:
        return self.dst[1] != self.src[1]

    @property
    def hands_over(self) -> bool:
        return self.dst[0] != self.src[0]


@dataclass
class PlanRequest:
    user: str
    t_ho_need: float
    target_bs: str | None
    reason: str  # "handover" | "sla"


def build_plan(user_id: str, src: tuple, dst: tuple, est, t_ho_need: float,
               t_ho_duration: float, cfg: OrchestratorConfig, now: float) -> MigrationPlan:
    """Schedule the three triggers so downtime collapses to max(t_mig, t_ho).

    Migration completes at t_ho_need with (1+margin) slack on each phase.
    Handover is end-aligned with the migration freeze; when the handover is
    the longer action both start together.  A schedule whose start already
    passed degrades to an immediate-start plan flagged late.
    """
    if dst == src:
        raise ValueError("a plan needs a new BS or a new server")
    slack = 1.0 + cfg.margin
    if dst[1] != src[1]:
        t_trig_mig = t_ho_need - slack * est.t_mig
        t_trig_pre_mig = t_trig_mig - slack * est.t_pre_mig
        if dst[0] != src[0]:
            if est.t_mig >= t_ho_duration:
                t_trig_ho = (t_trig_mig + est.t_mig) - t_ho_duration
            else:
                t_trig_ho = t_trig_mig
        else:
            t_trig_ho = t_trig_mig  # no handover will actually fire
        est_downtime = max(est.t_mig, t_ho_duration if dst[0] != src[0] else 0.0)
        late = t_trig_pre_mig < now
        if late:
            shift = now - t_trig_pre_mig
            t_trig_pre_mig = now
            t_trig_mig += shift
            t_trig_ho += shift
    else:
        # handover-only plan: complete the switch by t_ho_need with margin
        t_trig_ho = t_ho_need - slack * t_ho_duration
        late = t_trig_ho < now
        if late:
            t_trig_ho = now
        t_trig_pre_mig = t_trig_ho
        t_trig_mig = t_trig_ho
        est_downtime = t_ho_duration
    return MigrationPlan(
        user=user_id,
        src=tuple(src),
        dst=tuple(dst),
        t_ho_need=t_ho_need,
        est=est,
        t_ho_duration=t_ho_duration,
        t_trig_pre_mig=t_trig_pre_mig,
        t_trig_mig=t_trig_mig,
        t_trig_ho=t_trig_ho,
        est_downtime=est_downtime,
        late=late,
    )


def trigger_commands(plan: MigrationPlan) -> list:
    """The (time, command) stream the simulation loop should execute for this plan."""
    out = []
    if plan.migrates:
        out.append((plan.t_trig_pre_mig, "pre_mig"))
        out.append((plan.t_trig_mig, "mig"))
    if plan.hands_over:
        out.append((plan.t_trig_ho, "ho"))
    return sorted(out)


def should_cancel(plan: MigrationPlan, new_t_ho_need: float | None,
                  cfg: OrchestratorConfig) -> bool:
    """True when the predicted necessity time drifted past the plan's tolerance.

    Checked only before the pre-migration trigger fires; a vanished prediction
    (user turned around) always cancels.
    """
    if new_t_ho_need is None:
        return True
    scale = plan.est.t_mig if plan.est is not None else plan.t_ho_duration
    return abs(new_t_ho_need - plan.t_ho_need) > cfg.margin * scale


def monitor_tick(world: WorldState, user, now: float, cfg: OrchestratorConfig,
                 crossing="auto") -> PlanRequest | None:
    """Raise a planning request on an approaching handover or an SLA breach.

    ``crossing`` may carry a precomputed (t_ho, target_bs) prediction to avoid
    rescanning; by default the radio prediction runs here.
    """
    if crossing == "auto":
        current = world.base_stations[user.bs] if user.bs else None
        if current is None:
            crossing = None
        else:
            others = [b for b in world.base_stations.values() if b.id != current.id]
            crossing = predict_handover_time(user, current, others, world.radio,
                                             now, cfg.horizon_dt_s)
    if crossing is not None and crossing[0] <= now + cfg.horizon_dt_s:
        return PlanRequest(user=user.id, t_ho_need=crossing[0],
                           target_bs=crossing[1], reason="handover")
    if user.e2e_ewma_ms is not None and user.e2e_ewma_ms > user.sla_max_delay_ms:
        return PlanRequest(user=user.id, t_ho_need=now + cfg.horizon_dt_s,
                           target_bs=None, reason="sla")
    return None
