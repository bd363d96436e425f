"""Two-phase delta-checkpoint migration: time estimators, size probe, execution.

Pre-migration checkpoints the running container and ships the whole memory
state while the service keeps answering; migration freezes the container,
ships only the delta against the first checkpoint, and restores at the
destination.  Base images are assumed pre-staged everywhere, so image pull
time never appears.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .model import ContainerInstance, ContainerProfile, LinkMatrix, Server, path_delay

log = logging.getLogger(__name__)


class MigrationProtocolError(RuntimeError):
    """Migration steps were requested out of order."""


class InfeasibleMigration(RuntimeError):
    """The destination cannot take the container (capacity exhausted)."""


@dataclass(frozen=True)
class MigrationEstimate:
    """Phase durations in seconds; composites are derived so the identities hold exactly."""

    t_chkpt: float
    t_pre_trans: float
    t_trans: float
    t_restore: float

    @property
    def t_pre_mig(self) -> float:
        return self.t_chkpt + self.t_pre_trans

    @property
    def t_mig(self) -> float:
        return self.t_chkpt + self.t_trans + self.t_restore

    @property
    def t_total(self) -> float:
        return self.t_pre_mig + self.t_mig


@dataclass
class CalibrationHistory:
    """Observed (bytes processed, compute power, wall seconds) per server and phase."""

    checkpoints: list = field(default_factory=list)
    restores: list = field(default_factory=list)

    def record_checkpoint(self, nbytes: float, compute_power: float, wall_s: float) -> None:
        if nbytes < 0 or wall_s < 0:
            raise ValueError("calibration entries must be nonnegative")
        self.checkpoints.append((nbytes, compute_power, wall_s))

    def record_restore(self, nbytes: float, compute_power: float, wall_s: float) -> None:
        if nbytes < 0 or wall_s < 0:
            raise ValueError("calibration entries must be nonnegative")
        self.restores.append((nbytes, compute_power, wall_s))


def estimate_checkpoint_time(profile: ContainerProfile, server: Server) -> float:
    """Checkpoint wall time: coefficient * image size / compute power."""
    if server.compute_power <= 0:
        raise ValueError(f"server {server.id!r}: compute power must be > 0")
    if server.checkpoint_coeff == 0.0:
        log.warning("server %s has a zero checkpoint coefficient; checkpoint time is 0",
                    server.id)
    return server.checkpoint_coeff * profile.image_bytes / server.compute_power


def probed_sizes(container: ContainerInstance) -> tuple[float, float]:
    """(full checkpoint, delta) bytes: probed values if available, profile values otherwise."""
    full = container.probed_checkpoint_bytes
    delta = container.probed_delta_bytes
    if full is None:
        full = container.profile.checkpoint_bytes
    if delta is None:
        delta = container.profile.delta_bytes
    return full, delta


def estimate_times(
    profile: ContainerProfile,
    src: Server,
    dst: Server,
    links: LinkMatrix,
    checkpoint_bytes: float | None = None,
    delta_bytes: float | None = None,
) -> MigrationEstimate:
    """Full phase-time estimate for migrating src -> dst over the declared link.

    Self-migration (dst == src) keeps the checkpoint and restore phases but
    transfers nothing.
    """
    full = profile.checkpoint_bytes if checkpoint_bytes is None else checkpoint_bytes
    delta = profile.delta_bytes if delta_bytes is None else delta_bytes
    t_chkpt = estimate_checkpoint_time(profile, src)
    if src.id == dst.id:
        t_pre_trans = 0.0
        t_trans = 0.0
    else:
        bw_bps, _ = path_delay(links, src.id, dst.id)
        t_pre_trans = full * 8.0 / bw_bps
        t_trans = delta * 8.0 / bw_bps
    restored_bytes = profile.image_bytes + full + delta
    t_restore = dst.restore_coeff * restored_bytes / dst.compute_power
    return MigrationEstimate(t_chkpt, t_pre_trans, t_trans, t_restore)


def probe_delta_sizes(container: ContainerInstance, t0: float,
                      deployed_at: float = 0.0, warmup_s: float = 10.0) -> tuple[float, float]:
    """Fire two consecutive checkpoints against the running container and record sizes.

    The first checkpoint's size and the difference against the second become
    the estimates used by every later migration plan.  The container keeps
    running; its status is untouched.
    """
    if container.status != "running":
        raise MigrationProtocolError(
            f"container {container.id!r} is {container.status}, not running"
        )
    if t0 < deployed_at + warmup_s:
        raise MigrationProtocolError(
            f"container {container.id!r}: probe at {t0}s precedes the {warmup_s}s warm-up"
        )
    container.probed_checkpoint_bytes = container.profile.checkpoint_bytes
    container.probed_delta_bytes = container.profile.delta_bytes
    return container.probed_checkpoint_bytes, container.probed_delta_bytes


def _fit_slope(entries) -> float:
    """Least-squares slope through the origin of wall time vs bytes/compute."""
    sxy = 0.0
    sxx = 0.0
    for nbytes, power, wall in entries:
        x = nbytes / power
        sxy += x * wall
        sxx += x * x
    if sxx == 0.0:
        return 1.0
    return sxy / sxx


def calibrate(history: CalibrationHistory) -> tuple[float, float]:
    """Fit (checkpoint, restore) coefficients from history; (1.0, 1.0) priors when empty."""
    chk = _fit_slope(history.checkpoints) if history.checkpoints else 1.0
    rst = _fit_slope(history.restores) if history.restores else 1.0
    return chk, rst


# ---------------------------------------------------------------------------
# Execution.  These run inside the single-owner simulation loop; the engine
# argument provides now/rng/schedule plus the world being mutated.


def _noise(engine) -> float:
    return engine.rng.lognormvariate(0.0, engine.world.sim.noise_sigma)


def execute_pre_migration(engine, container: ContainerInstance, dst: Server, gen: int) -> float:
    """Start the whole-state copy toward dst; returns the completion time.

    The container keeps serving requests.  Destination capacity is reserved up
    front; an over-capacity destination aborts with no state change.
    """
    world = engine.world
    if container.status != "running":
        raise MigrationProtocolError(
            f"container {container.id!r}: pre-migration requires a running container"
        )
    src = world.servers[container.host]
    if dst.id == src.id:
        container.premig_dst = dst.id
        container.premig_done = True
        engine.schedule(engine.now, "pre_mig_done", user=engine.user_of(container), gen=gen)
        return engine.now
    demand = container.profile.demand
    if not demand.fits_within(world.server_free(dst.id)):
        raise InfeasibleMigration(
            f"server {dst.id!r} lacks capacity for container {container.id!r}"
        )
    dst.reserved.add(container.id)
    container.status = "pre-migrating"
    container.premig_dst = dst.id
    container.premig_done = False

    full, delta = probed_sizes(container)
    est = estimate_times(container.profile, src, dst, world.links, full, delta)
    wall_chkpt = est.t_chkpt * _noise(engine)
    wall_trans = est.t_pre_trans * _noise(engine)
    engine.histories[src.id].record_checkpoint(container.profile.image_bytes,
                                               src.compute_power, wall_chkpt)
    done = engine.now + wall_chkpt + wall_trans
    engine.log_event("pre_mig_start", user=engine.user_of(container),
                     src=src.id, dst=dst.id, nbytes=full)
    engine.schedule(done, "pre_mig_done", user=engine.user_of(container), gen=gen)
    return done


def execute_migration(engine, container: ContainerInstance, dst: Server, gen: int):
    """Freeze, ship the delta, and restore at dst; returns (restore_begin, done, frozen_wall).

    Requires a completed pre-migration toward the same destination.  The
    engine's mig_done handler performs the host switch so the state counter
    survives bit-exactly.
    """
    world = engine.world
    if not container.premig_done or container.premig_dst != dst.id:
        raise MigrationProtocolError(
            f"container {container.id!r}: migration to {dst.id!r} without completed pre-migration"
        )
    src = world.servers[container.host]
    full, delta = probed_sizes(container)
    est = estimate_times(container.profile, src, dst, world.links, full, delta)
    wall_chkpt = est.t_chkpt * _noise(engine)
    wall_trans = est.t_trans * _noise(engine)
    wall_restore = est.t_restore * _noise(engine)
    engine.histories[src.id].record_checkpoint(container.profile.image_bytes,
                                               src.compute_power, wall_chkpt)
    engine.histories[dst.id].record_restore(container.profile.image_bytes + full + delta,
                                            dst.compute_power, wall_restore)
    container.status = "frozen"
    restore_begin = engine.now + wall_chkpt + wall_trans
    done = restore_begin + wall_restore
    engine.log_event("mig_start", user=engine.user_of(container),
                     src=src.id, dst=dst.id, nbytes=delta,
                     note=f"counter={container.state_counter}")
    engine.schedule(restore_begin, "mig_restore", user=engine.user_of(container), gen=gen)
    engine.schedule(done, "mig_done", user=engine.user_of(container), gen=gen,
                    src=src.id, dst=dst.id, counter_before=container.state_counter)
    return restore_begin, done, done - engine.now
