"""Signal generation, rate mapping, and handover-time prediction.

RSSI follows a log-distance path-loss model with optional log-normal
shadowing.  Measurements (fed to the monitor) include shadowing; predictions
(fed to the planner) use the mean model only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class RadioConfig:
    pathloss_exponent: float = 3.0
    ref_distance_m: float = 1.0
    pathloss_at_ref_db: float = 40.0
    shadowing_sigma_db: float = 2.0
    rssi_min_dbm: float = -82.0       # decode floor, constraint on any association
    hysteresis_margin_db: float = 5.0
    # ordered (rssi threshold dBm -> rate bits/s); single-stream 802.11n-like ladder
    rate_table: tuple = field(default_factory=lambda: RadioConfig.default_rate_table())

    @staticmethod
    def default_rate_table() -> tuple:
        return (
            (-82.0, 6.5e6),
            (-79.0, 13.0e6),
            (-76.0, 19.5e6),
            (-72.0, 26.0e6),
            (-67.0, 39.0e6),
            (-62.0, 52.0e6),
            (-57.0, 58.5e6),
            (-52.0, 65.0e6),
        )


def validate_rate_table(cfg: RadioConfig) -> None:
    table = cfg.rate_table
    if not table:
        raise ValueError("rate_table must be non-empty")
    for (t0, r0), (t1, r1) in zip(table, table[1:]):
        if t1 <= t0:
            raise ValueError("rate_table thresholds must be strictly increasing")
        if r1 < r0:
            raise ValueError("rate_table rates must be nondecreasing")
    if cfg.rssi_min_dbm > table[0][0]:
        raise ValueError("rssi_min must not exceed the lowest rate_table threshold")


def mean_rssi(user_pos, bs, cfg: RadioConfig) -> float:
    """Noiseless log-distance RSSI in dBm, distance clamped at the reference."""
    d = max(math.dist(user_pos, bs.position), cfg.ref_distance_m)
    return (
        bs.tx_power_dbm
        - cfg.pathloss_at_ref_db
        - 10.0 * cfg.pathloss_exponent * math.log10(d / cfg.ref_distance_m)
    )


def rssi_at(user_pos, bs, cfg: RadioConfig, rng=None) -> float:
    """Measured RSSI: mean model plus log-normal shadowing from the run's noise source."""
    rssi = mean_rssi(user_pos, bs, cfg)
    if rng is not None and cfg.shadowing_sigma_db > 0.0:
        rssi += rng.gauss(0.0, cfg.shadowing_sigma_db)
    return rssi


def predict_rssi(user, bs, t_prime: float, cfg: RadioConfig, now: float | None = None) -> float:
    """Mean-model RSSI at the user's extrapolated trajectory position at t_prime."""
    if now is not None and t_prime < now:
        raise ValueError(f"t_prime {t_prime} precedes current time {now}")
    return mean_rssi(user.position_at(t_prime), bs, cfg)


def bandwidth_from_rssi(rssi: float, cfg: RadioConfig) -> float:
    """Step-function access rate; thresholds are inclusive lower bounds, 0 below the floor."""
    rate = 0.0
    for threshold, table_rate in cfg.rate_table:
        if rssi >= threshold:
            rate = table_rate
        else:
            break
    return rate


def predict_handover_time(
    user,
    current_bs,
    candidates,
    cfg: RadioConfig,
    now: float,
    horizon_s: float,
    step_s: float = 0.5,
):
    """Earliest predicted time a candidate exceeds the serving BS by the hysteresis margin.

    Returns (t_ho, candidate_id) for the earliest crossing within
    [now, now + horizon_s] whose candidate still clears the decode floor,
    or None when no candidate crosses in the horizon.
    """
    best = None
    for cand in sorted(candidates, key=lambda b: b.id):
        if cand.id == current_bs.id:
            continue

        def margin_gap(t, _cand=cand):
            return (
                predict_rssi(user, _cand, t, cfg)
                - predict_rssi(user, current_bs, t, cfg)
                - cfg.hysteresis_margin_db
            )

        t_cross = None
        t_lo, g_lo = now, margin_gap(now)
        if g_lo >= 0.0:
            t_cross = now
        else:
            t = now + step_s
            end = now + horizon_s
            while t <= end + 1e-12:
                g = margin_gap(t)
                if g >= 0.0:
                    # bisect the bracketing step down to microsecond resolution
                    lo, hi = t_lo, t
                    for _ in range(60):
                        mid = 0.5 * (lo + hi)
                        if margin_gap(mid) >= 0.0:
                            hi = mid
                        else:
                            lo = mid
                    t_cross = hi
                    break
                t_lo, g_lo = t, g
                t += step_s
        if t_cross is None:
            continue
        if predict_rssi(user, cand, t_cross, cfg) < cfg.rssi_min_dbm:
            continue
        if best is None or t_cross < best[0]:
            best = (t_cross, cand.id)
    return best
