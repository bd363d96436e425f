import math
import random

import pytest

from edgemigsim.model import BaseStation, MobileUser
from edgemigsim.radio import (
    RadioConfig,
    bandwidth_from_rssi,
    mean_rssi,
    predict_handover_time,
    predict_rssi,
    rssi_at,
)

CFG = RadioConfig(shadowing_sigma_db=0.0)


def _bs(bs_id="bs1", pos=(0.0, 0.0), tx=20.0):
    return BaseStation(id=bs_id, position=pos, tx_power_dbm=tx)


def _user(waypoints, speed=1.0, offset=0.0):
    return MobileUser(id="u", app="a", waypoints=waypoints, speed_mps=speed,
                      task_size_bits=8e5, task_rate_hz=1.0, sla_max_delay_ms=1e9,
                      start_offset_m=offset)


def test_rssi_at_reference_distance():
    assert rssi_at((1.0, 0.0), _bs(), CFG) == 20.0 - 40.0


def test_rssi_hand_value_100m():
    # 20 dBm - 40 dB - 10*3*log10(100) = -80 dBm
    assert rssi_at((100.0, 0.0), _bs(), CFG) == -80.0


def test_rssi_clamped_below_reference():
    assert rssi_at((0.25, 0.0), _bs(), CFG) == rssi_at((1.0, 0.0), _bs(), CFG)


def test_shadowing_deterministic_per_seed():
    cfg = RadioConfig(shadowing_sigma_db=2.0)
    seq1 = [rssi_at((50.0, 0.0), _bs(), cfg, random.Random(7)) for _ in range(1)]
    a = random.Random(7)
    b = random.Random(7)
    s1 = [rssi_at((50.0, 0.0), _bs(), cfg, a) for _ in range(20)]
    s2 = [rssi_at((50.0, 0.0), _bs(), cfg, b) for _ in range(20)]
    assert s1 == s2
    assert len(set(s1)) > 1  # shadowing actually varies


def test_predict_matches_mean_for_stationary_user():
    user = _user([(30.0, 0.0)])
    bs = _bs()
    for t in (0.0, 5.0, 123.0):
        assert predict_rssi(user, bs, t, CFG) == mean_rssi((30.0, 0.0), bs, CFG)


def test_predict_increases_toward_bs():
    user = _user([(0.0, 3.0), (100.0, 3.0)])
    bs = _bs("bs2", pos=(100.0, 0.0))
    values = [predict_rssi(user, bs, t, CFG) for t in (10.0, 40.0, 80.0)]
    assert values[0] < values[1] < values[2]


def test_predict_follows_reflected_trajectory():
    user = _user([(0.0, 0.0), (10.0, 0.0)])
    bs = _bs()
    # at t=15 the user has bounced at x=10 and walked back to x=5
    assert user.position_at(15.0) == (5.0, 0.0)
    assert predict_rssi(user, bs, 15.0, CFG) == mean_rssi((5.0, 0.0), bs, CFG)


def test_predict_rejects_past_time():
    user = _user([(0.0, 0.0), (10.0, 0.0)])
    with pytest.raises(ValueError):
        predict_rssi(user, _bs(), 5.0, CFG, now=10.0)


def test_bandwidth_saturates_at_top():
    assert bandwidth_from_rssi(-30.0, CFG) == 65e6


def test_bandwidth_zero_below_floor():
    assert bandwidth_from_rssi(-90.0, CFG) == 0.0


def test_bandwidth_threshold_inclusive():
    assert bandwidth_from_rssi(-82.0, CFG) == 6.5e6
    assert bandwidth_from_rssi(-52.0, CFG) == 65e6


def test_bandwidth_monotone():
    values = [bandwidth_from_rssi(r, CFG) for r in range(-100, -20)]
    assert values == sorted(values)


def test_handover_crossing_matches_analytic_solution():
    # two BSs on a line, user walking between them: the hysteresis crossing is
    # where 10*n*log10(d1/d2) = margin, i.e. x = D*r/(1+r) with r = 10^(m/(10n))
    user = _user([(0.0, 0.0), (100.0, 0.0)])
    bs1, bs2 = _bs("bs1", (0.0, 0.0)), _bs("bs2", (100.0, 0.0))
    got = predict_handover_time(user, bs1, [bs2], CFG, now=0.0, horizon_s=100.0)
    assert got is not None
    t_ho, target = got
    r = 10.0 ** (CFG.hysteresis_margin_db / (10.0 * CFG.pathloss_exponent))
    expected_x = 100.0 * r / (1.0 + r)
    assert target == "bs2"
    assert abs(t_ho - expected_x) < 1e-6  # speed 1 m/s: time == distance


def test_handover_zero_margin_crosses_at_midpoint():
    cfg = RadioConfig(shadowing_sigma_db=0.0, hysteresis_margin_db=0.0)
    user = _user([(0.0, 0.0), (100.0, 0.0)])
    bs1, bs2 = _bs("bs1", (0.0, 0.0)), _bs("bs2", (100.0, 0.0))
    t_ho, target = predict_handover_time(user, bs1, [bs2], cfg, now=0.0, horizon_s=100.0)
    assert abs(t_ho - 50.0) < 1e-6
    assert target == "bs2"


def test_handover_none_for_stationary_user():
    user = _user([(1.0, 0.0)])
    bs1, bs2 = _bs("bs1", (0.0, 0.0)), _bs("bs2", (100.0, 0.0))
    assert predict_handover_time(user, bs1, [bs2], CFG, now=0.0, horizon_s=60.0) is None


def test_handover_target_never_below_floor():
    rng = random.Random(42)
    for _ in range(50):
        span = rng.uniform(50.0, 2500.0)
        user = _user([(0.0, 0.0), (span, 0.0)], speed=rng.uniform(0.5, 2.0))
        bs1 = _bs("bs1", (0.0, 0.0))
        bs2 = _bs("bs2", (span, rng.uniform(0.0, 50.0)))
        got = predict_handover_time(user, bs1, [bs2], CFG, now=0.0,
                                    horizon_s=rng.uniform(20.0, 400.0))
        if got is not None:
            t_ho, target = got
            assert predict_rssi(user, bs2, t_ho, CFG) >= CFG.rssi_min_dbm


def test_handover_earliest_candidate_wins():
    user = _user([(0.0, 0.0), (300.0, 0.0)])
    bs1 = _bs("bs1", (0.0, 0.0))
    near = _bs("near", (100.0, 0.0))
    far = _bs("far", (300.0, 0.0))
    t_ho, target = predict_handover_time(user, bs1, [far, near], CFG,
                                         now=0.0, horizon_s=300.0)
    assert target == "near"
