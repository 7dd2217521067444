import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixed_traffic.demand import (OD_PAIRS, DemandConfig, OdPair, OdPattern, VehicleClass,
                                  generate_spawn_schedule, od_pattern_from_experiment, rv_count)
from mixed_traffic.errors import ConfigError
from mixed_traffic.network import build_grid

NET = build_grid(2, 2)


def test_experiment_one():
    w = od_pattern_from_experiment(1).weights
    assert w[OdPair.NS] == pytest.approx(0.35) and w[OdPair.SN] == pytest.approx(0.35)
    for p in OD_PAIRS:
        if p not in (OdPair.NS, OdPair.SN):
            assert w[p] == pytest.approx(0.03)


def test_experiment_six_uniform():
    w = od_pattern_from_experiment(6).weights
    assert all(v == pytest.approx(1 / 12) for v in w.values())
    assert round(100 * w[OdPair.WE], 2) == 8.33


def test_experiment_two_recomputed():
    w = od_pattern_from_experiment(2).weights
    assert w[OdPair.NS] == pytest.approx(0.45)
    assert w[OdPair.EW] == pytest.approx(0.01)
    assert math.fsum(w.values()) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("exp", range(1, 9))
def test_all_experiments_valid(exp):
    w = od_pattern_from_experiment(exp).as_array()
    assert abs(w.sum() - 1) < 1e-9 and (w >= 0).all()


@pytest.mark.parametrize("bad", [0, 9, -1])
def test_bad_experiment(bad):
    with pytest.raises(ConfigError):
        od_pattern_from_experiment(bad)


def test_pattern_validation():
    with pytest.raises(ConfigError):
        OdPattern.from_mapping({"NS": 0.5})
    with pytest.raises(ConfigError):
        OdPattern.from_mapping({"NS": 1.5, "SN": -0.5})
    with pytest.raises(ConfigError):
        OdPattern.from_mapping({"XX": 1.0})
    assert OdPattern.from_mapping({"NS": 1.0}).weights[OdPair.NS] == 1.0


def test_config_validation():
    with pytest.raises(ConfigError):
        DemandConfig(-1, 10.0, 0.5)
    with pytest.raises(ConfigError):
        DemandConfig(10, 0.0, 0.5)
    with pytest.raises(ConfigError):
        DemandConfig(10, 10.0, 1.1)


def test_empty_schedule():
    assert generate_spawn_schedule(DemandConfig(0, 100.0, 0.5), od_pattern_from_experiment(1), NET) == []


def test_quarter_penetration_count():
    events = generate_spawn_schedule(DemandConfig(100, 100.0, 0.25), od_pattern_from_experiment(6), NET)
    assert sum(e.vehicle_class is VehicleClass.RV for e in events) == 25


def test_rv_count_rounds_half_up():
    assert rv_count(10, 0.25) == 3
    assert rv_count(10, 0.15) == 2
    assert rv_count(7, 0.5) == 4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 300), st.floats(0, 1), st.integers(0, 2**31))
def test_schedule_properties(n, pen, seed):
    cfg = DemandConfig(n, 120.0, pen, seed)
    events = generate_spawn_schedule(cfg, od_pattern_from_experiment(3), NET)
    assert len(events) == n
    assert sum(e.vehicle_class is VehicleClass.RV for e in events) == rv_count(n, pen)
    times = [e.depart_time for e in events]
    assert times == sorted(times)
    for e in events:
        assert 0 <= e.depart_time <= 0.8 * 120.0
        assert e.origin in NET.boundary_nodes[e.od_pair.origin_side]
        assert e.destination in NET.boundary_nodes[e.od_pair.destination_side]
    assert events == generate_spawn_schedule(cfg, od_pattern_from_experiment(3), NET)


def test_experiment_one_share_at_ten_thousand():
    events = generate_spawn_schedule(DemandConfig(10_000, 1000.0, 0.5, seed=3),
                                     od_pattern_from_experiment(1), NET)
    share = sum(e.od_pair in (OdPair.NS, OdPair.SN) for e in events) / len(events)
    assert abs(share - 0.70) <= 0.02


def test_frequencies_converge():
    pattern = od_pattern_from_experiment(7)
    events = generate_spawn_schedule(DemandConfig(100_000, 1000.0, 0.0, seed=11), pattern, NET)
    counts = np.zeros(12)
    for e in events:
        counts[OD_PAIRS.index(e.od_pair)] += 1
    assert np.abs(counts / len(events) - pattern.as_array()).max() <= 0.01


def test_seed_changes_schedule():
    p = od_pattern_from_experiment(6)
    a = generate_spawn_schedule(DemandConfig(50, 60.0, 0.5, seed=1), p, NET)
    b = generate_spawn_schedule(DemandConfig(50, 60.0, 0.5, seed=2), p, NET)
    assert a != b
