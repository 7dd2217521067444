import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixed_traffic.demand import DemandConfig, od_pattern_from_experiment
from mixed_traffic.env import TrafficEnv
from mixed_traffic.errors import ContractViolation
from mixed_traffic.metrics import (MetricsAccumulator, RunResult, VehicleStats,
                                   average_waiting_time, read_report, summarize, write_report)
from mixed_traffic.network import build_grid


def acc_of(waits, od=None, start=0):
    acc = MetricsAccumulator()
    for i, w in enumerate(waits):
        acc.record_vehicle(VehicleStats(start + i, w, od, (0,), ((0, w),)))
    return acc


def test_three_vehicle_mean():
    assert average_waiting_time(acc_of([10.0, 20.0, 30.0])) == (20.0, 3, False)


def test_od_groups():
    acc = acc_of([3.0], "NS").merge(acc_of([4.0, 16.0], "EW", start=1))
    assert average_waiting_time(acc, od="NS").value == 3.0
    assert average_waiting_time(acc, od="EW").value == 10.0
    assert average_waiting_time(acc).value == pytest.approx(23.0 / 3)
    assert average_waiting_time(acc, od="SN") == (0.0, 0, True)


def test_empty_flag():
    assert average_waiting_time(MetricsAccumulator()) == (0.0, 0, True)
    assert average_waiting_time(acc_of([0.0])) == (0.0, 1, False)


def test_per_intersection_mean_and_partition():
    acc = MetricsAccumulator()
    acc.record_vehicle(VehicleStats("a", 5.0, None, (0, 1), ((0, 2.0), (1, 3.0))))
    acc.record_vehicle(VehicleStats("b", 4.0, None, (1,), ((1, 4.0),)))
    acc.record_vehicle(VehicleStats("c", 0.0, None, (0,), ()))
    assert average_waiting_time(acc, intersection=0) == (1.0, 2, False)
    assert average_waiting_time(acc, intersection=1) == (3.5, 2, False)
    assert average_waiting_time(acc, intersection=7).empty
    assert acc.intersection_totals() == {0: 2.0, 1: 7.0}
    assert acc.check_partition()
    with pytest.raises(ContractViolation):
        average_waiting_time(acc, od="NS", intersection=0)


def test_contracts():
    acc = acc_of([1.0])
    with pytest.raises(ContractViolation):
        acc.record_vehicle(VehicleStats(0, 2.0))
    with pytest.raises(ContractViolation):
        acc.record_vehicle(VehicleStats(9, -1.0))
    with pytest.raises(ContractViolation):
        acc.merge(acc_of([3.0]))


waits = st.lists(st.floats(0, 1e4), max_size=20)


@settings(max_examples=60, deadline=None)
@given(waits, waits, waits)
def test_merge_associative_and_commutative(a, b, c):
    A, B, C = acc_of(a, start=0), acc_of(b, start=100), acc_of(c, start=200)
    left = A.merge(B).merge(C)
    right = A.merge(B.merge(C))
    swapped = C.merge(A).merge(B)
    for other in (right, swapped):
        assert average_waiting_time(left) == average_waiting_time(other)
        assert left.spawned == other.spawned and left.waits == other.waits


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30))
def test_adding_the_mean_leaves_it_unchanged(ws):
    mean = average_waiting_time(acc_of(ws)).value
    assert average_waiting_time(acc_of(ws + [mean])).value == pytest.approx(mean, rel=1e-12, abs=1e-12)


def test_simulation_partition_and_totals():
    env = TrafficEnv(build_grid(2, 2, 200.0, {0, 3}), DemandConfig(150, 120.0, 0.5, 4),
                     od_pattern_from_experiment(2), horizon=200.0)
    env.reset(4)
    rng = np.random.default_rng(0)
    done = False
    while not done:
        _, done = env.step({k: int(rng.integers(2)) for k in env.observations()})
    acc = env.metrics()
    assert acc.spawned == 150 and acc.check_partition()
    assert 0 < acc.throughput <= 150
    per = sum(average_waiting_time(acc, od=o).value * average_waiting_time(acc, od=o).count
              for o in set(acc.od.values()))
    assert per == pytest.approx(math.fsum(acc.waits.values()))


def _results():
    out = []
    for exp in range(1, 9):
        for pen in (1.0, 0.75, 0.5, 0.25, None):
            for seed in (0, 1):
                out.append(RunResult(exp, f"exp{exp}", pen, seed, exp + seed / 3 + (pen or 0),
                                     seed, 100, 120, 0 if pen is None else 150))
    return out


def test_report_round_trip_and_shape(tmp_path):
    res = _results()
    paths = write_report(res, tmp_path / "r.csv")
    assert read_report(paths["runs"]) == res
    summary = summarize(res)
    assert summary["columns"] == ["100%", "75%", "50%", "25%", "baseline"]
    assert len(summary["rows"]) == 8
    assert sum(len(r["W_bar_s"]) for r in summary["rows"]) == 40
    assert summary["rows"][0]["W_bar_s"]["baseline"] == pytest.approx(1 + 1 / 6)
    lines = open(paths["summary_csv"]).read().splitlines()
    assert lines[0] == "experiment_id,od_label,100%,75%,50%,25%,baseline" and len(lines) == 9


def test_report_bytes_deterministic(tmp_path):
    a = write_report(_results(), tmp_path / "a.csv")
    b = write_report(_results(), tmp_path / "b.csv")
    for k in ("runs", "summary_csv", "summary_json"):
        assert open(a[k], "rb").read() == open(b[k], "rb").read()
