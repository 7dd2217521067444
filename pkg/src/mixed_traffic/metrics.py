"""Waiting-time statistics and penetration-by-experiment reports.

A vehicle's waiting time is its total near-stationary time inside control
zones (plus time held at a full origin, which is charged to its first
intersection).  Each second of waiting is attributed to exactly one
intersection, so per-intersection totals partition the overall total.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import ContractViolation

REPORT_COLUMNS = ("experiment_id", "od_label", "penetration", "seed", "W_bar_s",
                  "conflicts", "throughput", "spawned", "episodes")
BASELINE = "baseline"


@dataclass(frozen=True)
class VehicleStats:
    key: object          # unique within an accumulator, e.g. (run, vehicle id)
    wait: float
    od: str | None = None
    intersections: tuple[int, ...] = ()
    attributed: tuple[tuple[int, float], ...] = ()
    finished: bool = True


class WaitResult(NamedTuple):
    value: float
    count: int
    empty: bool


@dataclass
class MetricsAccumulator:
    waits: dict = field(default_factory=dict)
    od: dict = field(default_factory=dict)
    routed: dict = field(default_factory=dict)
    attributed: dict = field(default_factory=dict)
    conflicts: int = 0
    throughput: int = 0
    spawned: int = 0

    def record_vehicle(self, stats: VehicleStats) -> "MetricsAccumulator":
        if stats.key in self.waits:
            raise ContractViolation(f"vehicle {stats.key!r} recorded twice")
        if stats.wait < 0 or not math.isfinite(stats.wait):
            raise ContractViolation(f"invalid wait {stats.wait!r} for {stats.key!r}")
        self.waits[stats.key] = float(stats.wait)
        self.od[stats.key] = stats.od
        self.routed[stats.key] = tuple(stats.intersections)
        self.attributed[stats.key] = dict(stats.attributed)
        self.spawned += 1
        self.throughput += int(stats.finished)
        return self

    def record_simulation(self, sim, run: object = 0, conflicts: int | None = None):
        """Record every due vehicle of a finished (or stopped) simulation."""
        for veh in sim.all_vehicles():
            self.record_vehicle(VehicleStats(
                (run, veh.id), veh.waiting_clock,
                veh.od_pair.value if veh.od_pair is not None else None,
                tuple(veh.route.intersections),
                tuple(sorted(veh.waits.items())), veh.done))
        if conflicts is None:
            conflicts = sum(1 for e in sim.events if e.kind == "conflict")
        self.conflicts += conflicts
        return self

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        """Disjoint union; associative and commutative (sums use ``math.fsum``)."""
        clash = self.waits.keys() & other.waits.keys()
        if clash:
            raise ContractViolation(f"accumulators share vehicles {sorted(map(repr, clash))[:5]}")
        out = MetricsAccumulator()
        for src in (self, other):
            out.waits.update(src.waits)
            out.od.update(src.od)
            out.routed.update(src.routed)
            out.attributed.update(src.attributed)
        out.conflicts = self.conflicts + other.conflicts
        out.throughput = self.throughput + other.throughput
        out.spawned = self.spawned + other.spawned
        return out

    def intersection_totals(self) -> dict[int, float]:
        parts: dict[int, list[float]] = {}
        for att in self.attributed.values():
            for iid, w in att.items():
                parts.setdefault(iid, []).append(w)
        return {iid: math.fsum(ws) for iid, ws in sorted(parts.items())}

    def check_partition(self, tol: float = 1e-9) -> bool:
        """Per-intersection totals add up to the overall waiting total."""
        lhs = math.fsum(self.intersection_totals().values())
        rhs = math.fsum(self.waits.values())
        return abs(lhs - rhs) <= tol * max(1.0, rhs)


def average_waiting_time(acc: MetricsAccumulator, od: str | None = None,
                         intersection: int | None = None) -> WaitResult:
    """Mean wait over all vehicles, one OD group, or one intersection.

    For an intersection the numerator is the wait attributed to it and the
    population is every vehicle routed through it.  An empty population gives
    ``WaitResult(0.0, 0, True)``.
    """
    if od is not None and intersection is not None:
        raise ContractViolation("filter by OD or by intersection, not both")
    if intersection is not None:
        keys = [k for k, r in acc.routed.items() if intersection in r]
        values = [acc.attributed[k].get(intersection, 0.0) for k in keys]
    else:
        od = getattr(od, "value", od)
        keys = [k for k in acc.waits if od is None or acc.od[k] == od]
        values = [acc.waits[k] for k in keys]
    if not values:
        return WaitResult(0.0, 0, True)
    return WaitResult(math.fsum(values) / len(values), len(values), False)


@dataclass(frozen=True)
class RunResult:
    experiment_id: int
    od_label: str
    penetration: float | None   # None means the all-signal baseline
    seed: int
    w_bar: float
    conflicts: int
    throughput: int
    spawned: int
    episodes: int

    @property
    def column(self) -> str:
        return BASELINE if self.penetration is None else penetration_label(self.penetration)


def penetration_label(p: float) -> str:
    return f"{100 * p:g}%"


def _row(r: RunResult) -> list[str]:
    pen = BASELINE if r.penetration is None else repr(float(r.penetration))
    return [str(r.experiment_id), r.od_label, pen, str(r.seed), repr(float(r.w_bar)),
            str(r.conflicts), str(r.throughput), str(r.spawned), str(r.episodes)]


def _columns(results: Iterable[RunResult]) -> list[str]:
    pens = sorted({r.penetration for r in results if r.penetration is not None}, reverse=True)
    return [penetration_label(p) for p in pens] + [BASELINE]


def summarize(results: list[RunResult]) -> dict:
    """Mean W̄ per (experiment, column); one row per experiment present."""
    columns = _columns(results)
    labels = {}
    cells: dict[tuple[int, str], list[float]] = {}
    for r in results:
        labels[r.experiment_id] = r.od_label
        cells.setdefault((r.experiment_id, r.column), []).append(r.w_bar)
    rows = []
    for exp in sorted(labels):
        values = {}
        for col in columns:
            ws = cells.get((exp, col))
            values[col] = math.fsum(ws) / len(ws) if ws else None
        rows.append({"experiment_id": exp, "od_label": labels[exp], "W_bar_s": values})
    return {"columns": columns, "rows": rows}


def write_report(results: list[RunResult], path) -> dict[str, str]:
    """Write ``<path>`` (per-run CSV) plus ``_summary.csv`` and ``_summary.json`` beside it.

    Output depends only on ``results`` and their order.  Returns the paths written.
    """
    path = os.fspath(path)
    stem = path[:-4] if path.endswith(".csv") else path
    summary = summarize(results)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in results:
        w.writerow(_row(r))
    _write_text(path, buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment_id", "od_label", *summary["columns"]])
    for row in summary["rows"]:
        w.writerow([row["experiment_id"], row["od_label"],
                    *("" if v is None else f"{v:.4f}" for v in row["W_bar_s"].values())])
    summary_csv = stem + "_summary.csv"
    _write_text(summary_csv, buf.getvalue())

    summary_json = stem + "_summary.json"
    _write_text(summary_json, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {"runs": path, "summary_csv": summary_csv, "summary_json": summary_json}


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_report(path) -> list[RunResult]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {reader.fieldnames}")
        return [RunResult(
            int(row["experiment_id"]), row["od_label"],
            None if row["penetration"] == BASELINE else float(row["penetration"]),
            int(row["seed"]), float(row["W_bar_s"]), int(row["conflicts"]),
            int(row["throughput"]), int(row["spawned"]), int(row["episodes"]))
            for row in reader]
