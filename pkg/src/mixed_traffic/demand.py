"""OD demand patterns and seeded spawn schedules."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import Direction, RoadNetwork


class OdPair(enum.Enum):
    SN = "SN"
    NS = "NS"
    NE = "NE"
    EN = "EN"
    NW = "NW"
    WN = "WN"
    SE = "SE"
    ES = "ES"
    SW = "SW"
    WS = "WS"
    WE = "WE"
    EW = "EW"

    @property
    def origin_side(self) -> Direction:
        return Direction[self.value[0]]

    @property
    def destination_side(self) -> Direction:
        return Direction[self.value[1]]


OD_PAIRS = tuple(OdPair)


class VehicleClass(enum.Enum):
    HV = "HV"
    RV = "RV"


@dataclass(frozen=True)
class OdPattern:
    weights: dict[OdPair, float]

    def __post_init__(self):
        if set(self.weights) != set(OD_PAIRS):
            raise ConfigError("OD pattern must give a weight for each of the 12 pairs")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigError("OD weights must be >= 0")
        total = math.fsum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"OD weights sum to {total}, expected 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.weights[p] for p in OD_PAIRS])

    @classmethod
    def from_mapping(cls, mapping) -> "OdPattern":
        try:
            weights = {OdPair(k): float(v) for k, v in mapping.items()}
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for p in OD_PAIRS:
            weights.setdefault(p, 0.0)
        return cls(weights)


# (emphasised pairs, their combined share); experiment 6 is uniform
EXPERIMENTS: dict[int, tuple[tuple[OdPair, ...], float]] = {
    1: ((OdPair.NS, OdPair.SN), 0.70),
    2: ((OdPair.NS, OdPair.SN), 0.90),
    3: ((OdPair.NW, OdPair.WN), 0.70),
    4: ((OdPair.NW, OdPair.WN), 0.90),
    5: ((OdPair.WE, OdPair.EW), 0.70),
    6: ((), 0.0),
    7: ((OdPair.NE, OdPair.SW), 0.70),
    8: ((OdPair.SE, OdPair.NW), 0.70),
}

EXPERIMENT_LABELS = {
    1: "NS+SN 70%", 2: "NS+SN 90%", 3: "NW+WN 70%", 4: "NW+WN 90%",
    5: "WE+EW 70%", 6: "12 Dir. Uniform", 7: "NE+SW 70%", 8: "SE+NW 70%",
}


def od_pattern_from_experiment(experiment_id: int) -> OdPattern:
    if experiment_id not in EXPERIMENTS:
        raise ConfigError(f"experiment id must be in 1..8, got {experiment_id!r}")
    emphasised, share = EXPERIMENTS[experiment_id]
    if not emphasised:
        return OdPattern({p: 1.0 / len(OD_PAIRS) for p in OD_PAIRS})
    rest = [p for p in OD_PAIRS if p not in emphasised]
    weights = {p: share / len(emphasised) for p in emphasised}
    weights.update({p: (1.0 - share) / len(rest) for p in rest})
    return OdPattern(weights)


@dataclass(frozen=True)
class DemandConfig:
    total_vehicles: int
    horizon: float
    penetration: float
    seed: int = 0
    departure_window: float = 0.8

    def __post_init__(self):
        if self.total_vehicles < 0:
            raise ConfigError("total_vehicles must be >= 0")
        if self.horizon <= 0:
            raise ConfigError("horizon must be > 0")
        if not 0.0 <= self.penetration <= 1.0:
            raise ConfigError("penetration must lie in [0, 1]")
        if not 0.0 < self.departure_window <= 1.0:
            raise ConfigError("departure_window must lie in (0, 1]")


@dataclass(frozen=True)
class SpawnEvent:
    depart_time: float
    od_pair: OdPair
    origin: int
    destination: int
    vehicle_class: VehicleClass


def rv_count(total: int, penetration: float) -> int:
    # round half up; Python's round() would send 2.5 to 2
    return int(math.floor(penetration * total + 0.5))


def generate_spawn_schedule(config: DemandConfig, pattern: OdPattern,
                            network: RoadNetwork) -> list[SpawnEvent]:
    """Draw ``total_vehicles`` departures, sorted by departure time.

    OD pairs are i.i.d. from ``pattern``; endpoints are uniform on their sides;
    departure times are uniform on ``[0, departure_window * horizon]``; exactly
    ``rv_count`` vehicles, picked by a seeded shuffle, are RVs.
    """
    n = config.total_vehicles
    if n == 0:
        return []
    rng = np.random.default_rng(config.seed)
    od_idx = rng.choice(len(OD_PAIRS), size=n, p=pattern.as_array())
    u_origin = rng.random(n)
    u_dest = rng.random(n)
    departs = rng.uniform(0.0, config.departure_window * config.horizon, size=n)
    is_rv = np.zeros(n, dtype=bool)
    is_rv[rng.permutation(n)[:rv_count(n, config.penetration)]] = True

    events = []
    for k in range(n):
        pair = OD_PAIRS[od_idx[k]]
        origins = network.boundary_nodes[pair.origin_side]
        dests = network.boundary_nodes[pair.destination_side]
        events.append(SpawnEvent(
            float(departs[k]), pair,
            origins[int(u_origin[k] * len(origins))],
            dests[int(u_dest[k] * len(dests))],
            VehicleClass.RV if is_rv[k] else VehicleClass.HV))
    order = sorted(range(n), key=lambda k: (events[k].depart_time, k))
    return [events[k] for k in order]
