"""Discrete-time microscopic simulator.

Vehicles follow the Intelligent Driver Model along single-lane links.  The
junction box of each intersection is abstracted as a fixed-length internal
path; occupancy of the box is tracked per movement so that entries against a
conflicting occupant can be detected.  Robot vehicles (RVs) inside the control
zone of an RV-controlled intersection obey externally supplied Go/Stop
actions; everything else is gated (signals, box clearance, gap acceptance).
"""
from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .demand import SpawnEvent, VehicleClass
from .errors import ConfigError, ContractViolation
from .network import (ControlMode, Direction, Movement, RoadNetwork, Route, SignalPlan,
                      Turn, movements_conflict, shortest_route)

__all__ = [
    "Action", "IdmParams", "SimConfig", "SignalPlan", "Vehicle", "Event", "Simulation",
    "idm_acceleration", "stop_deceleration", "signal_allows", "signal_phase",
    "integrate", "TRACE_COLUMNS",
]


class Action(enum.IntEnum):
    GO = 0
    STOP = 1


@dataclass(frozen=True)
class IdmParams:
    v0: float = 15.0
    T: float = 1.0
    s0: float = 2.0
    a_max: float = 2.6
    b: float = 4.5
    delta: float = 4.0
    length: float = 5.0
    b_emergency: float = 8.0

    def __post_init__(self):
        values = (self.v0, self.T, self.s0, self.a_max, self.b, self.delta,
                  self.length, self.b_emergency)
        if min(values) <= 0:
            raise ConfigError("IDM parameters must be strictly positive")
        if self.delta < 1:
            raise ConfigError("IDM exponent must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.5
    idm: IdmParams = field(default_factory=IdmParams)
    waiting_speed_threshold: float = 0.1
    box_speed: float = 7.0
    box_lengths: tuple[float, float, float] = (18.0, 14.0, 10.0)  # left, straight, right
    gap_acceptance: float = 15.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")


def idm_acceleration(v: float, gap: float | None, leader_speed: float | None,
                     p: IdmParams = IdmParams()) -> float:
    """IDM acceleration, clamped to ``[-b_emergency, a_max]``.

    ``gap`` is the bumper-to-bumper distance to the leader; ``None`` means free
    road.  A non-positive gap with a leader is a spacing violation and returns
    full emergency braking.
    """
    free = 1.0 - (v / p.v0) ** p.delta
    if gap is None:
        return min(p.a_max, max(-p.b_emergency, p.a_max * free))
    if gap <= 0:
        return -p.b_emergency
    dv = v - leader_speed
    s_star = p.s0 + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a_max * p.b)))
    acc = p.a_max * (free - (s_star / gap) ** 2)
    return min(p.a_max, max(-p.b_emergency, acc))


def stop_deceleration(v: float, d_int: float, b_emergency: float = 8.0) -> float:
    """Deceleration ``-v**2 / (2 d_int)`` that stops a vehicle at the stop line."""
    if v <= 0:
        return 0.0
    if d_int <= 0:
        return -b_emergency
    return max(-b_emergency, -v * v / (2.0 * d_int))


def signal_phase(plan: SignalPlan, t: float) -> tuple[str, bool]:
    """Return (axis, green) at time ``t``: axis is "NS" or "EW"."""
    pos = (t + plan.offset) % plan.cycle
    if pos < plan.green_ns:
        return "NS", True
    pos -= plan.green_ns
    if pos < plan.yellow:
        return "NS", False
    pos -= plan.yellow
    if pos < plan.green_ew:
        return "EW", True
    return "EW", False


def signal_allows(plan: SignalPlan, t: float, approach: Direction) -> bool:
    axis, green = signal_phase(plan, t)
    if not green:
        return False
    return (approach in (Direction.N, Direction.S)) == (axis == "NS")


def integrate(speed, position, acc, dt):
    """Semi-implicit Euler: speed first (clamped at zero), then position."""
    speed = np.maximum(0.0, speed + acc * dt)
    return speed, position + speed * dt


@dataclass(eq=False)
class Vehicle:
    id: int
    cls: VehicleClass
    route: Route
    od_pair: object = None
    depart_time: float = 0.0
    route_index: int = 0
    position: float = 0.0
    speed: float = 0.0
    waiting_clock: float = 0.0
    in_box: bool = False
    box_progress: float = 0.0
    done: bool = False
    finish_time: float | None = None
    waits: dict = field(default_factory=dict)
    line_speed: float | None = None

    @property
    def link_id(self) -> int:
        return self.route.links[self.route_index]

    @property
    def is_rv(self) -> bool:
        return self.cls is VehicleClass.RV


@dataclass(frozen=True)
class Event:
    kind: str  # spawn | despawn | conflict | spacing | hold
    time: float
    vehicle_id: int
    intersection: int | None = None
    detail: tuple = ()


TRACE_COLUMNS = ("time", "id", "link", "position", "speed", "waiting_clock")

# behaviour codes for the batched acceleration pass
_IDM, _GO, _STOP, _HOLD = 0, 1, 2, 3


class Simulation:
    """Mutable simulation state plus the transition function ``step``.

    Attributes mirror the state record: ``clock``, ``vehicles`` (active, by id),
    ``occupancy`` (per intersection: vehicle id -> Movement inside the box),
    ``pending`` (due spawns waiting for room, per origin link) and ``events``.
    """

    def __init__(self, network: RoadNetwork, schedule: list[SpawnEvent] = (),
                 config: SimConfig = SimConfig(), trace=None):
        self.network = network
        self.config = config
        self.schedule = list(schedule)
        self.clock = 0.0
        self.steps = 0
        self.vehicles: dict[int, Vehicle] = {}
        self.occupancy: dict[int, dict[int, Movement]] = {
            i.id: {} for i in network.intersections}
        self.pending: dict[int, deque] = {}
        self.events: list[Event] = []
        self.finished: list[Vehicle] = []
        self.spawned = 0
        self.despawned = 0
        self._next_schedule = 0
        self._next_id = 0
        self._link_queue: dict[int, list[int]] = {l.id: [] for l in network.links}
        self._routes: dict[tuple[int, int], Route] = {}
        self._trace = None
        if trace is not None:
            self._trace = csv.writer(trace, lineterminator="\n")
            self._trace.writerow(TRACE_COLUMNS)

    # ------------------------------------------------------------------ setup
    def route_for(self, origin: int, destination: int) -> Route:
        key = (origin, destination)
        if key not in self._routes:
            self._routes[key] = shortest_route(self.network, origin, destination)
        return self._routes[key]

    def add_vehicle(self, cls: VehicleClass, route: Route, route_index: int = 0,
                    position: float = 0.0, speed: float = 0.0, od_pair=None) -> Vehicle:
        """Place a vehicle directly on the network (scripted scenarios)."""
        veh = Vehicle(self._next_id, cls, route, od_pair, self.clock, route_index,
                      float(position), float(speed))
        self._next_id += 1
        self.vehicles[veh.id] = veh
        queue = self._link_queue[veh.link_id]
        queue.append(veh.id)
        queue.sort(key=lambda vid: -self.vehicles[vid].position)
        self.spawned += 1
        return veh

    # -------------------------------------------------------------- geometry
    def distance_to_junction(self, veh: Vehicle) -> float | None:
        if veh.in_box:
            return 0.0
        link = self.network.links[veh.link_id]
        if not self.network.is_intersection(link.to_node):
            return None
        return link.length - veh.position

    def movement(self, veh: Vehicle) -> Movement:
        return veh.route.movements[veh.route_index]

    def junction(self, veh: Vehicle) -> int | None:
        if veh.route_index < len(veh.route.intersections):
            return veh.route.intersections[veh.route_index]
        return None

    def in_control_zone(self, veh: Vehicle) -> bool:
        if veh.in_box:
            return True
        d = self.distance_to_junction(veh)
        if d is None:
            return False
        return d <= self.network.intersections[self.junction(veh)].control_zone_radius

    def box_length(self, movement: Movement) -> float:
        return self.config.box_lengths[int(movement.turn)]

    # ----------------------------------------------------------- eligibility
    def eligible_agents(self) -> list[tuple[int, int, Direction]]:
        """RVs within the control zone of an RV-controlled junction, not yet inside it."""
        out = []
        for veh in self.vehicles.values():
            if not veh.is_rv or veh.in_box:
                continue
            iid = self.junction(veh)
            if iid is None:
                continue
            node = self.network.intersections[iid]
            if node.control_mode is not ControlMode.RV_CONTROLLED:
                continue
            if self.distance_to_junction(veh) <= node.control_zone_radius:
                out.append((veh.id, iid, self.movement(veh).approach))
        return out

    # ------------------------------------------------------------- gating
    def _box_conflicts(self, iid: int, movement: Movement) -> list[int]:
        return [vid for vid, m in self.occupancy[iid].items() if movements_conflict(m, movement)]

    def _room_on(self, link_id: int, at: float = 0.0) -> bool:
        queue = self._link_queue[link_id]
        if not queue:
            return True
        tail = self.vehicles[queue[-1]]
        return tail.position - self.config.idm.length >= at + self.config.idm.s0

    def _head(self, iid: int, approach: Direction) -> Vehicle | None:
        link_id = self.network.approach_link(iid, approach)
        if link_id is None:
            return None
        queue = self._link_queue[link_id]
        return self.vehicles[queue[0]] if queue else None

    def _may_enter(self, veh: Vehicle, at_entry: bool) -> bool:
        """Gate for vehicles not under policy control (HVs, and RVs at signals)."""
        iid = self.junction(veh)
        node = self.network.intersections[iid]
        mv = self.movement(veh)
        if self._box_conflicts(iid, mv):
            return False
        if not self._room_on(veh.route.links[veh.route_index + 1]):
            return False
        if node.control_mode is ControlMode.SIGNALIZED:
            axis, green = signal_phase(node.signal_plan, self.clock)
            own_axis = (mv.approach in (Direction.N, Direction.S)) == (axis == "NS")
            if not own_axis:
                return False
            if green:
                return True
            # yellow: pass only if it cannot stop comfortably
            if at_entry:
                return True
            d = self.network.links[veh.link_id].length - veh.position
            return d < veh.speed ** 2 / (2.0 * self.config.idm.b)
        # RV-controlled junction: gap acceptance against conflicting heads
        my_d = self.network.links[veh.link_id].length - veh.position
        thr = self.config.waiting_speed_threshold
        for other_dir in Direction:
            if other_dir == mv.approach:
                continue
            head = self._head(iid, other_dir)
            if head is None or head.in_box or self.junction(head) != iid:
                continue
            d = self.network.links[head.link_id].length - head.position
            if d > self.config.gap_acceptance:
                continue
            if not movements_conflict(mv, self.movement(head)):
                continue
            if head.is_rv:
                if head.speed >= thr:
                    return False
            elif (d, head.id) < (my_d, veh.id):
                return False
        return True

    # -------------------------------------------------------------- spawning
    def _inject_spawns(self):
        """Create due vehicles and insert them at their origin stub while there is room.

        A due vehicle that finds its stub full is held; held vehicles count as
        queued at the entrance of their first intersection and accrue waiting
        time there.
        """
        while (self._next_schedule < len(self.schedule)
               and self.schedule[self._next_schedule].depart_time <= self.clock):
            ev = self.schedule[self._next_schedule]
            self._next_schedule += 1
            route = self.route_for(ev.origin, ev.destination)
            veh = Vehicle(self._next_id, ev.vehicle_class, route, ev.od_pair, ev.depart_time)
            self._next_id += 1
            self.spawned += 1
            self.pending.setdefault(route.links[0], deque()).append(veh)
        p = self.config.idm
        for link_id, queue in self.pending.items():
            while queue and self._room_on(link_id, p.length):
                veh = queue.popleft()
                lane = self._link_queue[link_id]
                if lane:
                    gap = self.vehicles[lane[-1]].position - p.length
                    speed = min(p.v0, max(0.0, (gap - p.s0) / p.T))
                else:
                    speed = p.v0
                veh.speed = min(speed, self.network.links[link_id].speed_limit)
                self.vehicles[veh.id] = veh
                lane.append(veh.id)
                self.events.append(Event("spawn", self.clock, veh.id))

    @property
    def held(self) -> list[Vehicle]:
        return [veh for queue in self.pending.values() for veh in queue]

    @property
    def pending_count(self) -> int:
        """Scheduled vehicles not yet on the network (not yet due, or held)."""
        return (len(self.schedule) - self._next_schedule
                + sum(len(q) for q in self.pending.values()))

    # ------------------------------------------------------------------ step
    def step(self, rv_actions: dict[int, Action] | None = None,
             dt: float | None = None) -> tuple["Simulation", list[Event]]:
        dt = self.config.dt if dt is None else dt
        if dt <= 0:
            raise ContractViolation("dt must be > 0")
        rv_actions = dict(rv_actions or {})
        eligible = {vid for vid, _, _ in self.eligible_agents()}
        bad = sorted(set(rv_actions) - eligible)
        if bad:
            raise ContractViolation(f"actions supplied for non-eligible vehicles {bad}")
        n_events = len(self.events)

        self._inject_spawns()
        self._advance_box(dt)
        self._advance_links(dt, rv_actions, eligible)
        self._accumulate_waits(dt)
        if self._trace is not None:
            self._write_trace(self.clock + dt)
        self.clock += dt
        self.steps += 1
        return self, self.events[n_events:]

    def _advance_box(self, dt):
        p = self.config.idm
        for iid, occ in self.occupancy.items():
            for vid in list(occ):
                veh = self.vehicles[vid]
                veh.speed = min(veh.speed + p.a_max * dt, self.config.box_speed)
                veh.box_progress += veh.speed * dt
                length = self.box_length(occ[vid])
                if veh.box_progress < length:
                    continue
                overflow = veh.box_progress - length
                nxt = veh.route.links[veh.route_index + 1]
                lane = self._link_queue[nxt]
                if lane:
                    room = self.vehicles[lane[-1]].position - p.length - p.s0
                    if room < 0:
                        veh.box_progress = length
                        veh.speed = 0.0
                        continue
                    overflow = min(overflow, room)
                del occ[vid]
                veh.in_box = False
                veh.box_progress = 0.0
                veh.route_index += 1
                veh.position = overflow
                lane.append(vid)

    def _advance_links(self, dt, rv_actions, eligible):
        p = self.config.idm
        net = self.network
        order: list[Vehicle] = []
        gaps, lead_v, has_lead, modes, d_line = [], [], [], [], []
        stop_line: list[bool] = []

        for link_id, lane in self._link_queue.items():
            if not lane:
                continue
            link = net.links[link_id]
            for k, vid in enumerate(lane):
                veh = self.vehicles[vid]
                d = link.length - veh.position
                mode, at_line = _IDM, False
                gap, lv, hl = math.inf, 0.0, False
                if k > 0:
                    lead = self.vehicles[lane[k - 1]]
                    gap, lv, hl = lead.position - p.length - veh.position, lead.speed, True
                if vid in eligible:
                    mode = _GO if rv_actions.get(vid, Action.STOP) == Action.GO else _STOP
                if k == 0 and net.is_intersection(link.to_node):
                    # RVs approaching an RV-controlled junction drive plain IDM until eligible
                    free_approach = veh.is_rv and (net.intersections[link.to_node].control_mode
                                                   is ControlMode.RV_CONTROLLED)
                    if mode == _IDM and not free_approach and not self._may_enter(veh, at_entry=False):
                        at_line = True
                    elif mode != _STOP:
                        tail = self._link_queue[veh.route.links[veh.route_index + 1]]
                        if tail:
                            t = self.vehicles[tail[-1]]
                            gap = d + self.box_length(self.movement(veh)) + t.position - p.length
                            lv, hl = t.speed, True
                if at_line:
                    # stop line as a standing virtual leader, bumper resting on the line
                    gap, lv, hl = d + p.s0, 0.0, True
                if mode == _STOP and d <= 0:
                    mode = _HOLD
                order.append(veh)
                gaps.append(gap)
                lead_v.append(lv)
                has_lead.append(hl)
                modes.append(mode)
                d_line.append(d)
                stop_line.append(at_line)

        if not order:
            return
        v = np.fromiter((veh.speed for veh in order), float, len(order))
        pos = np.fromiter((veh.position for veh in order), float, len(order))
        gaps_a = np.asarray(gaps, dtype=float)
        hl_a = np.asarray(has_lead, dtype=np.uint8)
        acc = kernels.idm_batch(v, np.where(hl_a, gaps_a, 1.0), np.asarray(lead_v, dtype=float),
                                hl_a, p.v0, p.T, p.s0, p.a_max, p.b, p.delta, p.b_emergency)
        modes_a = np.asarray(modes)
        d_a = np.asarray(d_line, dtype=float)
        go = modes_a == _GO
        free_go = np.minimum(p.a_max, np.maximum(0.0, p.v0 - v) / dt)
        acc = np.where(go, np.where(hl_a.astype(bool), np.minimum(acc, p.a_max), free_go), acc)
        stop = modes_a == _STOP
        if stop.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                sd = np.maximum(-p.b_emergency, np.where(v > 0, -v * v / (2.0 * np.maximum(d_a, 1e-12)), 0.0))
            leader_term = np.where(hl_a.astype(bool), acc, np.inf)
            acc = np.where(stop, np.minimum(sd, leader_term), acc)
        hold = modes_a == _HOLD
        acc = np.where(hold, -v / dt, acc)
        for i in np.flatnonzero(hl_a.astype(bool) & (gaps_a <= 0) & ~np.asarray(stop_line)):
            self.events.append(Event("spacing", self.clock, order[i].id, detail=(float(gaps_a[i]),)))

        new_v, new_pos = integrate(v, pos, acc, dt)
        for i, veh in enumerate(order):
            veh.speed = float(new_v[i])
            veh.position = float(new_pos[i])

        self._resolve_link_ends({veh.id: int(m) for veh, m in zip(order, modes_a)})

    def _resolve_link_ends(self, modes):
        """Stop-line crossings, junction entries and despawns, front vehicles first."""
        net = self.network
        p = self.config.idm
        for link_id, lane in self._link_queue.items():
            if not lane:
                continue
            link = net.links[link_id]
            to_junction = net.is_intersection(link.to_node)
            k = 0
            while k < len(lane):
                veh = self.vehicles[lane[k]]
                if veh.position < link.length:
                    k += 1
                    continue
                if k > 0:
                    # cannot pass a vehicle still on the link
                    lead = self.vehicles[lane[k - 1]]
                    veh.position = min(veh.position, lead.position - p.length)
                    veh.speed = min(veh.speed, lead.speed)
                    self.events.append(Event("spacing", self.clock, veh.id))
                    k += 1
                    continue
                if not to_junction:
                    lane.pop(0)
                    self._despawn(veh)
                    continue
                iid = link.to_node
                mv = self.movement(veh)
                mode = modes.get(veh.id, _IDM)
                if mode in (_STOP, _HOLD):
                    self._hold(veh, iid, link.length)
                    k += 1
                    continue
                if mode == _GO:
                    blockers = self._box_conflicts(iid, mv)
                    if blockers:
                        self.events.append(
                            Event("conflict", self.clock, veh.id, iid, tuple(sorted(blockers))))
                elif not self._may_enter(veh, at_entry=True):
                    self._hold(veh, iid, link.length)
                    k += 1
                    continue
                overflow = veh.position - link.length
                lane.pop(0)
                veh.in_box = True
                veh.box_progress = overflow
                veh.position = link.length
                self.occupancy[iid][veh.id] = mv

    def _hold(self, veh, iid, line):
        if veh.speed > 0:
            veh.line_speed = veh.speed
            self.events.append(Event("hold", self.clock, veh.id, iid, (veh.speed,)))
        veh.position = line
        veh.speed = 0.0

    def _despawn(self, veh):
        veh.done = True
        veh.position = self.network.links[veh.link_id].length
        veh.finish_time = self.clock + self.config.dt
        del self.vehicles[veh.id]
        self.finished.append(veh)
        self.despawned += 1
        self.events.append(Event("despawn", self.clock, veh.id))

    def _accumulate_waits(self, dt):
        thr = self.config.waiting_speed_threshold
        for queue in self.pending.values():
            for veh in queue:
                veh.waiting_clock += dt
                iid = veh.route.intersections[0]
                veh.waits[iid] = veh.waits.get(iid, 0.0) + dt
        for veh in self.vehicles.values():
            if veh.speed < thr and self.in_control_zone(veh):
                veh.waiting_clock += dt
                iid = self.junction(veh)
                veh.waits[iid] = veh.waits.get(iid, 0.0) + dt

    def _write_trace(self, t):
        for veh in self.vehicles.values():
            link = f"J{self.junction(veh)}" if veh.in_box else str(veh.link_id)
            pos = veh.box_progress if veh.in_box else veh.position
            self._trace.writerow((f"{t:.3f}", veh.id, link, f"{pos:.6f}",
                                  f"{veh.speed:.6f}", f"{veh.waiting_clock:.3f}"))

    # ------------------------------------------------------------ inspection
    def check_conservation(self) -> bool:
        held = sum(len(q) for q in self.pending.values())
        return self.spawned == self.despawned + len(self.vehicles) + held

    def all_vehicles(self) -> list[Vehicle]:
        """Every vehicle that has become due: finished, active, then held."""
        return self.finished + list(self.vehicles.values()) + self.held

    def link_vehicles(self, link_id: int) -> list[Vehicle]:
        return [self.vehicles[v] for v in self._link_queue[link_id]]
