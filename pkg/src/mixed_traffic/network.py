"""Road-network model: synthetic grids, routing, and the movement-conflict relation.

Grid layout: intersection ``(r, c)`` has id ``r * cols + c`` and sits at
``x = c * L, y = -r * L`` (row 0 is the northernmost row).  Every grid side
gets its own boundary stub nodes, so the twelve OD side pairs are unambiguous.
Node ids ``0..n-1`` are intersections; boundary nodes follow in the order
N (per column), S (per column), E (per row), W (per row).
"""
from __future__ import annotations

import enum
import re
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError, RoutingError

DEFAULT_CONTROL_ZONE = 30.0


class Direction(enum.IntEnum):
    """Compass direction.  As an approach, ``N`` means "arriving from the north"."""

    N = 0
    S = 1
    E = 2
    W = 3

    @property
    def opposite(self) -> "Direction":
        return _OPPOSITE[self]


_OPPOSITE = {Direction.N: Direction.S, Direction.S: Direction.N,
             Direction.E: Direction.W, Direction.W: Direction.E}

# clockwise compass angle of a heading, in quarter turns
_QUARTERS = {Direction.N: 0, Direction.E: 1, Direction.S: 2, Direction.W: 3}


class Turn(enum.IntEnum):
    LEFT = 0
    STRAIGHT = 1
    RIGHT = 2


class ControlMode(enum.Enum):
    SIGNALIZED = "signalized"
    RV_CONTROLLED = "rv_controlled"


def classify_turn(heading_in: Direction, heading_out: Direction) -> Turn:
    """Turn made when a vehicle travelling ``heading_in`` leaves along ``heading_out``.

    Right-hand traffic: a southbound vehicle that leaves heading east turns left.
    U-turns are not movements and raise ``ValueError``.
    """
    delta = (_QUARTERS[heading_out] - _QUARTERS[heading_in]) % 4
    if delta == 0:
        return Turn.STRAIGHT
    if delta == 1:
        return Turn.RIGHT
    if delta == 3:
        return Turn.LEFT
    raise ValueError(f"U-turn from {heading_in.name} to {heading_out.name}")


@dataclass(frozen=True)
class Movement:
    approach: Direction
    turn: Turn

    @property
    def heading_in(self) -> Direction:
        return self.approach.opposite


def all_movements() -> list[Movement]:
    return [Movement(d, t) for d in Direction for t in Turn]


def movements_conflict(m1: Movement, m2: Movement) -> bool:
    """True if two movements through the same junction box are incompatible.

    Compatible pairs: same approach; opposite approaches with both turns
    straight or right; or both turns right.  Everything else conflicts.
    """
    if m1.approach == m2.approach:
        return False
    through_or_right = (Turn.STRAIGHT, Turn.RIGHT)
    if (m1.approach == m2.approach.opposite
            and m1.turn in through_or_right and m2.turn in through_or_right):
        return False
    if m1.turn == Turn.RIGHT and m2.turn == Turn.RIGHT:
        return False
    return True


@dataclass(frozen=True)
class SignalPlan:
    """Fixed-time two-phase plan: NS green, yellow, EW green, yellow."""

    green_ns: float = 30.0
    green_ew: float = 30.0
    yellow: float = 3.0
    offset: float = 0.0

    def __post_init__(self):
        if min(self.green_ns, self.green_ew, self.yellow) < 0:
            raise ConfigError("signal phase durations must be >= 0")
        if self.cycle <= 0:
            raise ConfigError("signal cycle must be > 0")

    @property
    def cycle(self) -> float:
        return self.green_ns + self.green_ew + 2.0 * self.yellow


@dataclass(frozen=True)
class Intersection:
    id: int
    control_mode: ControlMode
    approaches: tuple[Direction, ...]
    signal_plan: SignalPlan | None = None
    control_zone_radius: float = DEFAULT_CONTROL_ZONE

    def __post_init__(self):
        signalized = self.control_mode is ControlMode.SIGNALIZED
        if signalized != (self.signal_plan is not None):
            raise ConfigError(
                f"intersection {self.id}: signal plan must be present iff signalized")
        if self.control_zone_radius <= 0:
            raise ConfigError("control_zone_radius must be > 0")


@dataclass(frozen=True)
class Link:
    id: int
    from_node: int
    to_node: int
    length: float
    speed_limit: float
    heading: Direction

    def __post_init__(self):
        if self.length <= 0 or self.speed_limit <= 0:
            raise ConfigError(f"link {self.id}: length and speed limit must be > 0")


@dataclass(frozen=True)
class Route:
    links: tuple[int, ...]
    movements: tuple[Movement, ...]
    intersections: tuple[int, ...]

    @property
    def turns(self) -> int:
        return sum(m.turn != Turn.STRAIGHT for m in self.movements)


@dataclass(frozen=True)
class RoadNetwork:
    intersections: tuple[Intersection, ...]
    links: tuple[Link, ...]
    boundary_nodes: dict[Direction, tuple[int, ...]]
    node_xy: tuple[tuple[float, float], ...]
    name: str = "grid"
    _out: dict = field(default_factory=dict, repr=False, compare=False)
    _by_ends: dict = field(default_factory=dict, repr=False, compare=False)
    _approach_link: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n_nodes = len(self.node_xy)
        for i, node in enumerate(self.intersections):
            if node.id != i:
                raise ConfigError("intersection ids must be dense 0..n-1")
        for link in self.links:
            if not (0 <= link.from_node < n_nodes and 0 <= link.to_node < n_nodes):
                raise ConfigError(f"link {link.id} references a missing node")
            self._out.setdefault(link.from_node, []).append(link.id)
            self._by_ends[(link.from_node, link.to_node)] = link.id
            if link.to_node < len(self.intersections):
                approach = link.heading.opposite
                self._approach_link[(link.to_node, approach)] = link.id
        for side in Direction:
            if not self.boundary_nodes.get(side):
                raise ConfigError(f"boundary side {side.name} has no nodes")

    @property
    def n_intersections(self) -> int:
        return len(self.intersections)

    def is_intersection(self, node: int) -> bool:
        return node < len(self.intersections)

    def out_links(self, node: int) -> list[int]:
        return self._out.get(node, [])

    def link_between(self, a: int, b: int) -> int:
        return self._by_ends[(a, b)]

    def approach_link(self, iid: int, approach: Direction) -> int | None:
        return self._approach_link.get((iid, approach))

    def side_of(self, node: int) -> Direction:
        for side, nodes in self.boundary_nodes.items():
            if node in nodes:
                return side
        raise KeyError(node)

    def with_control(self, rv_controlled_ids, signal_plan: SignalPlan | None = None) -> "RoadNetwork":
        """Copy with a new control assignment (used for the all-signal baseline)."""
        plan = signal_plan or next(
            (i.signal_plan for i in self.intersections if i.signal_plan), SignalPlan())
        rv = _check_ids(rv_controlled_ids, len(self.intersections))
        nodes = tuple(
            Intersection(i.id,
                         ControlMode.RV_CONTROLLED if i.id in rv else ControlMode.SIGNALIZED,
                         i.approaches,
                         None if i.id in rv else plan,
                         i.control_zone_radius)
            for i in self.intersections)
        return RoadNetwork(nodes, self.links, self.boundary_nodes, self.node_xy, self.name)


def _check_ids(ids, n):
    ids = frozenset(int(i) for i in ids)
    bad = sorted(i for i in ids if not 0 <= i < n)
    if bad:
        raise ConfigError(f"rv_controlled_ids out of range 0..{n - 1}: {bad}")
    return ids


def _heading(a: tuple[float, float], b: tuple[float, float]) -> Direction:
    dx, dy = b[0] - a[0], b[1] - a[1]
    if abs(dx) > abs(dy):
        return Direction.E if dx > 0 else Direction.W
    return Direction.N if dy > 0 else Direction.S


def build_grid(rows: int, cols: int, link_length: float = 200.0,
               rv_controlled_ids=(), signal_plan: SignalPlan | None = None,
               speed_limit: float = 15.0,
               control_zone_radius: float = DEFAULT_CONTROL_ZONE,
               name: str | None = None) -> RoadNetwork:
    """Manhattan grid with bidirectional links and a boundary stub per edge slot."""
    if rows < 1 or cols < 1:
        raise ConfigError("grid needs rows, cols >= 1")
    n = rows * cols
    rv = _check_ids(rv_controlled_ids, n)
    plan = signal_plan or SignalPlan()
    L = float(link_length)

    xy = [(c * L, -r * L) for r in range(rows) for c in range(cols)]
    boundary: dict[Direction, list[int]] = {d: [] for d in Direction}
    stubs: list[tuple[int, int]] = []  # (boundary node, adjacent intersection)

    def add_boundary(side, pos, attach):
        boundary[side].append(len(xy))
        stubs.append((len(xy), attach))
        xy.append(pos)

    for c in range(cols):
        add_boundary(Direction.N, (c * L, L), c)
    for c in range(cols):
        add_boundary(Direction.S, (c * L, -rows * L), (rows - 1) * cols + c)
    for r in range(rows):
        add_boundary(Direction.E, (cols * L, -r * L), r * cols + cols - 1)
    for r in range(rows):
        add_boundary(Direction.W, (-L, -r * L), r * cols)

    pairs: list[tuple[int, int]] = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                pairs += [(i, i + 1), (i + 1, i)]
            if r + 1 < rows:
                pairs += [(i, i + cols), (i + cols, i)]
    for b, i in stubs:
        pairs += [(b, i), (i, b)]

    links = tuple(Link(k, a, b, L, speed_limit, _heading(xy[a], xy[b]))
                  for k, (a, b) in enumerate(pairs))
    nodes = tuple(
        Intersection(i,
                     ControlMode.RV_CONTROLLED if i in rv else ControlMode.SIGNALIZED,
                     tuple(Direction),
                     None if i in rv else plan,
                     control_zone_radius)
        for i in range(n))
    return RoadNetwork(nodes, links, {d: tuple(v) for d, v in boundary.items()},
                       tuple(xy), name or f"grid-{rows}x{cols}")


def shortest_route(network: RoadNetwork, origin: int, destination: int) -> Route:
    """Minimal-hop route; ties go to fewer turns, then the smallest next-node id."""
    boundary = {n for nodes in network.boundary_nodes.values() for n in nodes}
    if origin not in boundary or destination not in boundary:
        raise RoutingError("origin and destination must be boundary nodes")
    if origin == destination:
        raise RoutingError("origin equals destination")

    # hop distance to destination over reversed links; boundary nodes are dead ends
    into: dict[int, list[int]] = {}
    for link in network.links:
        into.setdefault(link.to_node, []).append(link.from_node)
    dist = {destination: 0}
    queue = deque([destination])
    while queue:
        node = queue.popleft()
        for prev in into.get(node, []):
            if prev in dist:
                continue
            if prev in boundary and prev != origin:
                continue
            dist[prev] = dist[node] + 1
            queue.append(prev)
    if origin not in dist:
        raise RoutingError(f"destination {destination} unreachable from {origin}")

    xy = network.node_xy

    def successors(node):
        return sorted(network.links[k].to_node for k in network.out_links(node)
                      if dist.get(network.links[k].to_node) == dist[node] - 1)

    # fewest remaining turns from (node, heading on arrival), memoised over the DAG
    memo: dict[tuple[int, Direction], int] = {}

    def remaining(node, heading):
        if node == destination:
            return 0
        key = (node, heading)
        if key not in memo:
            memo[key] = min(
                (classify_turn(heading, _heading(xy[node], xy[nxt])) != Turn.STRAIGHT)
                + remaining(nxt, _heading(xy[node], xy[nxt]))
                for nxt in successors(node))
        return memo[key]

    path = [origin]
    heading = None
    node = origin
    while node != destination:
        options = []
        for nxt in successors(node):
            h = _heading(xy[node], xy[nxt])
            turned = 0 if heading is None else int(classify_turn(heading, h) != Turn.STRAIGHT)
            options.append((turned + remaining(nxt, h), nxt, h))
        _, node, heading = min(options)
        path.append(node)

    links = tuple(network.link_between(a, b) for a, b in zip(path, path[1:]))
    movements, crossed = [], []
    for k_in, k_out in zip(links, links[1:]):
        l_in, l_out = network.links[k_in], network.links[k_out]
        movements.append(Movement(l_in.heading.opposite, classify_turn(l_in.heading, l_out.heading)))
        crossed.append(l_in.to_node)
    return Route(links, tuple(movements), tuple(crossed))


_GRID_RE = re.compile(r"^grid-(\d+)x(\d+)$")


def preset(name: str, link_length: float = 200.0, rv_controlled_ids=None,
           signal_plan: SignalPlan | None = None, **kwargs) -> RoadNetwork:
    """Network by preset name: ``grid-RxC`` or ``colorado14-like`` (2x7, RVs at 2 and 9)."""
    if name == "colorado14-like":
        ids = {2, 9} if rv_controlled_ids is None else rv_controlled_ids
        return build_grid(2, 7, link_length, ids, signal_plan, name=name, **kwargs)
    m = _GRID_RE.match(name)
    if m is None:
        raise ConfigError(f"unknown network preset {name!r}")
    rows, cols = int(m.group(1)), int(m.group(2))
    return build_grid(rows, cols, link_length, rv_controlled_ids or (), signal_plan,
                      name=name, **kwargs)
