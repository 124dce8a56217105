"""Road network model.

The network lives in two coupled representations: a directed graph of
entry/exit nodes and intersections connected by axis-aligned roads, and an
integer cell matrix where each cell is a 3x3 m patch of ground.  Cell value
0 is plain land, 1 is empty road, and anything greater than 1 is the id of
the vehicle sitting on that cell.

Rasterization follows right-hand traffic: the lanes of each travel
direction form a contiguous band on the driver's right of the line joining
the two node centres.  Cells where bands of different roads meet at an
intersection belong to the intersection itself (the junction block), not to
either road.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

LAND = 0
ROAD = 1  # grid values > ROAD are vehicle ids


class NetworkError(Exception):
    """The network cannot be built into a consistent grid."""


class OverlapError(NetworkError):
    """Two roads claim the same cell with incompatible directions."""


class Direction(str, Enum):
    NORTH = "north"
    SOUTH = "south"
    EAST = "east"
    WEST = "west"

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]

    @property
    def opposite(self) -> "Direction":
        return _OPPOSITES[self]

    @property
    def horizontal(self) -> bool:
        return self in (Direction.EAST, Direction.WEST)

    def turn(self, other: "Direction") -> str:
        """Classify the move from heading `self` to heading `other`."""
        if other is self:
            return "straight"
        if other is self.opposite:
            return "u_turn"
        return "right" if _RIGHT_OF[self] is other else "left"


_DELTAS = {
    Direction.NORTH: (-1, 0),
    Direction.SOUTH: (1, 0),
    Direction.EAST: (0, 1),
    Direction.WEST: (0, -1),
}
_OPPOSITES = {
    Direction.NORTH: Direction.SOUTH,
    Direction.SOUTH: Direction.NORTH,
    Direction.EAST: Direction.WEST,
    Direction.WEST: Direction.EAST,
}
_RIGHT_OF = {
    Direction.NORTH: Direction.EAST,
    Direction.EAST: Direction.SOUTH,
    Direction.SOUTH: Direction.WEST,
    Direction.WEST: Direction.NORTH,
}


class NodeKind(str, Enum):
    ENTRY_EXIT = "entry_exit"
    INTERSECTION = "intersection"


@dataclass(frozen=True)
class Node:
    id: int
    row: int
    col: int
    kind: NodeKind


@dataclass(frozen=True)
class Road:
    """A straight road from `src` to `dst`.

    `direction` is the travel direction from src to dst; a bidirectional
    road also carries the opposite flow.  `lanes` counts lanes per
    direction.
    """

    src: int
    dst: int
    bidirectional: bool
    lanes: int
    direction: Direction


@dataclass
class RoadGraph:
    nodes: dict[int, Node] = field(default_factory=dict)
    roads: list[Road] = field(default_factory=list)

    def add_node(self, node: Node) -> None:
        if node.id in self.nodes:
            raise NetworkError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node

    def add_road(self, road: Road) -> None:
        self.roads.append(road)

    def incident(self, node_id: int) -> list[Road]:
        return [r for r in self.roads if node_id in (r.src, r.dst)]

    def entry_exits(self) -> list[Node]:
        return sorted(
            (n for n in self.nodes.values() if n.kind is NodeKind.ENTRY_EXIT),
            key=lambda n: n.id,
        )

    def intersections(self) -> list[Node]:
        return sorted(
            (n for n in self.nodes.values() if n.kind is NodeKind.INTERSECTION),
            key=lambda n: n.id,
        )


@dataclass
class RejectedRoad:
    road: Road
    reason: str


@dataclass
class ValidationReport:
    removed_nodes: list[int]
    rejected_roads: list[RejectedRoad]
    graph: RoadGraph  # the pruned, usable graph


def _road_is_consistent(graph: RoadGraph, road: Road) -> str | None:
    if road.src == road.dst:
        return "self-loop roads cannot be modelled"
    if road.src not in graph.nodes or road.dst not in graph.nodes:
        return "endpoint does not exist"
    if road.lanes < 1:
        return "lane count must be positive"
    a, b = graph.nodes[road.src], graph.nodes[road.dst]
    dr, dc = b.row - a.row, b.col - a.col
    if dr != 0 and dc != 0:
        return "roads must be axis-aligned"
    if dr == 0 and dc == 0:
        return "zero-length road"
    actual = (
        Direction.EAST
        if (dr == 0 and dc > 0)
        else Direction.WEST
        if dr == 0
        else Direction.SOUTH
        if dr > 0
        else Direction.NORTH
    )
    if actual is not road.direction:
        return f"declared direction {road.direction.value} but geometry says {actual.value}"
    return None


def validate_network(graph: RoadGraph) -> ValidationReport:
    """Check a graph and prune the parts that cannot take part in a simulation.

    Roads that are self-loops, dangling, or not axis-aligned are rejected.
    Nodes that cannot reach any entry/exit node over the remaining directed
    roads are removed, as are intersections left with fewer than two roads
    and nodes with no roads at all.  Removal iterates to a fixed point, so a
    second validation pass removes nothing.
    """
    rejected = []
    roads = []
    for road in graph.roads:
        reason = _road_is_consistent(graph, road)
        if reason is None:
            roads.append(road)
        else:
            rejected.append(RejectedRoad(road, reason))

    nodes = dict(graph.nodes)
    removed: list[int] = []
    while True:
        # reverse adjacency: who can move INTO each node in one hop
        succ: dict[int, set[int]] = {nid: set() for nid in nodes}
        degree: dict[int, int] = {nid: 0 for nid in nodes}
        for road in roads:
            degree[road.src] += 1
            degree[road.dst] += 1
            succ[road.src].add(road.dst)
            if road.bidirectional:
                succ[road.dst].add(road.src)

        # nodes that can reach an entry/exit by following roads forward
        can_exit: set[int] = {
            nid for nid, n in nodes.items() if n.kind is NodeKind.ENTRY_EXIT
        }
        frontier = True
        while frontier:
            frontier = False
            for nid in nodes:
                if nid not in can_exit and succ[nid] & can_exit:
                    can_exit.add(nid)
                    frontier = True

        doomed = set()
        for nid, node in nodes.items():
            if degree[nid] == 0:
                doomed.add(nid)
            elif node.kind is NodeKind.INTERSECTION and degree[nid] < 2:
                doomed.add(nid)
            elif nid not in can_exit:
                doomed.add(nid)
        if not doomed:
            break
        removed.extend(sorted(doomed))
        nodes = {nid: n for nid, n in nodes.items() if nid not in doomed}
        roads = [r for r in roads if r.src in nodes and r.dst in nodes]

    pruned = RoadGraph(nodes=nodes, roads=list(roads))
    return ValidationReport(
        removed_nodes=removed, rejected_roads=rejected, graph=pruned
    )


@dataclass
class Lane:
    """One directed lane of a road, as an ordered run of grid cells.

    `cells` holds flat indices (row * width + col) from the upstream end to
    the cell just before the downstream junction block (or up to the node
    cell itself when the downstream node is an entry/exit).
    """

    road_idx: int
    direction: Direction
    k: int  # 0 = leftmost/innermost lane
    from_node: int
    to_node: int
    cells: list[int]
    uid: int = -1  # assigned by Geometry, stable ordering key


@dataclass
class Junction:
    node_id: int
    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int

    def contains(self, r: int, c: int) -> bool:
        return self.row_lo <= r <= self.row_hi and self.col_lo <= c <= self.col_hi


@dataclass
class CellGrid:
    """Integer cell matrix view of a network (0 land, 1 road)."""

    width: int
    height: int
    cells: np.ndarray


class Geometry:
    """Compiled, immutable cell-level layout of a validated road graph.

    Shared read-only by every simulation run of the same scenario.
    """

    def __init__(self, graph: RoadGraph):
        self.graph = graph
        self._band_ranges()
        self._build_lanes()
        self._size_grid()
        self._claim_cells()
        self._index_connectivity()

    # -- band and junction extents ------------------------------------
    def _band_ranges(self) -> None:
        # per node: row extent of horizontal bands / col extent of vertical
        self.row_range: dict[int, tuple[int, int]] = {}
        self.col_range: dict[int, tuple[int, int]] = {}
        for nid, node in self.graph.nodes.items():
            rows: list[int] = []
            cols: list[int] = []
            for road in self.graph.incident(nid):
                L = road.lanes
                if road.direction.horizontal:
                    axis = node.row
                    if road.bidirectional:
                        rows += [axis - L, axis + L - 1]
                    elif road.direction is Direction.EAST:
                        rows += [axis, axis + L - 1]
                    else:
                        rows += [axis - L, axis - 1]
                else:
                    axis = node.col
                    if road.bidirectional:
                        cols += [axis - L, axis + L - 1]
                    elif road.direction is Direction.SOUTH:
                        cols += [axis - L, axis - 1]
                    else:
                        cols += [axis, axis + L - 1]
            self.row_range[nid] = (min(rows), max(rows)) if rows else (node.row, node.row)
            self.col_range[nid] = (min(cols), max(cols)) if cols else (node.col, node.col)

    def _junction_of(self, nid: int) -> Junction:
        rlo, rhi = self.row_range[nid]
        clo, chi = self.col_range[nid]
        return Junction(nid, rlo, rhi, clo, chi)

    def _lane_fixed_coord(self, axis: int, direction: Direction, k: int) -> int:
        if direction is Direction.EAST:
            return axis + k
        if direction is Direction.WEST:
            return axis - 1 - k
        if direction is Direction.SOUTH:
            return axis - 1 - k
        return axis + k  # NORTH

    def _build_lanes(self) -> None:
        graph = self.graph
        self.junctions: dict[int, Junction] = {
            n.id: self._junction_of(n.id) for n in graph.intersections()
        }
        raw_lanes: list[tuple[Lane, list[tuple[int, int]]]] = []
        for road_idx, road in enumerate(graph.roads):
            flows = [(road.src, road.dst, road.direction)]
            if road.bidirectional:
                flows.append((road.dst, road.src, road.direction.opposite))
            for from_id, to_id, d in flows:
                a, b = graph.nodes[from_id], graph.nodes[to_id]
                axis = a.row if d.horizontal else a.col
                for k in range(road.lanes):
                    fixed = self._lane_fixed_coord(axis, d, k)
                    start, end = self._span(a, b, d)
                    if d in (Direction.EAST, Direction.WEST):
                        step = 1 if d is Direction.EAST else -1
                        coords = [(fixed, c) for c in range(start, end + step, step)]
                    else:
                        step = 1 if d is Direction.SOUTH else -1
                        coords = [(r, fixed) for r in range(start, end + step, step)]
                    if not coords:
                        raise NetworkError(
                            f"road {road_idx} too short for its junctions"
                        )
                    lane = Lane(road_idx, d, k, from_id, to_id, [])
                    raw_lanes.append((lane, coords))
        self._raw_lanes = raw_lanes

    def _span(self, a: Node, b: Node, d: Direction) -> tuple[int, int]:
        """First and last along-axis coordinate of a lane from a to b."""
        if d is Direction.EAST:
            start = a.col if a.kind is NodeKind.ENTRY_EXIT else self.col_range[a.id][1] + 1
            end = b.col if b.kind is NodeKind.ENTRY_EXIT else self.col_range[b.id][0] - 1
        elif d is Direction.WEST:
            start = a.col if a.kind is NodeKind.ENTRY_EXIT else self.col_range[a.id][0] - 1
            end = b.col if b.kind is NodeKind.ENTRY_EXIT else self.col_range[b.id][1] + 1
        elif d is Direction.SOUTH:
            start = a.row if a.kind is NodeKind.ENTRY_EXIT else self.row_range[a.id][1] + 1
            end = b.row if b.kind is NodeKind.ENTRY_EXIT else self.row_range[b.id][0] - 1
        else:
            start = a.row if a.kind is NodeKind.ENTRY_EXIT else self.row_range[a.id][0] - 1
            end = b.row if b.kind is NodeKind.ENTRY_EXIT else self.row_range[b.id][1] + 1
        return start, end

    def _size_grid(self) -> None:
        coords: list[tuple[int, int]] = []
        for _, cc in self._raw_lanes:
            coords += cc
        for j in self.junctions.values():
            coords += [(j.row_lo, j.col_lo), (j.row_hi, j.col_hi)]
        for n in self.graph.nodes.values():
            coords.append((n.row, n.col))
        if not coords:
            self.height, self.width = 1, 1
            return
        min_r = min(r for r, _ in coords)
        min_c = min(c for _, c in coords)
        if min_r < 1 or min_c < 1:
            raise NetworkError(
                "node coordinates leave no room for lane bands and the 1-cell margin"
            )
        self.height = max(r for r, _ in coords) + 2
        self.width = max(c for _, c in coords) + 2

    def _claim_cells(self) -> None:
        """Assign every road cell a unique owner, detecting overlaps."""
        W = self.width
        self.lanes: list[Lane] = []
        owner: dict[int, tuple] = {}
        self.junction_cells: set[int] = set()
        for j in self.junctions.values():
            for r in range(j.row_lo, j.row_hi + 1):
                for c in range(j.col_lo, j.col_hi + 1):
                    flat = r * W + c
                    if flat in self.junction_cells and owner.get(flat, (None,))[0] != j.node_id:
                        prev = owner[flat]
                        raise OverlapError(
                            f"junctions {prev[0]} and {j.node_id} overlap at ({r},{c})"
                        )
                    self.junction_cells.add(flat)
                    owner[flat] = (j.node_id, "junction")

        for lane, coords in self._raw_lanes:
            for r, c in coords:
                flat = r * W + c
                if flat in self.junction_cells:
                    raise OverlapError(
                        f"lane of road {lane.road_idx} runs into junction cell ({r},{c})"
                    )
                if flat in owner:
                    prev = owner[flat]
                    raise OverlapError(
                        f"roads {prev[0]} and {lane.road_idx} both claim cell ({r},{c})"
                    )
                owner[flat] = (lane.road_idx, lane.direction)
                lane.cells.append(flat)
            lane.uid = len(self.lanes)
            self.lanes.append(lane)
        del self._raw_lanes
        self.road_cells: set[int] = set(owner)

    # -- connectivity used by routing and traffic context --------------
    def _index_connectivity(self) -> None:
        graph = self.graph
        # lanes grouped by (road_idx, direction), ordered by k
        self.lanes_of: dict[tuple[int, Direction], list[Lane]] = {}
        for lane in self.lanes:
            self.lanes_of.setdefault((lane.road_idx, lane.direction), []).append(lane)
        for group in self.lanes_of.values():
            group.sort(key=lambda l: l.k)

        # outgoing directed lane groups per node, keyed by leaving direction
        self.out_lanes: dict[int, dict[Direction, list[Lane]]] = {
            nid: {} for nid in graph.nodes
        }
        self.in_roads: dict[int, dict[Direction, tuple[int, Direction]]] = {
            nid: {} for nid in graph.nodes
        }
        for (road_idx, d), group in sorted(
            self.lanes_of.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
        ):
            src = group[0].from_node
            dst = group[0].to_node
            self.out_lanes[src][d] = group
            self.in_roads[dst][d] = (road_idx, d)

        # first and second intersection neighbour in each direction
        self.neighbours: dict[int, dict[Direction, tuple[int | None, int | None]]] = {}
        for node in graph.intersections():
            per_dir: dict[Direction, tuple[int | None, int | None]] = {}
            for d in Direction:
                first = self._next_intersection(node.id, d)
                second = self._next_intersection(first, d) if first is not None else None
                per_dir[d] = (first, second)
            self.neighbours[node.id] = per_dir

    def _next_intersection(self, nid: int | None, d: Direction) -> int | None:
        if nid is None:
            return None
        group = self.out_lanes[nid].get(d)
        if not group:
            return None
        nxt = group[0].to_node
        node = self.graph.nodes[nxt]
        return nxt if node.kind is NodeKind.INTERSECTION else None

    # -- public views ---------------------------------------------------
    def grid(self) -> CellGrid:
        cells = np.full((self.height, self.width), LAND, dtype=np.int32)
        flat = cells.reshape(-1)
        for idx in self.road_cells:
            flat[idx] = ROAD
        return CellGrid(width=self.width, height=self.height, cells=cells)

    def junction_path(
        self, junction: Junction, d_in: Direction, entry_fixed: int, out_lane: Lane
    ) -> list[int]:
        """Cells crossed inside a junction from an approach lane to `out_lane`.

        The path runs along the approach heading until it lines up with the
        exit lane, then along the exit heading (with a lateral jog at the
        far edge for straight moves that shift lanes).
        """
        W = self.width
        d_out = out_lane.direction
        out_fixed = (
            out_lane.cells[0] // W if d_out.horizontal else out_lane.cells[0] % W
        )
        cells: list[tuple[int, int]] = []
        if d_in.horizontal:
            row = entry_fixed
            cols = (
                range(junction.col_lo, junction.col_hi + 1)
                if d_in is Direction.EAST
                else range(junction.col_hi, junction.col_lo - 1, -1)
            )
            if d_out is d_in:
                turn_col = junction.col_hi if d_in is Direction.EAST else junction.col_lo
            else:
                turn_col = out_fixed
            for c in cols:
                cells.append((row, c))
                if c == turn_col:
                    break
            if d_out is d_in:
                r, target = row, out_fixed
                step = 1 if target > r else -1
                while r != target:
                    r += step
                    cells.append((r, turn_col))
            else:
                rows = (
                    range(row + 1, junction.row_hi + 1)
                    if d_out is Direction.SOUTH
                    else range(row - 1, junction.row_lo - 1, -1)
                )
                for r in rows:
                    cells.append((r, turn_col))
        else:
            col = entry_fixed
            rows = (
                range(junction.row_lo, junction.row_hi + 1)
                if d_in is Direction.SOUTH
                else range(junction.row_hi, junction.row_lo - 1, -1)
            )
            if d_out is d_in:
                turn_row = junction.row_hi if d_in is Direction.SOUTH else junction.row_lo
            else:
                turn_row = out_fixed
            for r in rows:
                cells.append((r, col))
                if r == turn_row:
                    break
            if d_out is d_in:
                c, target = col, out_fixed
                step = 1 if target > c else -1
                while c != target:
                    c += step
                    cells.append((turn_row, c))
            else:
                cols = (
                    range(col + 1, junction.col_hi + 1)
                    if d_out is Direction.EAST
                    else range(col - 1, junction.col_lo - 1, -1)
                )
                for c in cols:
                    cells.append((turn_row, c))
        return [r * W + c for r, c in cells]


def build_grid(graph: RoadGraph) -> CellGrid:
    """Rasterize a validated graph into its cell matrix."""
    return Geometry(graph).grid()
