"""Scenario definitions: network, demand, signal plans, and evolution setup.

A scenario is a plain data object that can round-trip through JSON.  Three
scenarios ship built in:

* ``single_intersection`` -- one crossing of single-lane bidirectional
  roads, uniform arrivals (1/10 east-west, 1/30 north-south), no turns, no
  randomization, one hour.  Every run of it reuses one world seed, so the
  fitness landscape is fixed.
* ``poc_grid`` -- ten intersections and nine entry/exit nodes joined by
  two-lane bidirectional roads, a Poisson training hour plus a south-west
  morning wave and a north-east evening wave, controllers shared by
  intersection group.
* ``highway`` -- a three-lane main road crossed by two two-lane roads and
  fed by two one-lane side roads, symmetric west/east waves, one controller
  per intersection.

The wave parameters (volume, time unit, floor, cap) approximate the shape
of the published demand curves; the exact numbers are choices of this
implementation and live here, in the scenario definitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .network import Direction, Node, NodeKind, Road, RoadGraph, validate_network
from .vehicles import EntryProfile


class UnknownScenarioError(Exception):
    pass


class ConfigError(Exception):
    pass


@dataclass
class SimParams:
    v_max: int = 4
    p_random: float = 0.1
    fixed_dest_ratio: float = 0.7
    horizon_seconds: int = 3600
    density_update_interval: int = 21
    turns_allowed: bool = True


@dataclass
class Window:
    length: int
    step: int

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigError("window step must be positive")


@dataclass
class GPDefaults:
    functions: list[str] = field(
        default_factory=lambda: ["add", "sub", "and", "or", "not", "eq", "gt", "if3"]
    )
    const_lo: int = -5
    const_hi: int = 5
    variables: list[str] = field(default_factory=lambda: ["ver_queue", "hor_queue"])
    repetitions: int = 1
    mutation: str = "point"  # or "subtree"


@dataclass
class Scenario:
    name: str
    graph: RoadGraph
    allow_left_turn: bool
    entries: list[EntryProfile]
    sim: SimParams
    window: Window | None
    mapping: object  # "all" | "per_intersection" | {"by_group": [[ids]]}
    gp: GPDefaults = field(default_factory=GPDefaults)
    plan_overrides: dict = field(default_factory=dict)  # node id (or None) -> table
    fixed_eval_seed: bool = False

    def __post_init__(self):
        if self.window is not None and self.sim.horizon_seconds < self.window.length:
            raise ConfigError("horizon shorter than the evaluation window")

    def resolve_slots(self) -> list[list[int]]:
        """Controller slot -> intersection ids, per the mapping setting."""
        inters = [n.id for n in self.graph.intersections()]
        if self.mapping == "all":
            return [inters]
        if self.mapping == "per_intersection":
            return [[nid] for nid in inters]
        if isinstance(self.mapping, dict) and "by_group" in self.mapping:
            groups = [list(g) for g in self.mapping["by_group"]]
            listed = [nid for g in groups for nid in g]
            if sorted(listed) != sorted(inters):
                raise ConfigError("by_group mapping must cover every intersection once")
            if any(not g for g in groups):
                raise ConfigError("empty controller group")
            return groups
        raise ConfigError(f"unknown controller mapping {self.mapping!r}")


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------

def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "network": {
            "nodes": [
                {"id": n.id, "row": n.row, "col": n.col, "kind": n.kind.value}
                for n in sorted(sc.graph.nodes.values(), key=lambda n: n.id)
            ],
            "roads": [
                {
                    "from": r.src,
                    "to": r.dst,
                    "bidirectional": r.bidirectional,
                    "lanes": r.lanes,
                    "direction": r.direction.value,
                }
                for r in sc.graph.roads
            ],
        },
        "signals": {
            "allow_left_turn": sc.allow_left_turn,
            "plan_overrides": {
                ("default" if k is None else str(k)): v
                for k, v in sc.plan_overrides.items()
            },
        },
        "entries": [
            {
                "node": p.node,
                "start": p.start_t,
                "end": p.end_t,
                "volume": p.volume,
                "duration": p.t_total,
                "floor_c": p.floor_c,
                "p_max": p.p_max,
            }
            for p in sc.entries
        ],
        "sim": {
            "v_max": sc.sim.v_max,
            "p_random": sc.sim.p_random,
            "fixed_dest_ratio": sc.sim.fixed_dest_ratio,
            "horizon_seconds": sc.sim.horizon_seconds,
            "density_update_interval": sc.sim.density_update_interval,
            "turns_allowed": sc.sim.turns_allowed,
        },
        "window": (
            {"length": sc.window.length, "step": sc.window.step} if sc.window else None
        ),
        "controllers": {
            "mapping": sc.mapping,
            "functions": sc.gp.functions,
            "constants": [sc.gp.const_lo, sc.gp.const_hi],
            "variables": sc.gp.variables,
            "repetitions": sc.gp.repetitions,
            "mutation": sc.gp.mutation,
        },
        "fixed_eval_seed": sc.fixed_eval_seed,
    }


def scenario_from_dict(data: dict) -> Scenario:
    graph = RoadGraph()
    for nd in data["network"]["nodes"]:
        graph.add_node(
            Node(nd["id"], nd["row"], nd["col"], NodeKind(nd["kind"]))
        )
    for rd in data["network"]["roads"]:
        graph.add_road(
            Road(
                src=rd["from"],
                dst=rd["to"],
                bidirectional=rd["bidirectional"],
                lanes=rd["lanes"],
                direction=Direction(rd["direction"]),
            )
        )
    sig = data.get("signals", {})
    overrides = {}
    for key, table in sig.get("plan_overrides", {}).items():
        overrides[None if key == "default" else int(key)] = table
    entries = [
        EntryProfile(
            node=e["node"],
            start_t=e["start"],
            end_t=e["end"],
            volume=e["volume"],
            t_total=e["duration"],
            floor_c=e.get("floor_c", 0.0),
            p_max=e.get("p_max", 1.0),
        )
        for e in data.get("entries", [])
    ]
    simd = data.get("sim", {})
    sim = SimParams(
        v_max=simd.get("v_max", 4),
        p_random=simd.get("p_random", 0.1),
        fixed_dest_ratio=simd.get("fixed_dest_ratio", 0.7),
        horizon_seconds=simd.get("horizon_seconds", 3600),
        density_update_interval=simd.get("density_update_interval", 21),
        turns_allowed=simd.get("turns_allowed", True),
    )
    win = data.get("window")
    window = Window(win["length"], win["step"]) if win else None
    ctrl = data.get("controllers", {})
    mapping = ctrl.get("mapping", "all")
    if isinstance(mapping, dict) and "by_group" in mapping:
        mapping = {"by_group": [list(g) for g in mapping["by_group"]]}
    lo, hi = ctrl.get("constants", [-5, 5])
    gp = GPDefaults(
        functions=list(ctrl.get("functions", GPDefaults().functions)),
        const_lo=lo,
        const_hi=hi,
        variables=list(ctrl.get("variables", GPDefaults().variables)),
        repetitions=ctrl.get("repetitions", 1),
        mutation=ctrl.get("mutation", "point"),
    )
    return Scenario(
        name=data.get("name", "scenario"),
        graph=graph,
        allow_left_turn=sig.get("allow_left_turn", True),
        entries=entries,
        sim=sim,
        window=window,
        mapping=mapping,
        gp=gp,
        plan_overrides=overrides,
        fixed_eval_seed=data.get("fixed_eval_seed", False),
    )


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2)


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

def _uniform(node: int, start: int, end: int, p: float) -> EntryProfile:
    return EntryProfile(node, start, end, volume=0.0, t_total=1.0, floor_c=p, p_max=p)


def _wave(node: int, start: int, end: int) -> EntryProfile:
    # Poisson wave over 48 slots with mean 24: climbs from near zero to a
    # peak of about 0.08 per lane per second mid-span and falls off again,
    # riding on a small uniform floor.
    return EntryProfile(
        node, start, end, volume=1152.0, t_total=48.0, floor_c=0.01, p_max=0.5
    )


def single_intersection() -> Scenario:
    g = RoadGraph()
    g.add_node(Node(0, 35, 35, NodeKind.INTERSECTION))
    g.add_node(Node(1, 5, 35, NodeKind.ENTRY_EXIT))   # top
    g.add_node(Node(2, 65, 35, NodeKind.ENTRY_EXIT))  # bottom
    g.add_node(Node(3, 35, 5, NodeKind.ENTRY_EXIT))   # left
    g.add_node(Node(4, 35, 65, NodeKind.ENTRY_EXIT))  # right
    g.add_road(Road(1, 0, True, 1, Direction.SOUTH))
    g.add_road(Road(0, 2, True, 1, Direction.SOUTH))
    g.add_road(Road(3, 0, True, 1, Direction.EAST))
    g.add_road(Road(0, 4, True, 1, Direction.EAST))
    horizon = 3600
    entries = [
        _uniform(3, 0, horizon, 1 / 10),
        _uniform(4, 0, horizon, 1 / 10),
        _uniform(1, 0, horizon, 1 / 30),
        _uniform(2, 0, horizon, 1 / 30),
    ]
    return Scenario(
        name="single_intersection",
        graph=g,
        allow_left_turn=False,
        entries=entries,
        sim=SimParams(
            v_max=4,
            p_random=0.0,
            fixed_dest_ratio=1.0,
            horizon_seconds=horizon,
            density_update_interval=21,
            turns_allowed=False,
        ),
        window=None,
        mapping="all",
        gp=GPDefaults(
            functions=["add", "sub", "and", "or", "not", "eq", "gt", "if3"],
            const_lo=-5,
            const_hi=5,
            variables=["ver_queue", "hor_queue"],
            repetitions=1,
            mutation="subtree",
        ),
        fixed_eval_seed=True,
    )


# Grid letters -> node ids used below.
POC_IDS = {"A": 10, "B": 11, "C": 12, "D": 13, "E": 14,
           "F": 15, "G": 16, "H": 17, "I": 18, "J": 19}


def poc_grid() -> Scenario:
    g = RoadGraph()
    inter = {
        "A": (134, 16), "B": (14, 16), "C": (54, 56), "D": (54, 16), "E": (14, 56),
        "F": (94, 56), "G": (94, 96), "H": (134, 56), "I": (14, 96), "J": (134, 96),
    }
    for letter, (r, c) in inter.items():
        g.add_node(Node(POC_IDS[letter], r, c, NodeKind.INTERSECTION))
    entry_pos = {
        1: (2, 56), 2: (14, 108), 3: (14, 4), 4: (54, 4), 5: (94, 108),
        6: (134, 4), 7: (134, 108), 8: (144, 56), 9: (94, 44),
    }
    for nid, (r, c) in entry_pos.items():
        g.add_node(Node(nid, r, c, NodeKind.ENTRY_EXIT))

    def road(a, b, direction):
        g.add_road(Road(a, b, True, 2, direction))

    I = POC_IDS
    # internal edges (11)
    road(I["B"], I["E"], Direction.EAST)
    road(I["E"], I["I"], Direction.EAST)
    road(I["D"], I["C"], Direction.EAST)
    road(I["F"], I["G"], Direction.EAST)
    road(I["A"], I["H"], Direction.EAST)
    road(I["H"], I["J"], Direction.EAST)
    road(I["B"], I["D"], Direction.SOUTH)
    road(I["E"], I["C"], Direction.SOUTH)
    road(I["C"], I["F"], Direction.SOUTH)
    road(I["F"], I["H"], Direction.SOUTH)
    road(I["I"], I["G"], Direction.SOUTH)
    # entry spurs (9)
    road(1, I["E"], Direction.SOUTH)
    road(I["I"], 2, Direction.EAST)
    road(3, I["B"], Direction.EAST)
    road(4, I["D"], Direction.EAST)
    road(I["G"], 5, Direction.EAST)
    road(6, I["A"], Direction.EAST)
    road(I["J"], 7, Direction.EAST)
    road(I["H"], 8, Direction.SOUTH)
    road(9, I["F"], Direction.EAST)

    length, step, count = 3600, 300, 200
    horizon = (count - 1) * step + length  # 200 window positions cover it
    south_west = [4, 6, 8]
    north_east = [1, 2, 5]
    entries: list[EntryProfile] = []
    for nid in sorted(entry_pos):
        entries.append(_wave(nid, 0, 3600))  # training hour for everyone
        if nid in south_west:
            entries.append(_wave(nid, 3600, 18000))          # 7-11 am
            entries.append(_uniform(nid, 18000, horizon, 0.02))
        elif nid in north_east:
            entries.append(_uniform(nid, 3600, 36000, 0.02))
            entries.append(_wave(nid, 36000, 46800))         # 4-7 pm
            entries.append(_uniform(nid, 46800, horizon, 0.02))
        else:
            entries.append(_uniform(nid, 3600, horizon, 0.02))

    return Scenario(
        name="poc_grid",
        graph=g,
        allow_left_turn=True,
        entries=entries,
        sim=SimParams(
            v_max=4,
            p_random=0.1,
            fixed_dest_ratio=0.7,
            horizon_seconds=horizon,
            density_update_interval=21,
            turns_allowed=True,
        ),
        window=Window(length, step),
        mapping={"by_group": [
            [POC_IDS["E"], POC_IDS["F"], POC_IDS["H"]],
            [POC_IDS["B"], POC_IDS["D"], POC_IDS["G"], POC_IDS["I"]],
            [POC_IDS["A"], POC_IDS["J"]],
            [POC_IDS["C"]],
        ]},
        gp=GPDefaults(
            functions=["add", "sub", "mul", "and", "or", "not", "eq", "gt", "lt", "if3"],
            const_lo=-10,
            const_hi=10,
            variables=[
                "ver_queue", "hor_queue",
                "top1_queue", "bottom1_queue", "left1_queue", "right1_queue",
                "top2_queue", "bottom2_queue", "left2_queue", "right2_queue",
            ],
            repetitions=20,
            mutation="point",
        ),
        fixed_eval_seed=False,
    )


def highway() -> Scenario:
    g = RoadGraph()
    # main road intersections west to east
    A, B, C, D = 10, 11, 12, 13
    g.add_node(Node(A, 20, 15, NodeKind.INTERSECTION))
    g.add_node(Node(B, 20, 55, NodeKind.INTERSECTION))
    g.add_node(Node(C, 20, 95, NodeKind.INTERSECTION))
    g.add_node(Node(D, 20, 135, NodeKind.INTERSECTION))
    g.add_node(Node(1, 20, 4, NodeKind.ENTRY_EXIT))    # west end of the highway
    g.add_node(Node(2, 20, 150, NodeKind.ENTRY_EXIT))  # east end
    g.add_node(Node(3, 5, 55, NodeKind.ENTRY_EXIT))
    g.add_node(Node(4, 35, 55, NodeKind.ENTRY_EXIT))
    g.add_node(Node(5, 5, 95, NodeKind.ENTRY_EXIT))
    g.add_node(Node(6, 35, 95, NodeKind.ENTRY_EXIT))
    g.add_node(Node(7, 8, 15, NodeKind.ENTRY_EXIT))    # side road off A
    g.add_node(Node(8, 32, 135, NodeKind.ENTRY_EXIT))  # side road off D

    g.add_road(Road(1, A, True, 3, Direction.EAST))
    g.add_road(Road(A, B, True, 3, Direction.EAST))
    g.add_road(Road(B, C, True, 3, Direction.EAST))
    g.add_road(Road(C, D, True, 3, Direction.EAST))
    g.add_road(Road(D, 2, True, 3, Direction.EAST))
    g.add_road(Road(3, B, True, 2, Direction.SOUTH))
    g.add_road(Road(B, 4, True, 2, Direction.SOUTH))
    g.add_road(Road(5, C, True, 2, Direction.SOUTH))
    g.add_road(Road(C, 6, True, 2, Direction.SOUTH))
    g.add_road(Road(7, A, True, 1, Direction.SOUTH))
    g.add_road(Road(D, 8, True, 1, Direction.SOUTH))

    length, step, count = 3600, 330, 200
    horizon = (count - 1) * step + length
    entries: list[EntryProfile] = [
        _wave(1, 0, 3600),
        _wave(1, 3600, 18000),                    # west wave 7-11 am
        _uniform(1, 18000, horizon, 0.02),
        _wave(2, 0, 3600),
        _uniform(2, 3600, 36000, 0.02),
        _wave(2, 36000, 46800),                   # east wave 4-7 pm
        _uniform(2, 46800, horizon, 0.02),
    ]
    for nid in (3, 4, 5, 6):
        entries.append(_uniform(nid, 0, horizon, 0.03))
    for nid in (7, 8):
        entries.append(_uniform(nid, 0, horizon, 0.02))

    return Scenario(
        name="highway",
        graph=g,
        allow_left_turn=True,
        entries=entries,
        sim=SimParams(
            v_max=4,
            p_random=0.1,
            fixed_dest_ratio=0.7,
            horizon_seconds=horizon,
            density_update_interval=22,
            turns_allowed=True,
        ),
        window=Window(length, step),
        mapping="per_intersection",
        gp=GPDefaults(
            functions=["add", "sub", "and", "or", "not", "eq", "gt", "if3"],
            const_lo=-5,
            const_hi=5,
            variables=[
                "ver_queue", "hor_queue",
                "left1_queue", "right1_queue", "left2_queue", "right2_queue",
            ],
            repetitions=20,
            mutation="point",
        ),
        fixed_eval_seed=False,
    )


_BUILTINS = {
    "single_intersection": single_intersection,
    "poc_grid": poc_grid,
    "highway": highway,
}


def builtin_scenario(name: str) -> Scenario:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownScenarioError(
            f"unknown scenario {name!r}; pick one of {sorted(_BUILTINS)}"
        ) from None
    sc = factory()
    report = validate_network(sc.graph)
    if report.removed_nodes or report.rejected_roads:
        raise ConfigError(f"built-in scenario {name} failed validation: {report}")
    return sc


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)
