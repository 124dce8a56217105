"""The simulation engine.

One step is one second and follows a fixed order: traffic signals update
(controllers run at the red-to-green transitions), vehicle arrivals are
drawn, every active vehicle runs the seven-rule cellular-automaton update,
and exits are collected into the delay ledger.

Vehicles are processed front-to-back (least remaining path first) and move
immediately, so a follower always sees its leader's updated position and
no vehicle can pass through another within a step.
"""

from __future__ import annotations

from random import Random

import numpy as np

from .controllers import ActivationVector, TrafficContext, TreeNode, evaluate
from .network import LAND, ROAD, Direction, Geometry, NetworkError, NodeKind
from .signals import (
    APPROACH_OF,
    Intersection,
    PhasePlan,
    Signal,
    SignalState,
    apply_controller_output,
    default_plan,
    explicit_plan,
)
from .vehicles import (
    FIXED_DESTINATION,
    RANDOM_WALK,
    DelayLedger,
    EntryProfile,
    Vehicle,
    choose_next_road,
    entry_probability,
)

FREE = ROAD  # occupancy value of an empty road cell


class SimulationError(Exception):
    pass


def read_traffic_context(
    intersection: Intersection,
    neighbours: dict[Direction, tuple[int | None, int | None]],
    intersections: dict[int, Intersection],
) -> TrafficContext:
    """Assemble the ten queue variables for one intersection.

    Neighbour variables read a single directional counter of the first or
    second intersection in each direction; a missing neighbour or missing
    approach reads zero.
    """

    def counter(node_id: int | None, approach: str) -> int:
        if node_id is None:
            return 0
        sig = intersections[node_id].signals.get(approach)
        return sig.queue if sig is not None else 0

    n1, n2 = neighbours[Direction.NORTH]
    s1, s2 = neighbours[Direction.SOUTH]
    w1, w2 = neighbours[Direction.WEST]
    e1, e2 = neighbours[Direction.EAST]
    return TrafficContext(
        ver_queue=intersection.queue_vertical(),
        hor_queue=intersection.queue_horizontal(),
        top1_queue=counter(n1, "top"),
        bottom1_queue=counter(s1, "bottom"),
        left1_queue=counter(w1, "left"),
        right1_queue=counter(e1, "right"),
        top2_queue=counter(n2, "top"),
        bottom2_queue=counter(s2, "bottom"),
        left2_queue=counter(w2, "left"),
        right2_queue=counter(e2, "right"),
    )


class Runtime:
    """Immutable compiled form of a scenario, shared by all of its runs."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.geometry = Geometry(scenario.graph)
        geo = self.geometry
        self.nodes = scenario.graph.nodes
        self.node_pos = {nid: (n.row, n.col) for nid, n in self.nodes.items()}
        self.exit_ids = [n.id for n in scenario.graph.entry_exits()]

        self.occ_template = [LAND] * (geo.height * geo.width)
        for idx in geo.road_cells | geo.junction_cells:
            self.occ_template[idx] = ROAD

        min_lane = min(len(l.cells) for l in geo.lanes) if geo.lanes else 99
        if min_lane < scenario.sim.v_max + 2:
            raise NetworkError(
                f"shortest lane has {min_lane} cells; need at least v_max+2"
            )

        # signals: one per (intersection, inbound directed road)
        self.signal_specs: dict[int, dict[str, tuple[int, Direction, list[int]]]] = {}
        for node in scenario.graph.intersections():
            per_approach: dict[str, tuple[int, Direction, list[int]]] = {}
            for d, (road_idx, _) in sorted(
                geo.in_roads[node.id].items(), key=lambda kv: kv[0].value
            ):
                lanes = geo.lanes_of[(road_idx, d)]
                lanes_here = [l for l in lanes if l.to_node == node.id]
                covered = [l.cells[-1] for l in lanes_here]
                per_approach[APPROACH_OF[d]] = (road_idx, d, covered)
            self.signal_specs[node.id] = per_approach

        # routing candidates per (intersection, incoming direction)
        self.candidates: dict[tuple[int, Direction], list[tuple[Direction, int, str]]] = {}
        for node in scenario.graph.intersections():
            outs = geo.out_lanes[node.id]
            for d_in in Direction:
                cands = []
                for d_out in (Direction.NORTH, Direction.SOUTH, Direction.EAST, Direction.WEST):
                    group = outs.get(d_out)
                    if not group or d_out is d_in.opposite:
                        continue
                    cands.append((d_out, group[0].to_node, d_in.turn(d_out)))
                self.candidates[(node.id, d_in)] = cands

        # entry points: per entry node, its profile schedule and start lanes
        self.entries: list[tuple[int, list[EntryProfile], list]] = []
        profiles_by_node: dict[int, list[EntryProfile]] = {}
        for prof in scenario.entries:
            profiles_by_node.setdefault(prof.node, []).append(prof)
        for nid in sorted(profiles_by_node):
            profs = sorted(profiles_by_node[nid], key=lambda p: p.start_t)
            for a, b in zip(profs, profs[1:]):
                if a.end_t > b.start_t:
                    raise ValueError(f"overlapping entry profiles at node {nid}")
            lanes = []
            for d in (Direction.NORTH, Direction.SOUTH, Direction.EAST, Direction.WEST):
                lanes.extend(geo.out_lanes[nid].get(d, []))
            if not lanes:
                raise ValueError(f"entry node {nid} has no outgoing lanes")
            self.entries.append((nid, profs, lanes))

        # controller slots
        self.slots: list[list[int]] = scenario.resolve_slots()
        self.slot_of: dict[int, int] = {}
        for slot, members in enumerate(self.slots):
            for nid in members:
                self.slot_of[nid] = slot

        self.default_plan_template = self._plan_for(None)
        self.cycle = self.default_plan_template.cycle

    def _plan_for(self, node_id: int | None) -> PhasePlan:
        sc = self.scenario
        table = sc.plan_overrides.get(node_id) if node_id is not None else None
        if table is None:
            table = sc.plan_overrides.get(None)
        if table is not None:
            return explicit_plan(table)
        return default_plan(sc.allow_left_turn)

    def fresh_intersections(self) -> dict[int, Intersection]:
        out: dict[int, Intersection] = {}
        for node in self.scenario.graph.intersections():
            inter = Intersection(node_id=node.id, plan=self._plan_for(node.id))
            for approach, (road_idx, d, covered) in self.signal_specs[node.id].items():
                W = self.geometry.width
                inter.signals[approach] = Signal(
                    intersection=node.id,
                    road_idx=road_idx,
                    direction=d,
                    covered_cells=[(c // W, c % W) for c in covered],
                )
            inter.controller_slot = self.slot_of.get(node.id)
            out[node.id] = inter
        return out


class World:
    """One mutable simulation run over a shared Runtime."""

    def __init__(
        self,
        runtime: Runtime,
        seed: int,
        forest: list[tuple[TreeNode, ActivationVector]] | None = None,
        plan_overrides: dict[int, PhasePlan] | None = None,
        epi_hook=None,
        checks: bool = False,
    ):
        self.rt = runtime
        self.rng = Random(seed)
        self.forest = forest
        self.epi_hook = epi_hook
        self.checks = checks
        sim = runtime.scenario.sim
        self.v_max = sim.v_max
        self.p_random = sim.p_random
        self.fixed_dest_ratio = sim.fixed_dest_ratio
        self.turns_allowed = sim.turns_allowed
        self.allow_left = runtime.scenario.allow_left_turn
        self.density_interval = sim.density_update_interval

        self.occ = list(runtime.occ_template)
        self.intersections = runtime.fresh_intersections()
        if plan_overrides:
            for nid, plan in plan_overrides.items():
                self.intersections[nid].plan = plan.copy()
        self.active: list[Vehicle] = []
        self.ledger = DelayLedger()
        self.next_vid = 2
        self.t = 0
        # per-entry cached probability: (profile pointer, density block, p)
        self._entry_state = [[0, -1, 0.0] for _ in runtime.entries]
        # lane uid -> signal guarding its downstream end (None at exits)
        self.lane_signal: list[Signal | None] = [None] * len(runtime.geometry.lanes)
        for lane in runtime.geometry.lanes:
            inter = self.intersections.get(lane.to_node)
            if inter is not None:
                self.lane_signal[lane.uid] = inter.signals.get(APPROACH_OF[lane.direction])

    # -- signals --------------------------------------------------------
    def tick_signals(self) -> None:
        t = self.t
        forest = self.forest
        for inter in self.intersections.values():
            inter.tick(t)
            if forest is not None and inter.controller_slot is not None:
                h_start, v_start = inter.decision_instants()
                clock = inter.plan.clock
                if clock == h_start or clock == v_start:
                    tree, acts = forest[inter.controller_slot]
                    delta = evaluate(tree, acts, self.traffic_context(inter.node_id))
                    apply_controller_output(inter.plan, delta)
                    inter.tick(t)  # states may shift with the new durations
        if self.epi_hook is not None and t % self.rt.cycle == 0:
            self.epi_hook.on_cycle(self.slot_stabilities())

    def slot_stabilities(self) -> list[float]:
        """Mean (vertical - horizontal) queue difference per controller slot."""
        out = []
        for members in self.rt.slots:
            acc = 0
            for nid in members:
                inter = self.intersections[nid]
                acc += inter.queue_vertical() - inter.queue_horizontal()
            out.append(acc / len(members))
        return out

    def traffic_context(self, node_id: int) -> TrafficContext:
        return read_traffic_context(
            self.intersections[node_id],
            self.rt.geometry.neighbours[node_id],
            self.intersections,
        )

    # -- arrivals ---------------------------------------------------------
    def vehicle_arrivals(self) -> None:
        t = self.t
        rng = self.rng
        occ = self.occ
        interval = self.density_interval
        for idx, (nid, profs, lanes) in enumerate(self.rt.entries):
            state = self._entry_state[idx]
            ptr = state[0]
            while ptr < len(profs) and profs[ptr].end_t <= t:
                ptr += 1
                state[0] = ptr
                state[1] = -1
            if ptr >= len(profs) or t < profs[ptr].start_t:
                continue
            prof = profs[ptr]
            block = (t - prof.start_t) // interval
            if block != state[1]:
                state[1] = block
                state[2] = entry_probability(prof.start_t + block * interval, prof)
            p = state[2]
            for lane in lanes:
                if rng.random() < p and occ[lane.cells[0]] == FREE:
                    self._insert(nid, lane)

    def try_insert(self, node_id: int, lane, p: float) -> Vehicle | None:
        """Single insertion attempt, exposed for direct testing."""
        if self.rng.random() < p and self.occ[lane.cells[0]] == FREE:
            return self._insert(node_id, lane)
        return None

    def _insert(self, node_id: int, lane) -> Vehicle:
        rng = self.rng
        if rng.random() < self.fixed_dest_ratio:
            behaviour = FIXED_DESTINATION
            choices = [x for x in self.rt.exit_ids if x != node_id]
            dest = choices[rng.randrange(len(choices))] if choices else None
        else:
            behaviour = RANDOM_WALK
            dest = None
        veh = Vehicle(self.next_vid, behaviour, dest)
        self.next_vid += 1
        veh.speed = self.v_max
        veh.i = 0
        self._assign_lane(veh, lane)
        self.occ[lane.cells[0]] = veh.vid
        self.active.append(veh)
        self.ledger.inserted += 1
        self.ledger.active += 1
        return veh

    # -- routing ----------------------------------------------------------
    def _filtered_candidates(self, node_id: int, d_in: Direction) -> list:
        cands = self.rt.candidates[(node_id, d_in)]
        if not self.turns_allowed:
            keep = [c for c in cands if c[2] == "straight"]
        elif not self.allow_left:
            keep = [c for c in cands if c[2] != "left"]
        else:
            keep = cands
        return keep if keep else cands

    def _assign_lane(self, veh: Vehicle, lane) -> None:
        """Enter a lane: decide the next road and lay out the path ahead."""
        veh.lane = lane
        to_node = self.rt.nodes[lane.to_node]
        if to_node.kind is NodeKind.ENTRY_EXIT:
            veh.path = lane.cells
            veh.lane_len = len(lane.cells)
            veh.junc_end = len(lane.cells)
            veh.next_lane = None
            veh.turn = "straight"
            veh.want_k = lane.k
            veh.terminal = True
            return
        cands = self._filtered_candidates(to_node.id, lane.direction)
        dest_pos = self.rt.node_pos.get(veh.dest) if veh.dest is not None else None
        d_out, _far, turn = choose_next_road(
            cands, veh.behaviour, dest_pos, self.rt.node_pos, self.rng
        )
        self._set_route(veh, lane, d_out, turn)
        veh.want_k = self._required_k(lane, turn)

    def _required_k(self, lane, turn: str) -> int:
        if turn == "left":
            return 0
        if turn == "right":
            return len(self.rt.geometry.lanes_of[(lane.road_idx, lane.direction)]) - 1
        return lane.k

    def _set_route(self, veh: Vehicle, lane, d_out: Direction, turn: str) -> None:
        veh.lane = lane
        geo = self.rt.geometry
        junction = geo.junctions[lane.to_node]
        out_group = geo.out_lanes[lane.to_node][d_out]
        if turn == "left":
            k2 = 0
        elif turn == "right":
            k2 = len(out_group) - 1
        else:
            k2 = min(lane.k, len(out_group) - 1)
        next_lane = out_group[k2]
        W = geo.width
        fixed = lane.cells[0] // W if lane.direction.horizontal else lane.cells[0] % W
        jpath = geo.junction_path(junction, lane.direction, fixed, next_lane)
        veh.path = lane.cells + jpath + next_lane.cells
        veh.lane_len = len(lane.cells)
        veh.junc_end = len(lane.cells) + len(jpath)
        veh.next_lane = next_lane
        veh.turn = turn
        veh.terminal = False

    def _reroute_for_lane(self, veh: Vehicle) -> None:
        """The planned turn needs a lane we failed to reach: pick again."""
        lane = veh.lane
        node_id = lane.to_node
        cands = self._filtered_candidates(node_id, lane.direction)
        group_len = len(self.rt.geometry.lanes_of[(lane.road_idx, lane.direction)])
        compatible = []
        for cand in cands:
            turn = cand[2]
            if turn == "straight":
                compatible.append(cand)
            elif turn == "left" and lane.k == 0:
                compatible.append(cand)
            elif turn == "right" and lane.k == group_len - 1:
                compatible.append(cand)
        pool = compatible if compatible else cands
        dest_pos = self.rt.node_pos.get(veh.dest) if veh.dest is not None else None
        d_out, _far, turn = choose_next_road(
            pool, veh.behaviour, dest_pos, self.rt.node_pos, self.rng
        )
        self._set_route(veh, lane, d_out, turn)
        veh.want_k = lane.k  # disarm: either compatible now or forced as-is

    # -- vehicle update (rules 1..7) ---------------------------------------
    def _signal_blocks(self, sig: Signal, veh: Vehicle) -> bool:
        st = sig.state
        if st is SignalState.STOP:
            return True
        if st is SignalState.TURN_LEFT:
            return not (veh.turn == "left" and veh.lane.k == 0)
        return False

    def step_vehicles(self) -> None:
        occ = self.occ
        vmax = self.v_max
        p_rand = self.p_random
        rng = self.rng
        changed: dict[int, int] = {}
        exited: set[int] = set()
        order = sorted(self.active, key=lambda x: (len(x.path) - x.i, x.vid))
        for veh in order:
            v = veh.speed
            i = veh.i
            lane_len = veh.lane_len

            # rule 5 support: recalculate a turn we cannot line up for
            if not veh.terminal and veh.want_k != veh.lane.k and lane_len - 1 - i <= v + 1:
                self._reroute_for_lane(veh)
                lane_len = veh.lane_len

            path = veh.path
            n = len(path)

            sig_gap = 1 << 30
            if i < lane_len:
                sig = self.lane_signal[veh.lane.uid]
                if sig is not None and self._signal_blocks(sig, veh):
                    sig_gap = lane_len - i

            limit = v + 2
            gap = 1 << 30
            for s in range(1, limit + 1):
                j = i + s
                if j >= n:
                    break
                if occ[path[j]] > FREE:
                    gap = s
                    break
            if sig_gap < gap:
                gap = sig_gap

            # 1 acceleration
            if v < vmax and gap > v + 1:
                v += 1
            # 2 break
            if gap <= v:
                v = gap - 1
            # 3 change of lane
            if veh.want_k != veh.lane.k and i + v + 1 < lane_len:
                self._try_lane_change(veh, v, changed)
                path = veh.path
                n = len(path)
            # 4 emergency break
            if v > 0 and changed:
                for s in range(1, (v >> 1) + 1):
                    j = i + s
                    if j >= n:
                        break
                    cell = path[j]
                    if cell in changed and occ[cell] > FREE:
                        v = 0
                        break
            # 6 randomization
            if p_rand > 0.0 and v > 0 and rng.random() < p_rand:
                v -= 1
            # 7 car motion (rule 5's direction change is encoded in the path)
            if v > 0:
                nd = i + v
                if veh.terminal and nd >= n - 1:
                    occ[path[i]] = FREE
                    exited.add(veh.vid)
                    self.ledger.completed += 1
                    self.ledger.active -= 1
                    self.ledger.completed_delay += veh.stopped_time
                    continue
                occ[path[i]] = FREE
                veh.i = nd
                occ[path[nd]] = veh.vid
                if not veh.terminal and nd >= veh.junc_end:
                    veh.i = nd - veh.junc_end
                    self._assign_lane(veh, veh.next_lane)
            veh.speed = v
            if v == 0:
                veh.stopped_time += 1

        if exited:
            self.active = [x for x in self.active if x.vid not in exited]

        # queue counters: fully stopped vehicles per inbound directed road
        for inter in self.intersections.values():
            for sig in inter.signals.values():
                sig.queue = 0
        lane_signal = self.lane_signal
        for veh in self.active:
            if veh.speed == 0 and veh.i < veh.lane_len:
                sig = lane_signal[veh.lane.uid]
                if sig is not None:
                    sig.queue += 1

        if self.checks:
            self._verify()

    def _try_lane_change(self, veh: Vehicle, v: int, changed: dict[int, int]) -> None:
        lane = veh.lane
        k = lane.k
        k2 = k + (1 if veh.want_k > k else -1)
        group = self.rt.geometry.lanes_of[(lane.road_idx, lane.direction)]
        target = group[k2]
        tc = target.cells
        i = veh.i
        occ = self.occ
        lo = max(0, i - v)
        hi = min(veh.lane_len - 1, i + v + 1)
        for j in range(lo, hi + 1):
            if occ[tc[j]] > FREE:
                return
        occ[veh.path[i]] = FREE
        if veh.terminal:
            veh.lane = target
            veh.path = target.cells
        else:
            self._set_route(veh, target, veh.next_lane.direction, veh.turn)
        cell = veh.path[i]
        occ[cell] = veh.vid
        changed[cell] = veh.vid

    def _verify(self) -> None:
        seen: dict[int, int] = {}
        for veh in self.active:
            cell = veh.path[veh.i]
            if self.occ[cell] != veh.vid:
                raise SimulationError(f"occupancy out of sync for vehicle {veh.vid}")
            if cell in seen:
                raise SimulationError(
                    f"vehicles {seen[cell]} and {veh.vid} share cell {cell}"
                )
            seen[cell] = veh.vid
            if not 0 <= veh.speed <= self.v_max:
                raise SimulationError(f"speed {veh.speed} out of range")
        led = self.ledger
        if led.inserted != led.completed + led.active:
            raise SimulationError("vehicle conservation violated")
        if led.active != len(self.active):
            raise SimulationError("active count out of sync")

    # -- main loop ----------------------------------------------------------
    def step(self) -> None:
        self.tick_signals()
        self.vehicle_arrivals()
        self.step_vehicles()
        self.t += 1

    def run(self, t0: int, t1: int) -> dict[str, float]:
        """Simulate [t0, t1) and return the performance measures."""
        self.t = t0
        for _ in range(t1 - t0):
            self.step()
        return self.measure()

    def measure(self) -> dict[str, float]:
        active_stopped = sum(v.stopped_time for v in self.active)
        return self.ledger.measure(active_stopped)

    # -- matrix views ---------------------------------------------------------
    def network_matrix(self) -> np.ndarray:
        geo = self.rt.geometry
        return np.array(self.occ, dtype=np.int32).reshape(geo.height, geo.width)

    def signal_matrix(self) -> np.ndarray:
        geo = self.rt.geometry
        mat = np.zeros((geo.height, geo.width), dtype=np.int32)
        for inter in self.intersections.values():
            for sig in inter.signals.values():
                for r, c in sig.covered_cells:
                    mat[r, c] = int(sig.state)
        return mat
