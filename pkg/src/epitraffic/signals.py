"""Traffic signals: per-intersection phase plans and queue counters.

An intersection runs a single cyclic plan whose phases fix the signal state
of both axes at once, so the two directions can never show green together.
The default plans reproduce the standard schedules (no-turn: red 33 s,
green 27 s, yellow 6 s; with left turn: red 35 s, green 25 s, left arrow
5 s, yellow 5 s), with the vertical axis red exactly while the horizontal
axis is not, and vice versa.  All intersections share the same cycle
length, and clocks are driven from global simulation time, so fresh
networks are synchronized by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .network import Direction


class SignalState(IntEnum):
    """Signal-matrix encoding: 1 stop, 2 caution, 3 pass, 4 left arrow."""

    STOP = 1
    CAUTION = 2
    PASS = 3
    TURN_LEFT = 4


@dataclass
class Phase:
    vertical: SignalState
    horizontal: SignalState
    duration: int


@dataclass
class PhasePlan:
    phases: list[Phase]
    clock: int = 0

    @property
    def cycle(self) -> int:
        return sum(p.duration for p in self.phases)

    def states_at(self, clock: int) -> tuple[SignalState, SignalState]:
        acc = 0
        for p in self.phases:
            acc += p.duration
            if clock < acc:
                return p.vertical, p.horizontal
        # only reachable if clock >= cycle, which callers prevent
        last = self.phases[-1]
        return last.vertical, last.horizontal

    def green_start(self, vertical: bool) -> int:
        """Clock offset at which the given axis switches from red to green."""
        acc = 0
        for p in self.phases:
            state = p.vertical if vertical else p.horizontal
            if state is SignalState.PASS:
                return acc
            acc += p.duration
        return 0

    def axis_durations(self, vertical: bool) -> dict[str, int]:
        """Per-signal view of the plan: how long this axis shows each light."""
        out = {"red": 0, "green": 0, "yellow": 0, "left": 0}
        names = {
            SignalState.STOP: "red",
            SignalState.PASS: "green",
            SignalState.CAUTION: "yellow",
            SignalState.TURN_LEFT: "left",
        }
        for p in self.phases:
            state = p.vertical if vertical else p.horizontal
            out[names[state]] += p.duration
        return out

    def copy(self) -> "PhasePlan":
        return PhasePlan([Phase(p.vertical, p.horizontal, p.duration) for p in self.phases], self.clock)


def default_plan(allow_left_turn: bool) -> PhasePlan:
    S, C, P, L = SignalState.STOP, SignalState.CAUTION, SignalState.PASS, SignalState.TURN_LEFT
    if allow_left_turn:
        return PhasePlan(
            [
                Phase(S, P, 25),
                Phase(S, L, 5),
                Phase(S, C, 5),
                Phase(P, S, 25),
                Phase(L, S, 5),
                Phase(C, S, 5),
            ]
        )
    return PhasePlan([Phase(S, P, 27), Phase(S, C, 6), Phase(P, S, 27), Phase(C, S, 6)])


def explicit_plan(durations: dict[str, int]) -> PhasePlan:
    """Build a plan from a per-signal duration table (red/green/yellow[/left]).

    The red duration must equal the other axis's green(+left)+yellow so that
    the combined cycle is consistent.
    """
    green = int(durations["green"])
    yellow = int(durations["yellow"])
    left = int(durations.get("left", 0))
    red = int(durations["red"])
    if red != green + yellow + left:
        raise ValueError(
            "inconsistent phase table: red must equal green+left+yellow of the crossing axis"
        )
    S, C, P, L = SignalState.STOP, SignalState.CAUTION, SignalState.PASS, SignalState.TURN_LEFT
    phases = [Phase(S, P, green)]
    if left:
        phases.append(Phase(S, L, left))
    phases.append(Phase(S, C, yellow))
    phases.append(Phase(P, S, green))
    if left:
        phases.append(Phase(L, S, left))
    phases.append(Phase(C, S, yellow))
    return PhasePlan(phases)


def plan_from_axis_durations(vertical: dict[str, int], horizontal: dict[str, int]) -> PhasePlan:
    """Combined plan from independent per-axis duration tables (GA decode).

    Red genes are ignored: each axis is red exactly while the other one is
    not, which keeps the plan free of conflicting greens.
    """
    S, C, P, L = SignalState.STOP, SignalState.CAUTION, SignalState.PASS, SignalState.TURN_LEFT
    phases = [Phase(S, P, max(0, int(horizontal.get("green", 0))))]
    if horizontal.get("left"):
        phases.append(Phase(S, L, max(0, int(horizontal["left"]))))
    phases.append(Phase(S, C, max(0, int(horizontal.get("yellow", 0)))))
    phases.append(Phase(P, S, max(0, int(vertical.get("green", 0)))))
    if vertical.get("left"):
        phases.append(Phase(L, S, max(0, int(vertical["left"]))))
    phases.append(Phase(C, S, max(0, int(vertical.get("yellow", 0)))))
    plan = PhasePlan(phases)
    if plan.cycle <= 0:
        phases[0].duration = 1
    return plan


def apply_controller_output(plan: PhasePlan, delta: int) -> PhasePlan:
    """Shift green time between the axes by `delta` seconds.

    A positive delta grows the vertical green and shrinks the horizontal
    green; red times follow because each axis is red while the other runs.
    Durations clamp at zero; yellow and left-arrow phases are untouched.
    """
    h_green = next(p for p in plan.phases if p.horizontal is SignalState.PASS)
    v_green = next(p for p in plan.phases if p.vertical is SignalState.PASS)
    h_green.duration = max(0, h_green.duration - delta)
    v_green.duration = max(0, v_green.duration + delta)
    return plan


APPROACH_OF = {
    Direction.SOUTH: "top",  # southbound traffic arrives from the north
    Direction.NORTH: "bottom",
    Direction.EAST: "left",
    Direction.WEST: "right",
}


@dataclass
class Signal:
    """One signal head: an intersection approach for one inbound road."""

    intersection: int
    road_idx: int
    direction: Direction  # travel direction of the traffic it controls
    covered_cells: list[tuple[int, int]]
    state: SignalState = SignalState.STOP
    queue: int = 0

    @property
    def vertical(self) -> bool:
        return not self.direction.horizontal

    @property
    def approach(self) -> str:
        return APPROACH_OF[self.direction]


@dataclass
class Intersection:
    node_id: int
    plan: PhasePlan
    signals: dict[str, Signal] = field(default_factory=dict)  # keyed by approach
    controller_slot: int | None = None

    def queue_vertical(self) -> int:
        return sum(s.queue for s in self.signals.values() if s.vertical)

    def queue_horizontal(self) -> int:
        return sum(s.queue for s in self.signals.values() if not s.vertical)

    def tick(self, t: int) -> None:
        """Refresh clock and signal states for absolute simulation time t."""
        plan = self.plan
        plan.clock = t % plan.cycle
        v_state, h_state = plan.states_at(plan.clock)
        for sig in self.signals.values():
            sig.state = v_state if sig.vertical else h_state

    def decision_instants(self) -> tuple[int, int]:
        """Clock offsets of the two red-to-green transitions (horizontal, vertical)."""
        return self.plan.green_start(vertical=False), self.plan.green_start(vertical=True)
