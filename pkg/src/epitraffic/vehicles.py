"""Vehicles: arrival probabilities, per-vehicle state, routing, delay ledger.

Vehicle motion itself lives in `world`, which applies the seven-rule
cellular-automaton update once per second.  This module holds the pieces
that are meaningful on their own: the Poisson entry model, the vehicle
record, the local routing heuristic and the delay bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from random import Random

from .network import Direction

RANDOM_WALK = 0
FIXED_DESTINATION = 1


@dataclass(frozen=True)
class EntryProfile:
    """Arrival probabilities for one entry node over [start_t, end_t).

    The Poisson pmf is evaluated in the profile's own time unit: the span
    divides into `t_total` slots and the pmf index is the slot reached so
    far, with mean `volume / t_total`.  `floor_c` lifts the whole curve and
    `p_max` caps it; a uniform profile is floor_c == p_max with volume 0.
    """

    node: int
    start_t: int
    end_t: int
    volume: float
    t_total: float
    floor_c: float = 0.0
    p_max: float = 1.0

    def __post_init__(self):
        if self.start_t >= self.end_t:
            raise ValueError("entry profile must have start_t < end_t")
        if not (0.0 <= self.floor_c <= self.p_max <= 1.0):
            raise ValueError("entry profile needs 0 <= floor_c <= p_max <= 1")
        if self.t_total <= 0:
            raise ValueError("t_total must be positive")


def poisson_pmf(k: int, mu: float) -> float:
    """P[X = k] for X ~ Poisson(mu), stable for large k."""
    if mu <= 0.0:
        return 1.0 if k == 0 else 0.0
    if k < 0:
        return 0.0
    return math.exp(k * math.log(mu) - mu - math.lgamma(k + 1))


def entry_probability(t: int, profile: EntryProfile) -> float:
    """Per-second, per-lane probability that a vehicle arrives at step t.

    t is absolute simulation time inside [start_t, end_t); it is rebased to
    the profile start and converted to pmf slots before evaluating.
    """
    span = profile.end_t - profile.start_t
    k = int((t - profile.start_t) * profile.t_total // span)
    mu = profile.volume / profile.t_total
    return min(poisson_pmf(k, mu) + profile.floor_c, profile.p_max)


@dataclass
class DelayLedger:
    """Running totals for the performance measures of one simulation."""

    inserted: int = 0
    completed: int = 0
    active: int = 0
    completed_delay: int = 0  # summed stopped time of vehicles that exited

    def measure(self, active_stopped_time: int = 0) -> dict[str, float]:
        """Total and average system delay, counting vehicles still active."""
        total = self.completed_delay + active_stopped_time
        vehicles = self.completed + self.active
        return {
            "total_system_delay": float(total),
            "average_delay": total / vehicles if vehicles else 0.0,
        }


class Vehicle:
    """One agent on the grid.

    `path` is the flat-cell route currently known to the vehicle: the cells
    of its lane, then (once routed) the junction crossing and the next
    lane.  `i` indexes the current cell, `lane_len` marks where the lane
    ends and the junction begins, `junc_end` where the next lane starts.
    """

    __slots__ = (
        "vid",
        "behaviour",
        "dest",
        "speed",
        "stopped_time",
        "path",
        "i",
        "lane",
        "lane_len",
        "junc_end",
        "next_lane",
        "turn",
        "want_k",
        "terminal",
    )

    def __init__(self, vid: int, behaviour: int, dest: int | None):
        self.vid = vid
        self.behaviour = behaviour
        self.dest = dest
        self.speed = 0
        self.stopped_time = 0
        self.path: list[int] = []
        self.i = 0
        self.lane = None
        self.lane_len = 0
        self.junc_end = 0
        self.next_lane = None
        self.turn = "straight"
        self.want_k = 0
        self.terminal = True


def choose_next_road(
    candidates: list[tuple[Direction, int, str]],
    behaviour: int,
    dest_pos: tuple[int, int] | None,
    node_pos: dict[int, tuple[int, int]],
    rng: Random,
) -> tuple[Direction, int, str]:
    """Pick the outgoing road at an intersection.

    `candidates` holds (direction, far node id, turn kind) with the U-turn
    road already excluded.  Random walkers choose uniformly.  Fixed
    destination drivers take the road whose far node is nearest to their
    destination by Euclidean distance, breaking ties uniformly at random.
    """
    if not candidates:
        raise ValueError("no candidate roads at intersection")
    if behaviour == RANDOM_WALK or dest_pos is None:
        return candidates[rng.randrange(len(candidates))]
    best: list[tuple[Direction, int, str]] = []
    best_d = None
    fr, fc = dest_pos
    for cand in candidates:
        r, c = node_pos[cand[1]]
        d = math.sqrt((fr - r) ** 2 + (fc - c) ** 2)
        if best_d is None or d < best_d - 1e-12:
            best_d = d
            best = [cand]
        elif abs(d - best_d) <= 1e-12:
            best.append(cand)
    if len(best) == 1:
        return best[0]
    return best[rng.randrange(len(best))]
