"""Evolving actuated traffic-signal controllers with epigenetic GP on a
cellular-automaton traffic microsimulator."""

from .controllers import (
    ActivationVector,
    TrafficContext,
    TreeNode,
    controller_to_source,
    evaluate,
    longest_queue_controller,
    parse_controller_source,
)
from .evolution import (
    EpiConfig,
    GPConfig,
    Individual,
    adaptive_factor,
    epi_mutate,
    evaluate_fitness,
    evolve,
    ga_optimize_schedule,
    intersection_stability,
    normalize_adaptive,
    tournament_select,
)
from .harness import ExperimentSpec, run_experiment, window_slice
from .network import CellGrid, Direction, Node, NodeKind, Road, RoadGraph, build_grid, validate_network
from .scenarios import Scenario, builtin_names, builtin_scenario, load_scenario, save_scenario
from .signals import PhasePlan, Signal, SignalState, apply_controller_output, default_plan
from .vehicles import DelayLedger, EntryProfile, entry_probability
from .world import Runtime, World

__version__ = "0.1.0"
