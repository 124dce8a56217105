"""Experiment orchestration: methods, the movable window, CSV emission.

`run_experiment` executes one method on one scenario and writes a CSV with
one row per generation (static methods get one row per window position, or
a single row when the scenario has no window).  Re-running the same spec
with the same master seed reproduces the CSV byte for byte except for the
wall_time column.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .controllers import controller_to_source, longest_queue_controller
from .evolution import (
    EpiConfig,
    GenerationRecord,
    GPConfig,
    derive_seed,
    eval_seeds,
    evolve,
    ga_optimize_schedule,
    window_for,
)
from .scenarios import (
    Scenario,
    UnknownScenarioError,
    builtin_names,
    builtin_scenario,
    load_scenario,
)
from .world import Runtime, World

METHODS = ("fixed", "lq", "ga", "gp", "epigp")

CSV_COLUMNS = (
    "method",
    "generation",
    "window_start",
    "best_fitness",
    "mean_fitness",
    "seed",
    "wall_time",
)


class HarnessError(Exception):
    pass


class OutOfRangeError(HarnessError):
    pass


def window_slice(scenario: Scenario, generation: int) -> tuple[int, int]:
    """The [start, end) interval evaluated by a given generation."""
    if scenario.window is None:
        raise HarnessError("scenario has no evaluation window")
    start = generation * scenario.window.step
    end = start + scenario.window.length
    if end > scenario.sim.horizon_seconds:
        raise OutOfRangeError(
            f"window [{start}, {end}) exceeds the {scenario.sim.horizon_seconds}s horizon"
        )
    return start, end


def window_count(scenario: Scenario) -> int:
    if scenario.window is None:
        return 1
    return (scenario.sim.horizon_seconds - scenario.window.length) // scenario.window.step + 1


@dataclass
class ExperimentSpec:
    scenario: str  # built-in name or path to a scenario JSON file
    method: str
    out: str
    master_seed: int = 1
    generations: int | None = None
    population: int | None = None
    repetitions: int | None = None
    epi_guard: str = "as_equation"
    mutation: str | None = None  # None -> scenario default
    workers: int = 1
    on_generation: object = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise HarnessError(f"unknown method {self.method!r}; pick one of {METHODS}")


@dataclass
class RunRecord:
    method: str
    generation: int
    window_start: int
    best_fitness: float
    mean_fitness: float
    seed: int
    wall_time: float

    def row(self) -> list:
        return [
            self.method,
            self.generation,
            self.window_start,
            self.best_fitness,
            self.mean_fitness,
            self.seed,
            round(self.wall_time, 6),
        ]


def resolve_scenario(ref: str) -> Scenario:
    if ref in builtin_names():
        return builtin_scenario(ref)
    if not os.path.exists(ref):
        raise UnknownScenarioError(
            f"{ref!r} is neither a built-in scenario nor an existing file"
        )
    return load_scenario(ref)


def _gp_config(spec: ExperimentSpec, scenario: Scenario) -> GPConfig:
    cfg = GPConfig()
    if spec.generations is not None:
        cfg.generations = spec.generations
    if spec.population is not None:
        cfg.population_size = spec.population
    cfg.repetitions_per_eval = (
        spec.repetitions if spec.repetitions is not None else scenario.gp.repetitions
    )
    cfg.mutation = spec.mutation if spec.mutation is not None else scenario.gp.mutation
    if cfg.tournament_size > cfg.population_size:
        cfg.tournament_size = cfg.population_size
    return cfg


def _static_records(
    spec: ExperimentSpec, scenario: Scenario, runtime: Runtime, forest
) -> list[GenerationRecord]:
    """Evaluate a non-evolving method over every window position."""
    reps = spec.repetitions if spec.repetitions is not None else scenario.gp.repetitions
    if scenario.window is None:
        count = 1
    else:
        count = spec.generations if spec.generations is not None else window_count(scenario)
        if count > window_count(scenario):
            raise OutOfRangeError(
                f"{count} windows requested but only {window_count(scenario)} fit the horizon"
            )
    records = []
    for gen in range(count):
        t_start = time.perf_counter()
        window = window_for(scenario, gen)
        seeds = eval_seeds(scenario, spec.master_seed, gen, 0, reps)
        total = 0.0
        for seed in seeds:
            world = World(runtime, seed, forest=forest)
            total += world.run(window[0], window[1])["total_system_delay"]
        fitness = total / len(seeds)
        records.append(
            GenerationRecord(
                generation=gen,
                window_start=window[0],
                best_fitness=fitness,
                mean_fitness=fitness,
                wall_time=time.perf_counter() - t_start,
            )
        )
        if spec.on_generation is not None:
            spec.on_generation(records[-1])
    return records


def _export_controllers(path: str, forest) -> None:
    parts = [
        controller_to_source(tree, acts, name=f"Controller{slot}")
        for slot, (tree, acts) in enumerate(forest)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(parts))


def run_experiment(spec: ExperimentSpec) -> str:
    """Execute the requested method and write the results CSV.

    Returns the CSV path.  Tree-based methods also export the best
    individual's controllers next to it; the GA exports its best schedule.
    """
    scenario = resolve_scenario(spec.scenario)
    runtime = Runtime(scenario)
    cfg = _gp_config(spec, scenario)

    pool = None
    export: tuple[str, object] | None = None
    try:
        if spec.workers > 1 and spec.method in ("gp", "epigp"):
            pool = ProcessPoolExecutor(max_workers=spec.workers)

        if spec.method == "fixed":
            records = _static_records(spec, scenario, runtime, forest=None)
        elif spec.method == "lq":
            forest = [longest_queue_controller() for _ in runtime.slots]
            records = _static_records(spec, scenario, runtime, forest=forest)
            export = ("controllers", forest)
        elif spec.method == "ga":
            records, best = ga_optimize_schedule(
                runtime, cfg, spec.master_seed, on_generation=spec.on_generation
            )
            export = ("schedule", best)
        else:
            epi_cfg = EpiConfig(guard=spec.epi_guard) if spec.method == "epigp" else None
            records, best = evolve(
                runtime,
                cfg,
                spec.master_seed,
                epi_cfg=epi_cfg,
                pool=pool,
                scenario_ref=spec.scenario,
                on_generation=spec.on_generation,
            )
            export = ("controllers", best.forest)
    finally:
        if pool is not None:
            pool.shutdown()

    rows = [
        RunRecord(
            method=spec.method,
            generation=rec.generation,
            window_start=rec.window_start,
            best_fitness=rec.best_fitness,
            mean_fitness=rec.mean_fitness,
            seed=spec.master_seed,
            wall_time=rec.wall_time,
        )
        for rec in records
    ]
    out_dir = os.path.dirname(os.path.abspath(spec.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(spec.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in rows:
            writer.writerow(rec.row())

    if export is not None:
        kind, payload = export
        if kind == "controllers":
            _export_controllers(spec.out + ".controllers.txt", payload)
        else:
            layout_lines = [f"genes = {payload.genes!r}", f"fitness = {payload.fitness!r}"]
            with open(spec.out + ".schedule.txt", "w", encoding="utf-8") as fh:
                fh.write("\n".join(layout_lines) + "\n")
    return spec.out
