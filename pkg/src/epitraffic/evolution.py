"""Evolution of controllers: GP engine, epigenetic machinery, GA baseline.

Fitness is total system delay (seconds, lower is better), averaged over the
configured number of simulator repetitions.  All randomness flows through
named streams derived from the master seed, so results are reproducible and
independent of evaluation order.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field, replace
from random import Random

from . import controllers as C
from .controllers import ActivationVector, TreeNode, to_tuple, from_tuple
from .signals import PhasePlan, plan_from_axis_durations
from .world import Runtime, World


class EvolutionError(Exception):
    pass


class EmptyMappingError(EvolutionError):
    pass


class ConfigError(EvolutionError):
    pass


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of labels and integers."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class GPConfig:
    population_size: int = 50
    generations: int = 200
    point_mutation_rate: float = 0.05   # per node
    subtree_mutation_rate: float = 0.20  # per tree, when mutation="subtree"
    crossover_rate: float = 0.80
    init_depth: int = 5
    max_depth: int = 7
    tournament_size: int = 7
    elitism: int = 1
    controller_exchange_share: float = 0.10
    new_tree_mutation_rate: float = 0.001
    repetitions_per_eval: int = 1
    mutation: str = "point"  # or "subtree"


@dataclass
class EpiConfig:
    threshold: float = 0.5
    high: float = 0.1
    low: float = -0.1
    interval_cycles: int = 5
    lambda_min: float | None = None
    lambda_max: float | None = None
    guard: str = "as_equation"  # or "as_prose"
    force_lambda_norm: float | None = None

    def __post_init__(self):
        if self.low >= self.high:
            raise ConfigError("epi mutation needs low < high")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("activation threshold must lie in [0, 1]")


@dataclass
class PrimitiveSet:
    functions: list[str]
    const_lo: int
    const_hi: int
    variables: list[str]

    @classmethod
    def from_scenario(cls, scenario) -> "PrimitiveSet":
        gp = scenario.gp
        return cls(list(gp.functions), gp.const_lo, gp.const_hi, list(gp.variables))

    def terminals(self) -> list[TreeNode]:
        out = [C.var(v) for v in self.variables]
        out += [C.const(n) for n in range(self.const_lo, self.const_hi + 1)]
        return out


# minimum levels needed to produce a value of each type
_MIN_DEPTH_INT = 1
_MIN_DEPTH_BOOL = 2  # a comparison over two int terminals

_MIN_DEPTH_OP = {
    "add": 2, "sub": 2, "mul": 2, "pdiv": 2,
    "eq": 2, "gt": 2, "lt": 2,
    "and": 1 + _MIN_DEPTH_BOOL, "or": 1 + _MIN_DEPTH_BOOL, "not": 1 + _MIN_DEPTH_BOOL,
    "if3": 1 + _MIN_DEPTH_BOOL,
}


def _min_depth(kind: str) -> int:
    return _MIN_DEPTH_INT if kind == C.INT else _MIN_DEPTH_BOOL


def random_tree(
    pset: PrimitiveSet, rng: Random, max_depth: int, method: str = "grow", want: str = C.INT
) -> TreeNode:
    """Typed grow/full tree generation within a level budget."""
    if want == C.INT and (
        max_depth <= 1 or (method == "grow" and rng.random() < 0.3)
    ):
        terms = pset.terminals()
        return terms[rng.randrange(len(terms))]
    options = [
        op
        for op in pset.functions
        if C.FUNCTIONS[op][1] == want and _MIN_DEPTH_OP[op] <= max_depth
    ]
    if not options:
        if want == C.INT:
            terms = pset.terminals()
            return terms[rng.randrange(len(terms))]
        raise EvolutionError("cannot generate a boolean within the depth budget")
    op = options[rng.randrange(len(options))]
    args, _ = C.FUNCTIONS[op]
    children = tuple(
        random_tree(pset, rng, max_depth - 1, method, want=a) for a in args
    )
    return TreeNode(op, children=children)


def random_activations(tree: TreeNode, rng: Random, threshold: float = 0.5) -> ActivationVector:
    return ActivationVector([rng.random() for _ in range(tree.n_if3)], threshold)


# ---------------------------------------------------------------------------
# individuals
# ---------------------------------------------------------------------------

@dataclass
class Individual:
    forest: list[tuple[TreeNode, ActivationVector]]
    fitness: float | None = None
    evaluated: bool = False

    def clone(self) -> "Individual":
        return Individual(
            forest=[(tree, acts.copy()) for tree, acts in self.forest],
            fitness=self.fitness,
            evaluated=self.evaluated,
        )

    def key(self):
        return tuple(
            (to_tuple(tree), tuple(acts.rates), acts.threshold)
            for tree, acts in self.forest
        )


def new_individual(pset: PrimitiveSet, cfg: GPConfig, n_slots: int, rng: Random) -> Individual:
    """Ramped half-and-half initialization up to the initial depth limit."""
    forest = []
    for _ in range(n_slots):
        depth = rng.randrange(2, cfg.init_depth + 1) if cfg.init_depth > 2 else cfg.init_depth
        method = "full" if rng.random() < 0.5 else "grow"
        tree = random_tree(pset, rng, depth, method)
        forest.append((tree, random_activations(tree, rng)))
    return Individual(forest=forest)


# ---------------------------------------------------------------------------
# epigenetic machinery
# ---------------------------------------------------------------------------

def intersection_stability(ctx) -> int:
    """Vertical minus horizontal stopped-queue size for one intersection."""
    return ctx.ver_queue - ctx.hor_queue


def controller_stability(samples: list[float]) -> float:
    """Mean stability over the intersections assigned to a controller."""
    if not samples:
        raise EmptyMappingError("controller is mapped to no intersections")
    return sum(samples) / len(samples)


def adaptive_factor(s_now: float, series) -> float:
    """Relative deviation of the current stability from its interval mean.

    Defined as 0 when the interval mean is 0 (a quiet environment carries
    no change signal).
    """
    vals = list(series)
    if not vals:
        return 0.0
    mean = sum(vals) / len(vals)
    if mean == 0.0:
        return 0.0
    return abs(s_now - mean) / abs(mean)


def normalize_adaptive(lam: float, cfg: EpiConfig) -> float:
    """Scale an adaptive factor into [0, 1] using pre-calibrated bounds."""
    lo, hi = cfg.lambda_min, cfg.lambda_max
    if lo is None or hi is None:
        raise ConfigError("lambda bounds are not calibrated")
    if lo >= hi:
        raise ConfigError("lambda_min must be below lambda_max")
    if lam < lo:
        return 0.0
    if lam > hi:
        return 1.0
    return (lam - lo) / (hi - lo)


def epi_mutate(activations: ActivationVector, lambda_norm: float, cfg: EpiConfig, rng: Random) -> None:
    """Perturb activation rates in place.

    Written exactly as the update rule reads: each rate draws R1 and R2 and,
    when the guard fires, moves by (high-low)*R2 + low, clamped to [0, 1].
    With the default guard a rate mutates when R1 exceeds the normalized
    factor; the "as_prose" guard flips the comparison so the factor acts as
    the mutation probability.
    """
    rates = activations.rates
    h, l = cfg.high, cfg.low
    for idx in range(len(rates)):
        r1 = rng.random()
        r2 = rng.random()
        fire = r1 > lambda_norm if cfg.guard == "as_equation" else r1 < lambda_norm
        if fire:
            nxt = rates[idx] + (h - l) * r2 + l
            rates[idx] = 0.0 if nxt < 0.0 else 1.0 if nxt > 1.0 else nxt


class EpigeneticProcess:
    """World hook: samples controller stability each light cycle and, every
    interval boundary, mutates the activation rates through the adaptive
    factor.  In "record" mode it only collects the raw factors (used to
    calibrate the normalization bounds)."""

    def __init__(self, forest, cfg: EpiConfig, rng: Random, record: bool = False):
        self.forest = forest
        self.cfg = cfg
        self.rng = rng
        self.record = record
        self.recorded: list[float] = []
        self.buffers = [deque(maxlen=cfg.interval_cycles) for _ in forest]
        self.cycles = 0

    def on_cycle(self, stabilities: list[float]) -> None:
        self.cycles += 1
        cfg = self.cfg
        boundary = self.cycles % cfg.interval_cycles == 0
        for slot, s_now in enumerate(stabilities):
            buf = self.buffers[slot]
            if len(buf) == cfg.interval_cycles:
                if self.record:
                    self.recorded.append(adaptive_factor(s_now, buf))
                elif boundary:
                    lam = adaptive_factor(s_now, buf)
                    if cfg.force_lambda_norm is not None:
                        lam_norm = cfg.force_lambda_norm
                    else:
                        lam_norm = normalize_adaptive(lam, cfg)
                    epi_mutate(self.forest[slot][1], lam_norm, cfg, self.rng)
            buf.append(s_now)


def calibrate_lambda_bounds(
    runtime: Runtime, epi_cfg: EpiConfig, master_seed: int, window: tuple[int, int] | None = None
) -> EpiConfig:
    """One fixed-time pass over the scenario recording the raw adaptive
    factors; their observed extremes become the normalization bounds."""
    scenario = runtime.scenario
    t0, t1 = window if window else (0, scenario.sim.horizon_seconds)
    hook = EpigeneticProcess(
        [(None, None)] * len(runtime.slots), epi_cfg, Random(0), record=True
    )
    world = World(runtime, derive_seed(master_seed, "calib"), forest=None, epi_hook=hook)
    world.run(t0, t1)
    values = hook.recorded
    lo = min(values) if values else 0.0
    hi = max(values) if values else 1.0
    if hi <= lo:
        hi = lo + 1.0
    return replace(epi_cfg, lambda_min=lo, lambda_max=hi)


# ---------------------------------------------------------------------------
# genetic operators
# ---------------------------------------------------------------------------

def _enumerate_nodes(tree: TreeNode):
    """Pre-order (path, node, level, if3_base) over every node."""
    out = []

    def walk(node: TreeNode, path: tuple, level: int, base: int):
        out.append((path, node, level, base))
        if node.op == "if3":
            offsets = [base + 1]
            offsets.append(offsets[0] + node.children[0].n_if3)
            offsets.append(offsets[1] + node.children[1].n_if3)
        else:
            offsets = []
            acc = base
            for child in node.children:
                offsets.append(acc)
                acc += child.n_if3
        for idx, child in enumerate(node.children):
            walk(child, path + (idx,), level + 1, offsets[idx])

    walk(tree, (), 1, 0)
    return out


def _subtree_at(tree: TreeNode, path: tuple) -> TreeNode:
    node = tree
    for idx in path:
        node = node.children[idx]
    return node


def _replace_at(tree: TreeNode, path: tuple, replacement: TreeNode) -> TreeNode:
    if not path:
        return replacement
    idx = path[0]
    children = list(tree.children)
    children[idx] = _replace_at(children[idx], path[1:], replacement)
    return TreeNode(tree.op, value=tree.value, children=tuple(children))


def _splice_rates(rates: list[float], base: int, old_n: int, new_rates: list[float]) -> list[float]:
    return rates[:base] + list(new_rates) + rates[base + old_n:]


def crossover(
    parent_a: Individual,
    parent_b: Individual,
    cfg: GPConfig,
    rng: Random,
    max_retries: int = 50,
) -> tuple[Individual, Individual]:
    """Controller exchange (10% of crossovers) or typed subtree exchange.

    Crossover points are re-drawn until their types match and both children
    respect the depth limit; when the retry budget runs out the parents are
    returned as clones.  Activation rates travel with their conditionals.
    """
    child_a, child_b = parent_a.clone(), parent_b.clone()
    if len(child_a.forest) != len(child_b.forest):
        raise EvolutionError("parents have different forest shapes")
    slot = rng.randrange(len(child_a.forest))
    if rng.random() < cfg.controller_exchange_share:
        child_a.forest[slot], child_b.forest[slot] = (
            child_b.forest[slot],
            child_a.forest[slot],
        )
        child_a.fitness = child_b.fitness = None
        child_a.evaluated = child_b.evaluated = False
        return child_a, child_b

    tree_a, acts_a = child_a.forest[slot]
    tree_b, acts_b = child_b.forest[slot]
    nodes_a = _enumerate_nodes(tree_a)
    nodes_b = _enumerate_nodes(tree_b)
    for _ in range(max_retries):
        path_a, node_a, level_a, base_a = nodes_a[rng.randrange(len(nodes_a))]
        path_b, node_b, level_b, base_b = nodes_b[rng.randrange(len(nodes_b))]
        if C.return_type(node_a) != C.return_type(node_b):
            continue
        new_a = _replace_at(tree_a, path_a, node_b)
        new_b = _replace_at(tree_b, path_b, node_a)
        if C.depth(new_a) > cfg.max_depth or C.depth(new_b) > cfg.max_depth:
            continue
        rates_a = _splice_rates(
            acts_a.rates, base_a, node_a.n_if3, acts_b.rates[base_b : base_b + node_b.n_if3]
        )
        rates_b = _splice_rates(
            acts_b.rates, base_b, node_b.n_if3, acts_a.rates[base_a : base_a + node_a.n_if3]
        )
        child_a.forest[slot] = (new_a, ActivationVector(rates_a, acts_a.threshold))
        child_b.forest[slot] = (new_b, ActivationVector(rates_b, acts_b.threshold))
        child_a.fitness = child_b.fitness = None
        child_a.evaluated = child_b.evaluated = False
        return child_a, child_b
    return child_a, child_b  # retry budget exhausted: clones


def _point_mutate_tree(tree: TreeNode, pset: PrimitiveSet, rate: float, rng: Random):
    """Per-node replacement with a same-signature primitive."""
    changed = [False]
    terms = pset.terminals()

    def walk(node: TreeNode) -> TreeNode:
        new_children = tuple(walk(c) for c in node.children)
        out = node if not node.children else TreeNode(node.op, value=node.value, children=new_children)
        if new_children != node.children:
            changed[0] = True
        if rng.random() >= rate:
            return out
        if node.op in ("const", "var"):
            pool = [t for t in terms if (t.op, t.value) != (node.op, node.value)]
            if not pool:
                return out
            changed[0] = True
            return pool[rng.randrange(len(pool))]
        sig = C.FUNCTIONS[node.op]
        pool = [
            op for op in pset.functions if op != node.op and C.FUNCTIONS[op] == sig
        ]
        if not pool:
            return out
        changed[0] = True
        return TreeNode(pool[rng.randrange(len(pool))], children=out.children)

    return walk(tree), changed[0]


def mutate(individual: Individual, pset: PrimitiveSet, cfg: GPConfig, rng: Random) -> Individual:
    """New-tree mutation (0.1% per individual), then point or subtree
    mutation per the configured variant.  Unchanged individuals keep their
    cached fitness."""
    out = individual.clone()
    changed = False
    if rng.random() < cfg.new_tree_mutation_rate:
        slot = rng.randrange(len(out.forest))
        tree = random_tree(pset, rng, cfg.init_depth, "grow")
        out.forest[slot] = (tree, random_activations(tree, rng))
        changed = True
    if cfg.mutation == "point":
        for slot, (tree, acts) in enumerate(out.forest):
            new_tree, did = _point_mutate_tree(tree, pset, cfg.point_mutation_rate, rng)
            if did:
                out.forest[slot] = (new_tree, acts)  # conditionals unchanged
                changed = True
    elif cfg.mutation == "subtree":
        for slot, (tree, acts) in enumerate(out.forest):
            if rng.random() >= cfg.subtree_mutation_rate:
                continue
            nodes = [
                (path, node, level, base)
                for path, node, level, base in _enumerate_nodes(tree)
                if cfg.max_depth - level + 1 >= _min_depth(C.return_type(node))
            ]
            path, node, level, base = nodes[rng.randrange(len(nodes))]
            budget = cfg.max_depth - level + 1
            repl = random_tree(pset, rng, budget, "grow", want=C.return_type(node))
            new_tree = _replace_at(tree, path, repl)
            fresh = [rng.random() for _ in range(repl.n_if3)]
            rates = _splice_rates(acts.rates, base, node.n_if3, fresh)
            out.forest[slot] = (new_tree, ActivationVector(rates, acts.threshold))
            changed = True
    else:
        raise ConfigError(f"unknown mutation variant {cfg.mutation!r}")
    if changed:
        out.fitness = None
        out.evaluated = False
    return out


def tournament_select(population: list[Individual], cfg: GPConfig, rng: Random) -> Individual:
    """Best of `tournament_size` individuals drawn with replacement."""
    if len(population) < cfg.tournament_size:
        raise EvolutionError("population smaller than the tournament size")
    best = None
    for _ in range(cfg.tournament_size):
        cand = population[rng.randrange(len(population))]
        if best is None or cand.fitness < best.fitness:
            best = cand
    return best


def validate_individual(ind: Individual, max_depth: int) -> None:
    """Assert type safety, depth limits and activation-vector consistency."""
    for tree, acts in ind.forest:
        C.check_tree(tree, max_depth=max_depth)
        if len(acts.rates) != tree.n_if3:
            raise EvolutionError("activation vector out of step with tree")
        if any(not 0.0 <= r <= 1.0 for r in acts.rates):
            raise EvolutionError("activation rate escaped [0, 1]")


# ---------------------------------------------------------------------------
# fitness evaluation
# ---------------------------------------------------------------------------

def eval_seeds(scenario, master_seed: int, gen: int, idx: int, reps: int) -> list[int]:
    """World seeds for one evaluation.  Scenarios flagged fixed_eval_seed
    reuse the same seeds for every evaluation of the run, which fixes the
    fitness landscape across individuals and generations."""
    if scenario.fixed_eval_seed:
        return [derive_seed(master_seed, "world", 0, 0, rep) for rep in range(reps)]
    return [derive_seed(master_seed, "world", gen, idx, rep) for rep in range(reps)]


def evaluate_fitness(
    individual: Individual,
    runtime: Runtime,
    window: tuple[int, int],
    seeds: list[int],
    epi_cfg: EpiConfig | None = None,
    epi_seeds: list[int] | None = None,
) -> float:
    """Mean total system delay over one run per seed.

    With an EpiConfig the activation rates drift during each run and the
    rates left by the final repetition are written back to the individual.
    """
    total = 0.0
    final_rates = None
    for rep, seed in enumerate(seeds):
        forest = [(tree, acts.copy()) for tree, acts in individual.forest]
        hook = None
        if epi_cfg is not None:
            hook = EpigeneticProcess(forest, epi_cfg, Random(epi_seeds[rep]))
        world = World(runtime, seed, forest=forest, epi_hook=hook)
        measures = world.run(window[0], window[1])
        total += measures["total_system_delay"]
        final_rates = [acts for _, acts in forest]
    if epi_cfg is not None and final_rates is not None:
        individual.forest = [
            (tree, final_rates[slot])
            for slot, (tree, _) in enumerate(individual.forest)
        ]
    fitness = total / len(seeds)
    individual.fitness = fitness
    individual.evaluated = True
    return fitness


# worker-side runtime cache for parallel evaluation
_WORKER_RUNTIMES: dict[str, Runtime] = {}


def _worker_runtime(scenario_ref: str) -> Runtime:
    rt = _WORKER_RUNTIMES.get(scenario_ref)
    if rt is None:
        from .scenarios import builtin_names, builtin_scenario, load_scenario

        if scenario_ref in builtin_names():
            scenario = builtin_scenario(scenario_ref)
        else:
            scenario = load_scenario(scenario_ref)
        rt = Runtime(scenario)
        _WORKER_RUNTIMES[scenario_ref] = rt
    return rt


def _eval_task(args):
    (scenario_ref, genotype, window, seeds, epi_cfg, epi_seeds) = args
    runtime = _worker_runtime(scenario_ref)
    forest = [
        (from_tuple(tree_t), ActivationVector(list(rates), thr))
        for tree_t, rates, thr in genotype
    ]
    ind = Individual(forest=forest)
    fitness = evaluate_fitness(ind, runtime, window, seeds, epi_cfg, epi_seeds)
    rates_out = [list(acts.rates) for _, acts in ind.forest] if epi_cfg else None
    return fitness, rates_out


def evaluate_population(
    population: list[Individual],
    runtime: Runtime,
    window: tuple[int, int],
    master_seed: int,
    gen: int,
    reps: int,
    epi_cfg: EpiConfig | None,
    memo: dict | None,
    pool=None,
    scenario_ref: str | None = None,
) -> None:
    """Fill in fitness for every not-yet-evaluated individual.

    With a process pool, evaluations run as independent (individual) tasks
    whose seeds are fixed up front, so results are identical to the serial
    path regardless of scheduling.
    """
    scenario = runtime.scenario
    pending: list[tuple[int, Individual]] = []
    for idx, ind in enumerate(population):
        if ind.evaluated:
            continue
        if memo is not None:
            hit = memo.get(ind.key())
            if hit is not None:
                ind.fitness = hit
                ind.evaluated = True
                continue
        pending.append((idx, ind))

    def seeds_for(idx: int):
        world_seeds = eval_seeds(scenario, master_seed, gen, idx, reps)
        epi_seeds = (
            [derive_seed(master_seed, "epi", gen, idx, rep) for rep in range(reps)]
            if epi_cfg is not None
            else None
        )
        return world_seeds, epi_seeds

    if pool is not None and scenario_ref is not None and pending:
        tasks = []
        for idx, ind in pending:
            world_seeds, epi_seeds = seeds_for(idx)
            tasks.append((scenario_ref, ind.key(), window, world_seeds, epi_cfg, epi_seeds))
        for (idx, ind), (fitness, rates_out) in zip(pending, pool.map(_eval_task, tasks)):
            ind.fitness = fitness
            ind.evaluated = True
            if rates_out is not None:
                ind.forest = [
                    (tree, ActivationVector(rates_out[slot], acts.threshold))
                    for slot, (tree, acts) in enumerate(ind.forest)
                ]
            if memo is not None:
                memo[ind.key()] = fitness
    else:
        for idx, ind in pending:
            world_seeds, epi_seeds = seeds_for(idx)
            key = ind.key() if memo is not None else None
            evaluate_fitness(ind, runtime, window, world_seeds, epi_cfg, epi_seeds)
            if memo is not None:
                memo[key] = ind.fitness


# ---------------------------------------------------------------------------
# the generation loop
# ---------------------------------------------------------------------------

@dataclass
class GenerationRecord:
    generation: int
    window_start: int
    best_fitness: float
    mean_fitness: float
    wall_time: float = 0.0


def window_for(scenario, generation: int) -> tuple[int, int]:
    if scenario.window is None:
        return 0, scenario.sim.horizon_seconds
    start = generation * scenario.window.step
    end = start + scenario.window.length
    if end > scenario.sim.horizon_seconds:
        raise EvolutionError(
            f"window for generation {generation} ends at {end}, past the horizon"
        )
    return start, end


def evolve(
    runtime: Runtime,
    cfg: GPConfig,
    master_seed: int,
    epi_cfg: EpiConfig | None = None,
    pool=None,
    scenario_ref: str | None = None,
    on_generation=None,
) -> tuple[list[GenerationRecord], Individual]:
    """Run the GP loop and return per-generation records plus the final best.

    Passing an EpiConfig turns on the epigenetic mechanism; its lambda
    bounds are calibrated with one fixed-time pass when not preset.
    """
    import time

    scenario = runtime.scenario
    pset = PrimitiveSet.from_scenario(scenario)
    n_slots = len(runtime.slots)
    rng = Random(derive_seed(master_seed, "evo"))

    if epi_cfg is not None and (
        epi_cfg.lambda_min is None or epi_cfg.lambda_max is None
    ):
        epi_cfg = calibrate_lambda_bounds(
            runtime, epi_cfg, master_seed, (0, scenario.sim.horizon_seconds)
        )

    population = [
        new_individual(pset, cfg, n_slots, rng) for _ in range(cfg.population_size)
    ]
    memo: dict | None = {} if (epi_cfg is None and scenario.fixed_eval_seed) else None

    records: list[GenerationRecord] = []
    prev_window: tuple[int, int] | None = None
    best: Individual | None = None
    for gen in range(cfg.generations):
        t_start = time.perf_counter()
        window = window_for(scenario, gen)
        if window != prev_window:
            for ind in population:
                ind.evaluated = False
            if memo is not None:
                memo.clear()
            prev_window = window
        evaluate_population(
            population,
            runtime,
            window,
            master_seed,
            gen,
            cfg.repetitions_per_eval,
            epi_cfg,
            memo,
            pool,
            scenario_ref,
        )
        best = min(population, key=lambda ind: ind.fitness)
        mean = sum(ind.fitness for ind in population) / len(population)
        records.append(
            GenerationRecord(
                generation=gen,
                window_start=window[0],
                best_fitness=best.fitness,
                mean_fitness=mean,
                wall_time=time.perf_counter() - t_start,
            )
        )
        if on_generation is not None:
            on_generation(records[-1])
        if gen == cfg.generations - 1:
            break
        nxt: list[Individual] = [best.clone() for _ in range(cfg.elitism)]
        while len(nxt) < cfg.population_size:
            pa = tournament_select(population, cfg, rng)
            pb = tournament_select(population, cfg, rng)
            if rng.random() < cfg.crossover_rate:
                ca, cb = crossover(pa, pb, cfg, rng)
            else:
                ca, cb = pa.clone(), pb.clone()
            for child in (ca, cb):
                child = mutate(child, pset, cfg, rng)
                validate_individual(child, cfg.max_depth)
                if len(nxt) < cfg.population_size:
                    nxt.append(child)
        population = nxt
    return records, best


# ---------------------------------------------------------------------------
# GA pre-timed baseline
# ---------------------------------------------------------------------------

@dataclass
class GASchedule:
    genes: list[int]
    fitness: float | None = None
    evaluated: bool = False

    def clone(self) -> "GASchedule":
        return GASchedule(list(self.genes), self.fitness, self.evaluated)


class GALayout:
    """Gene layout: one integer per (signal, phase) over the whole network.

    Each signal contributes its per-axis phase durations (red, green,
    [left], yellow).  Decoding reads the green/left/yellow genes of one
    representative signal per axis and derives red from the opposite axis,
    which keeps every decoded plan free of conflicting greens.
    """

    def __init__(self, runtime: Runtime):
        self.runtime = runtime
        scenario = runtime.scenario
        phase_names = ["red", "green"] + (["left"] if scenario.allow_left_turn else []) + ["yellow"]
        self.phase_names = phase_names
        self.slots: list[tuple[int, str, str]] = []
        for node in scenario.graph.intersections():
            for approach in ("top", "bottom", "left", "right"):
                if approach in runtime.signal_specs[node.id]:
                    for name in phase_names:
                        self.slots.append((node.id, approach, name))

    def __len__(self) -> int:
        return len(self.slots)

    def default_genes(self) -> list[int]:
        genes = []
        plan = self.runtime.default_plan_template
        for node_id, approach, name in self.slots:
            vertical = approach in ("top", "bottom")
            genes.append(plan.axis_durations(vertical)[name])
        return genes

    def decode(self, genes: list[int]) -> dict[int, PhasePlan]:
        per_signal: dict[tuple[int, str], dict[str, int]] = {}
        for (node_id, approach, name), gene in zip(self.slots, genes):
            per_signal.setdefault((node_id, approach), {})[name] = max(0, gene)
        plans: dict[int, PhasePlan] = {}
        default = self.runtime.default_plan_template
        for node in self.runtime.scenario.graph.intersections():
            vert = next(
                (per_signal[(node.id, ap)] for ap in ("top", "bottom") if (node.id, ap) in per_signal),
                default.axis_durations(True),
            )
            horz = next(
                (per_signal[(node.id, ap)] for ap in ("left", "right") if (node.id, ap) in per_signal),
                default.axis_durations(False),
            )
            plans[node.id] = plan_from_axis_durations(vert, horz)
        return plans


def _ga_fitness(
    schedule: GASchedule,
    layout: GALayout,
    runtime: Runtime,
    window: tuple[int, int],
    seeds: list[int],
) -> float:
    plans = layout.decode(schedule.genes)
    total = 0.0
    for seed in seeds:
        world = World(runtime, seed, forest=None, plan_overrides=plans)
        total += world.run(window[0], window[1])["total_system_delay"]
    schedule.fitness = total / len(seeds)
    schedule.evaluated = True
    return schedule.fitness


def ga_optimize_schedule(
    runtime: Runtime,
    cfg: GPConfig,
    master_seed: int,
    on_generation=None,
) -> tuple[list[GenerationRecord], GASchedule]:
    """Integer-vector GA over pre-timed schedules.

    Uniform crossover, per-gene +/-1..5 second perturbation mutation,
    tournament selection and one elite, with the same population and
    generation counts as the GP methods.
    """
    import time

    scenario = runtime.scenario
    layout = GALayout(runtime)
    rng = Random(derive_seed(master_seed, "ga"))
    defaults = layout.default_genes()

    population: list[GASchedule] = [GASchedule(list(defaults))]
    while len(population) < cfg.population_size:
        genes = [max(0, g + rng.randint(-5, 5)) for g in defaults]
        population.append(GASchedule(genes))

    memo: dict | None = {} if scenario.fixed_eval_seed else None
    records: list[GenerationRecord] = []
    prev_window = None
    best: GASchedule | None = None
    for gen in range(cfg.generations):
        t_start = time.perf_counter()
        window = window_for(scenario, gen)
        if window != prev_window:
            for ind in population:
                ind.evaluated = False
            if memo is not None:
                memo.clear()
            prev_window = window
        for idx, ind in enumerate(population):
            if ind.evaluated:
                continue
            key = tuple(ind.genes) if memo is not None else None
            if memo is not None and key in memo:
                ind.fitness = memo[key]
                ind.evaluated = True
                continue
            seeds = eval_seeds(scenario, master_seed, gen, idx, cfg.repetitions_per_eval)
            _ga_fitness(ind, layout, runtime, window, seeds)
            if memo is not None:
                memo[key] = ind.fitness
        best = min(population, key=lambda s: s.fitness)
        mean = sum(s.fitness for s in population) / len(population)
        records.append(
            GenerationRecord(
                generation=gen,
                window_start=window[0],
                best_fitness=best.fitness,
                mean_fitness=mean,
                wall_time=time.perf_counter() - t_start,
            )
        )
        if on_generation is not None:
            on_generation(records[-1])
        if gen == cfg.generations - 1:
            break
        nxt = [best.clone() for _ in range(cfg.elitism)]
        while len(nxt) < cfg.population_size:
            pa = tournament_select(population, cfg, rng)
            pb = tournament_select(population, cfg, rng)
            ga_, gb_ = pa.clone(), pb.clone()
            if rng.random() < cfg.crossover_rate:
                for j in range(len(ga_.genes)):
                    if rng.random() < 0.5:
                        ga_.genes[j], gb_.genes[j] = gb_.genes[j], ga_.genes[j]
                ga_.evaluated = gb_.evaluated = False
                ga_.fitness = gb_.fitness = None
            for child in (ga_, gb_):
                mutated = False
                for j in range(len(child.genes)):
                    if rng.random() < cfg.point_mutation_rate:
                        delta = rng.randrange(1, 6)
                        if rng.random() < 0.5:
                            delta = -delta
                        child.genes[j] = max(0, child.genes[j] + delta)
                        mutated = True
                if mutated:
                    child.evaluated = False
                    child.fitness = None
                if len(nxt) < cfg.population_size:
                    nxt.append(child)
        population = nxt
    return records, best
