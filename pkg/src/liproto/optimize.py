"""Evolutionary optimization of local VN degree distributions.

The cost of a candidate distribution is the decoding threshold of the
protograph with that distribution installed on one edge type, everything
else frozen.  Candidates live in the polytope

    { L >= 0,  sum L = 1,  sum k L(k) = d_C }

and are represented by unconstrained non-negative mass vectors over
Omega that a repair step projects back into the polytope, so crossover
and mutation never have to know about the constraints.

``optimize_single_edge`` runs a seeded genetic search on one edge;
``optimize_multi_edge`` sweeps all edges element-wise, keeping a new
distribution only when it strictly improves the threshold, until a full
sweep brings no acceptance.  Both are deterministic given the budget's
seed, and the multi-edge sweep appends one JSON line per finished edge
so an interrupted run resumes where it stopped.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .capacity import capacity_ebn0_db
from .errors import InfeasibleError, SchemaError
from .exit import find_threshold
from .protograph import (
    DEFAULT_D_MAX,
    IrregularProtograph,
    LocalDegreeDistribution,
    design_rate,
    validate,
)

_MEAN_TOL = 1e-12


@dataclass(frozen=True)
class OptimizationBudget:
    """Search budget and reproducibility knobs for one edge optimization."""

    population_size: int = 40
    generations: int = 60
    max_evaluations: int | None = None
    rng_seed: int = 0
    threshold_precision_db: float = 0.01
    exit_max_iter: int = 500
    conv_tol: float = 1e-5
    stall_generations: int = 12
    mutation_sigma: float = 0.05
    insertion_prob: float = 0.25

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.generations < 1:
            raise ValueError("population_size >= 2 and generations >= 1 required")
        if self.threshold_precision_db <= 0 or self.exit_max_iter < 1:
            raise ValueError("threshold precision and exit iterations must be positive")
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive when set")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "max_evaluations": self.max_evaluations,
            "rng_seed": self.rng_seed,
            "threshold_precision_db": self.threshold_precision_db,
            "exit_max_iter": self.exit_max_iter,
            "conv_tol": self.conv_tol,
            "stall_generations": self.stall_generations,
            "mutation_sigma": self.mutation_sigma,
            "insertion_prob": self.insertion_prob,
        }


@dataclass
class OptimizationRecord:
    """Outcome of optimizing one edge's distribution."""

    edge: tuple[int, int]
    initial_threshold_db: float
    best_threshold_db: float
    best_dist: LocalDegreeDistribution
    generations_run: int
    evaluations: int
    cache_hits: int
    seed: int
    budget: OptimizationBudget
    history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "edge": [self.edge[0] + 1, self.edge[1] + 1],
            "initial_threshold_db": self.initial_threshold_db,
            "best_threshold_db": self.best_threshold_db,
            "improvement_db": self.initial_threshold_db - self.best_threshold_db,
            "best_dist": {str(k): v for k, v in sorted(self.best_dist.itemized().items())},
            "generations_run": self.generations_run,
            "evaluations": self.evaluations,
            "cache_hits": self.cache_hits,
            "seed": self.seed,
            "budget": self.budget.to_dict(),
            "history": self.history,
        }


# ---------------------------------------------------------------------------
# feasible-set sampling and repair


def repair(
    raw_masses: Iterable[float] | np.ndarray,
    target_degree: int,
    d_max: int = DEFAULT_D_MAX,
) -> LocalDegreeDistribution:
    """Project raw non-negative masses onto the feasible polytope.

    Normalizes to unit sum, then restores the mean by transferring mass
    between the lowest and highest support degrees (the direction that
    moves the mean fastest without breaking non-negativity).  When a
    donor coordinate empties the next support extreme takes over; when
    the support cannot reach the target mean at all, the receiving end
    is extended to the boundary of Omega.  Already-feasible input is
    returned unchanged up to float repair noise.
    """
    target_degree = int(target_degree)
    if not 1 <= target_degree <= d_max:
        raise InfeasibleError(f"target degree {target_degree} outside Omega = 1..{d_max}")
    masses = np.array(list(raw_masses), dtype=float)
    if masses.ndim != 1 or masses.size == 0 or masses.size > d_max:
        raise ValueError(f"raw masses must be a 1-D vector of at most d_max={d_max} entries")
    if masses.size < d_max:
        masses = np.concatenate([masses, np.zeros(d_max - masses.size)])
    if np.any(masses < 0) or not np.all(np.isfinite(masses)):
        raise InfeasibleError("raw masses must be finite and non-negative")
    total = masses.sum()
    if total <= 0:
        raise InfeasibleError("raw masses must not be all zero")
    masses = masses / total

    degrees = np.arange(1, d_max + 1)
    mean = float(degrees @ masses)
    guard = 0
    while abs(mean - target_degree) > _MEAN_TOL:
        guard += 1
        if guard > 4 * d_max + 16:
            raise InfeasibleError("mean repair did not terminate")
        sup = np.nonzero(masses > 0)[0]
        lo, hi = int(sup[0]), int(sup[-1])
        if mean < target_degree:
            if hi <= lo:
                hi = d_max - 1
            shift = min(masses[lo], (target_degree - mean) / (hi - lo))
            masses[lo] -= shift
            masses[hi] += shift
            mean += shift * (hi - lo)
        else:
            if hi <= lo:
                lo = 0
            shift = min(masses[hi], (mean - target_degree) / (hi - lo))
            masses[hi] -= shift
            masses[lo] += shift
            mean -= shift * (hi - lo)
    return LocalDegreeDistribution(target_degree=target_degree, masses=masses)


def sample_feasible(
    target_degree: int, d_max: int = DEFAULT_D_MAX, rng: np.random.Generator | None = None
) -> LocalDegreeDistribution:
    """Random feasible distribution: Dirichlet raw masses pushed through repair."""
    target_degree = int(target_degree)
    if not 1 <= target_degree <= d_max:
        raise InfeasibleError(f"target degree {target_degree} outside Omega = 1..{d_max}")
    if target_degree in (1, d_max):
        # Vertices of the polytope: the mean constraint forces a point mass.
        return LocalDegreeDistribution.point_mass(target_degree, d_max)
    rng = np.random.default_rng() if rng is None else rng
    raw = rng.dirichlet(np.full(d_max, 0.5))
    return repair(raw, target_degree, d_max)


def two_point(target_degree: int, other: int, d_max: int = DEFAULT_D_MAX) -> LocalDegreeDistribution | None:
    """Two-degree distribution with the target mean, if one exists."""
    d, k = int(target_degree), int(other)
    if not (1 <= k <= d_max) or k == d:
        return None
    if k > d:
        lo, hi = 1, k
    else:
        lo, hi = k, d_max
    if not lo <= d <= hi or lo == hi:
        return None
    w_hi = (d - lo) / (hi - lo)
    masses = np.zeros(d_max)
    masses[lo - 1] = 1.0 - w_hi
    masses[hi - 1] = w_hi
    if masses[lo - 1] < 0 or w_hi < 0:
        return None
    return LocalDegreeDistribution(target_degree=d, masses=masses)


# ---------------------------------------------------------------------------
# fitness


def _genome_key(masses: np.ndarray) -> tuple[float, ...]:
    # Cache key and deterministic tie-breaker: masses rounded to 1e-6.
    return tuple(float(x) for x in np.round(masses, 6))


def with_distribution(
    proto: IrregularProtograph, edge: tuple[int, int], dist: LocalDegreeDistribution
) -> IrregularProtograph:
    dists = dict(proto.dists)
    dists[edge] = dist
    return IrregularProtograph(base=proto.base, dists=dists, name=proto.name)


def _threshold_of(
    proto: IrregularProtograph,
    budget: OptimizationBudget,
    bracket_hi_db: float,
) -> float:
    rate = float(design_rate(proto))
    lo = capacity_ebn0_db(rate) - 0.3
    try:
        res = find_threshold(
            proto,
            bracket_lo_db=lo,
            bracket_hi_db=bracket_hi_db,
            precision_db=budget.threshold_precision_db,
            max_iter=budget.exit_max_iter,
            conv_tol=budget.conv_tol,
            kind="auto",
        )
    except InfeasibleError:
        return math.inf
    return res.threshold_db


def _fitness_task(args: tuple) -> float:
    proto, edge, masses, budget, bracket_hi = args
    dist = repair(masses, int(proto.base.entries[edge]), len(masses))
    return _threshold_of(with_distribution(proto, edge, dist), budget, bracket_hi)


class _Evaluator:
    """Caching (and optionally process-parallel) threshold evaluator."""

    def __init__(
        self,
        proto: IrregularProtograph,
        edge: tuple[int, int],
        budget: OptimizationBudget,
        bracket_hi_db: float,
        threads: int = 1,
    ) -> None:
        self.proto = proto
        self.edge = edge
        self.budget = budget
        self.bracket_hi_db = bracket_hi_db
        self.threads = max(1, int(threads))
        self.cache: dict[tuple[float, ...], float] = {}
        self.evaluations = 0
        self.cache_hits = 0

    def __call__(self, genomes: Sequence[np.ndarray]) -> list[float]:
        keys = [_genome_key(g) for g in genomes]
        missing: list[tuple[tuple[float, ...], np.ndarray]] = []
        seen: set[tuple[float, ...]] = set()
        for key, g in zip(keys, genomes):
            if key in self.cache:
                self.cache_hits += 1
            elif key not in seen:
                seen.add(key)
                missing.append((key, g))
        tasks = [
            (self.proto, self.edge, np.asarray(g, dtype=float), self.budget, self.bracket_hi_db)
            for _, g in missing
        ]
        if tasks:
            if self.threads > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=self.threads) as pool:
                    results = list(pool.map(_fitness_task, tasks))
            else:
                results = [_fitness_task(t) for t in tasks]
            for (key, _), thr in zip(missing, results):
                self.cache[key] = thr
            self.evaluations += len(tasks)
        return [self.cache[k] for k in keys]


# ---------------------------------------------------------------------------
# genetic search


def optimize_single_edge(
    proto: IrregularProtograph,
    edge: tuple[int, int],
    budget: OptimizationBudget | None = None,
    threads: int = 1,
    _seed_extra: tuple[int, ...] = (),
) -> OptimizationRecord:
    """Minimize the decoding threshold over one edge's degree distribution.

    Generation zero always contains the incumbent distribution and the
    regular point mass (elitism then guarantees the result is never
    worse than the input), plus every feasible two-degree vertex-like
    candidate and random polytope samples.  Deterministic given the
    budget seed.
    """
    budget = OptimizationBudget() if budget is None else budget
    validate(proto).require()
    i, j = int(edge[0]), int(edge[1])
    d_c = int(proto.base.entries[i, j])
    if d_c < 1:
        raise InfeasibleError(f"edge ({i + 1},{j + 1}) has no edge type (entry 0)")
    incumbent = proto.dists[(i, j)]
    d_max = incumbent.d_max

    rate = float(design_rate(proto))
    bracket_hi = capacity_ebn0_db(rate) + 2.0
    evaluator = _Evaluator(proto, (i, j), budget, bracket_hi, threads=threads)
    initial_thr = evaluator([incumbent.masses])[0]

    if d_c in (1, d_max):
        # The mean constraint pins the whole polytope to one point.
        return OptimizationRecord(
            edge=(i, j),
            initial_threshold_db=initial_thr,
            best_threshold_db=initial_thr,
            best_dist=incumbent,
            generations_run=0,
            evaluations=evaluator.evaluations,
            cache_hits=evaluator.cache_hits,
            seed=budget.rng_seed,
            budget=budget,
            history=[],
        )

    rng = np.random.default_rng(np.random.SeedSequence([budget.rng_seed, i, j, *_seed_extra]))

    genomes: list[np.ndarray] = [np.array(incumbent.masses, dtype=float)]
    reg = LocalDegreeDistribution.point_mass(d_c, d_max)
    genomes.append(np.array(reg.masses))
    for k in range(1, d_max + 1):
        tp = two_point(d_c, k, d_max)
        if tp is not None:
            genomes.append(np.array(tp.masses))
    while len(genomes) < budget.population_size:
        genomes.append(np.array(sample_feasible(d_c, d_max, rng).masses))
    genomes = genomes[: max(budget.population_size, 2)]

    def ranked(pop: list[np.ndarray]) -> list[tuple[float, tuple[float, ...], np.ndarray]]:
        thrs = evaluator(pop)
        order = sorted(zip(thrs, (_genome_key(g) for g in pop), pop), key=lambda t: (t[0], t[1]))
        return order

    population = ranked(genomes)
    best_thr, _, best_genome = population[0]
    history = [{"generation": 0, "best_threshold_db": best_thr, "evaluations": evaluator.evaluations}]
    stall = 0
    gens_run = 0

    for gen in range(1, budget.generations + 1):
        if budget.max_evaluations is not None and evaluator.evaluations >= budget.max_evaluations:
            break
        gens_run = gen
        elites = [np.array(g) for _, _, g in population[:2]]
        children: list[np.ndarray] = []
        pool_size = len(population)

        def tournament() -> np.ndarray:
            picks = rng.integers(0, pool_size, size=3)
            best = min(picks, key=lambda idx: (population[idx][0], population[idx][1]))
            return population[best][2]

        while len(children) < budget.population_size - len(elites):
            pa, pb = tournament(), tournament()
            blend = rng.uniform(size=d_max)
            child = blend * pa + (1.0 - blend) * pb
            child = child + rng.normal(0.0, budget.mutation_sigma, size=d_max)
            np.clip(child, 0.0, None, out=child)
            if rng.uniform() < budget.insertion_prob:
                inactive = np.nonzero(child <= 1e-9)[0]
                if len(inactive):
                    slot = int(rng.choice(inactive))
                    child[slot] = rng.uniform(0.01, 0.08)
            if child.sum() <= 0:
                child = np.array(sample_feasible(d_c, d_max, rng).masses)
            children.append(child)

        population = ranked(elites + children)
        thr, _, genome = population[0]
        if thr < best_thr - 1e-12:
            best_thr, best_genome = thr, np.array(genome)
            stall = 0
        else:
            stall += 1
        history.append(
            {"generation": gen, "best_threshold_db": best_thr, "evaluations": evaluator.evaluations}
        )
        if stall >= budget.stall_generations:
            break

    best_dist = repair(best_genome, d_c, d_max)
    if best_thr > initial_thr:  # elitism makes this impossible; keep the guarantee explicit
        best_thr, best_dist = initial_thr, incumbent
    return OptimizationRecord(
        edge=(i, j),
        initial_threshold_db=initial_thr,
        best_threshold_db=best_thr,
        best_dist=best_dist,
        generations_run=gens_run,
        evaluations=evaluator.evaluations,
        cache_hits=evaluator.cache_hits,
        seed=budget.rng_seed,
        budget=budget,
        history=history,
    )


# ---------------------------------------------------------------------------
# element-wise multi-edge sweep


def _log_line(record: OptimizationRecord, sweep: int, accepted: bool, current_thr: float) -> dict:
    doc = record.to_dict()
    doc.pop("history", None)
    doc.update({"sweep": sweep, "accepted": accepted, "current_threshold_db": current_thr})
    return doc


def _read_log(path: Path) -> list[dict]:
    entries = []
    if path.exists():
        for line_no, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: bad JSON line: {exc}") from exc
    return entries


def optimize_multi_edge(
    proto: IrregularProtograph,
    budget: OptimizationBudget | None = None,
    edge_order: Sequence[tuple[int, int]] | None = None,
    log_path: str | Path | None = None,
    threads: int = 1,
    max_sweeps: int = 8,
) -> tuple[IrregularProtograph, list[OptimizationRecord]]:
    """Element-wise coordinate descent over the protograph's edge types.

    Optimizes one edge at a time with the rest frozen, accepts the new
    distribution only when it beats the current threshold by more than
    the budget's threshold precision, and repeats the sweep until one
    full pass accepts nothing.  With ``log_path`` every finished edge
    appends a JSON line, and a rerun with the same arguments resumes
    after the last logged edge.
    """
    budget = OptimizationBudget() if budget is None else budget
    validate(proto).require()
    if edge_order is None:
        edge_order = proto.base.nonzero_indices()  # row-major
    edge_order = [(int(i), int(j)) for i, j in edge_order]
    if not edge_order:
        raise InfeasibleError("no nonzero edges to optimize")

    log_file = Path(log_path) if log_path is not None else None
    done: dict[tuple[int, int, int], dict] = {}
    if log_file is not None:
        for entry in _read_log(log_file):
            i, j = entry["edge"]
            done[(int(entry["sweep"]), i - 1, j - 1)] = entry

    current = proto
    records: list[OptimizationRecord] = []
    current_thr: float | None = None

    for sweep in range(max_sweeps):
        accepted_this_sweep = False
        for i, j in edge_order:
            key = (sweep, i, j)
            if key in done:
                entry = done[key]
                if entry["accepted"]:
                    dist = LocalDegreeDistribution.from_mapping(
                        {int(k): float(v) for k, v in entry["best_dist"].items()},
                        target_degree=int(current.base.entries[i, j]),
                        d_max=current.dists[(i, j)].d_max,
                    )
                    current = with_distribution(current, (i, j), dist)
                    accepted_this_sweep = True
                current_thr = float(entry["current_threshold_db"])
                continue

            record = optimize_single_edge(
                current, (i, j), budget, threads=threads, _seed_extra=(sweep,)
            )
            if current_thr is None:
                current_thr = record.initial_threshold_db
            accepted = record.best_threshold_db < current_thr - budget.threshold_precision_db
            if accepted:
                current = with_distribution(current, (i, j), record.best_dist)
                current_thr = record.best_threshold_db
                accepted_this_sweep = True
            records.append(record)
            if log_file is not None:
                with log_file.open("a") as fh:
                    fh.write(json.dumps(_log_line(record, sweep, accepted, current_thr),
                                        sort_keys=True) + "\n")
        if not accepted_this_sweep:
            break
    return current, records
