"""Multi-objective evolutionary engine (nondominated sorting + crowding).

All objectives are minimized.  The engine is generic over the grammar and the
evaluation function; phenotypes that fail to decode receive the configured
penalty vector, and identical phenotypes are evaluated once per run.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .grammar import Genotype, Grammar, decode, random_genotype


class EvolveError(RuntimeError):
    pass


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True if ``a`` is no worse than ``b`` everywhere and better somewhere."""
    if len(a) != len(b):
        raise EvolveError(f"objective vectors differ in length: {len(a)} vs {len(b)}")
    better = False
    for ai, bi in zip(a, b):
        if ai > bi:
            return False
        if ai < bi:
            better = True
    return better


def nondominated_sort(objectives: Sequence[Sequence[float]]) -> List[List[int]]:
    """Partition indices into fronts; front 0 is the nondominated set."""
    n = len(objectives)
    if n == 0:
        return []
    objs = np.asarray(objectives, dtype=float)
    dominated_by: List[List[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=int)
    for i in range(n):
        # vectorized pairwise comparison of i against all j > i
        le = objs[i] <= objs[i + 1:]
        lt = objs[i] < objs[i + 1:]
        ge = objs[i] >= objs[i + 1:]
        gt = objs[i] > objs[i + 1:]
        i_dom = le.all(axis=1) & lt.any(axis=1)
        j_dom = ge.all(axis=1) & gt.any(axis=1)
        for off in np.nonzero(i_dom)[0]:
            j = i + 1 + int(off)
            dominated_by[i].append(j)
            domination_count[j] += 1
        for off in np.nonzero(j_dom)[0]:
            j = i + 1 + int(off)
            dominated_by[j].append(i)
            domination_count[i] += 1
    fronts: List[List[int]] = []
    current = [i for i in range(n) if domination_count[i] == 0]
    while current:
        fronts.append(current)
        nxt: List[int] = []
        for i in current:
            for j in dominated_by[i]:
                domination_count[j] -= 1
                if domination_count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(objectives: Sequence[Sequence[float]]) -> np.ndarray:
    """Crowding distances for one front; boundary points get ``inf``."""
    objs = np.asarray(objectives, dtype=float)
    n = len(objs)
    dist = np.zeros(n)
    if n == 0:
        return dist
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        vals = objs[order, m]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = vals[-1] - vals[0]
        if span > 0:
            dist[order[1:-1]] += (vals[2:] - vals[:-2]) / span
    return dist


@dataclass
class Individual:
    genotype: Genotype
    phenotype: Optional[str]
    objectives: Tuple[float, ...]
    rank: int = -1
    crowding: float = 0.0


@dataclass(frozen=True)
class NsgaConfig:
    pop_size: int
    generations: int
    penalty: Tuple[float, ...]
    crossover_rate: float = 0.9
    mutation_rate: Optional[float] = None  # default 1/genotype_length
    genotype_length: int = 64
    wrap_limit: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 2 or self.pop_size % 2:
            raise EvolveError("pop_size must be an even integer >= 2")
        if self.generations < 0:
            raise EvolveError("generations must be >= 0")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise EvolveError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise EvolveError("mutation_rate must lie in [0, 1]")
        if self.genotype_length < 2:
            raise EvolveError("genotype_length must be >= 2")


def _assign_ranks(population: List[Individual]) -> List[List[int]]:
    fronts = nondominated_sort([ind.objectives for ind in population])
    for rank, front in enumerate(fronts):
        dists = crowding_distance([population[i].objectives for i in front])
        for i, d in zip(front, dists):
            population[i].rank = rank
            population[i].crowding = float(d)
    return fronts


def _tournament(population: List[Individual], rng: np.random.Generator) -> Individual:
    i, j = rng.integers(0, len(population), size=2)
    a, b = population[int(i)], population[int(j)]
    if (a.rank, -a.crowding) <= (b.rank, -b.crowding):
        return a
    return b


def _crossover(a: Genotype, b: Genotype, rng: np.random.Generator):
    point = int(rng.integers(1, len(a.codons)))
    c1 = a.codons[:point] + b.codons[point:]
    c2 = b.codons[:point] + a.codons[point:]
    return (Genotype(c1, wrap_limit=a.wrap_limit),
            Genotype(c2, wrap_limit=a.wrap_limit))


def _mutate(g: Genotype, rate: float, rng: np.random.Generator) -> Genotype:
    mask = rng.random(len(g.codons)) < rate
    fresh = rng.integers(0, 256, size=len(g.codons))
    if not mask.any():
        return g
    codons = tuple(int(f) if hit else c
                   for c, f, hit in zip(g.codons, fresh, mask))
    return Genotype(codons, wrap_limit=g.wrap_limit)


class _Memo:
    """Per-run phenotype -> objectives cache around the user evaluator."""

    def __init__(self, evaluate: Callable[[str], Sequence[float]],
                 penalty: Tuple[float, ...]):
        self._evaluate = evaluate
        self._penalty = penalty
        self._cache: dict = {}
        self.calls = 0

    def __call__(self, phenotype: Optional[str], generation: int) -> Tuple[float, ...]:
        if phenotype is None:
            return self._penalty
        if phenotype in self._cache:
            return self._cache[phenotype]
        try:
            objs = tuple(float(v) for v in self._evaluate(phenotype))
        except Exception as exc:
            raise EvolveError(
                f"evaluation failed at generation {generation} "
                f"for phenotype {phenotype!r}: {exc}") from exc
        if len(objs) != len(self._penalty):
            raise EvolveError(
                f"evaluator returned {len(objs)} objectives, expected "
                f"{len(self._penalty)} (generation {generation}, "
                f"phenotype {phenotype!r})")
        self._cache[phenotype] = objs
        self.calls += 1
        return objs


def nsga2_run(grammar: Grammar,
              evaluate: Callable[[str], Sequence[float]],
              config: NsgaConfig,
              on_generation: Optional[Callable[[int, List[Individual]], None]] = None,
              ) -> List[Individual]:
    """Evolve and return the nondominated front of the final population.

    ``evaluate`` maps a phenotype string to an objective tuple (minimized).
    ``on_generation(gen, population)`` is called after ranking each
    generation, including generation 0 (the initial population).
    """
    rng = np.random.default_rng(config.seed)
    mut_rate = (config.mutation_rate if config.mutation_rate is not None
                else 1.0 / config.genotype_length)
    memo = _Memo(evaluate, config.penalty)

    population: List[Individual] = []
    for _ in range(config.pop_size):
        g = random_genotype(rng, config.genotype_length, config.wrap_limit)
        ph = decode(g, grammar)
        population.append(Individual(g, ph, memo(ph, 0)))
    _assign_ranks(population)
    if on_generation is not None:
        on_generation(0, population)

    for gen in range(1, config.generations + 1):
        offspring: List[Individual] = []
        if config.crossover_rate > 0.0 or mut_rate > 0.0:
            while len(offspring) < config.pop_size:
                p1 = _tournament(population, rng)
                p2 = _tournament(population, rng)
                if rng.random() < config.crossover_rate:
                    g1, g2 = _crossover(p1.genotype, p2.genotype, rng)
                else:
                    g1, g2 = p1.genotype, p2.genotype
                for g in (g1, g2):
                    g = _mutate(g, mut_rate, rng)
                    ph = decode(g, grammar)
                    offspring.append(Individual(g, ph, memo(ph, gen)))
        combined = population + offspring
        fronts = _assign_ranks(combined)
        survivors: List[Individual] = []
        for front in fronts:
            if len(survivors) + len(front) <= config.pop_size:
                survivors.extend(combined[i] for i in front)
            else:
                room = config.pop_size - len(survivors)
                # fill from the split front by descending crowding; index
                # breaks ties so the outcome is deterministic
                ordered = sorted(front, key=lambda i: (-combined[i].crowding, i))
                survivors.extend(combined[i] for i in ordered[:room])
                break
        population = survivors
        _assign_ranks(population)
        if on_generation is not None:
            on_generation(gen, population)

    front = [ind for ind in population if ind.rank == 0]
    seen = set()
    unique: List[Individual] = []
    for ind in front:
        key = (ind.phenotype, ind.objectives)
        if key not in seen:
            seen.add(key)
            unique.append(ind)
    return unique


def write_front_csv(path, population: List[Individual]) -> None:
    """Dump the current rank-0 front as CSV (objective columns + phenotype)."""
    front = [ind for ind in population if ind.rank == 0]
    n_obj = len(front[0].objectives) if front else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"objective_{i + 1}" for i in range(n_obj)] + ["phenotype"])
        for ind in front:
            writer.writerow([f"{v:.10g}" for v in ind.objectives] + [ind.phenotype or ""])
