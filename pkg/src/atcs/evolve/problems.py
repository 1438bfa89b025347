"""Objective functions and phenotype handling for the two search problems.

Problem 1 searches signal models per node location: a cluster count plus a
boolean mask over the 30 coarse features.  Problem 2 fixes one signal model
and searches a compression-ratio assignment for its clusters.  Both are
minimization problems for the evolutionary engine.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..clustering import CS_GRID, K_MAX, K_MIN, ClusteringError, davies_bouldin, kmeans_fit
from ..features import FeatureSelection, N_FEATURES
from ..seeds import subseed
from .grammar import Grammar, load_grammar, parse_bnf
from .nsga2 import EvolveError, Individual

# heavy penalties sit beyond the worst attainable legal value of each
# objective (30 features / empirical DB spread / 1/k at k=2)
P1_PENALTY = (31.0, 10.0, 1.0)
P2_PENALTY = (1.0, 1.0)


@dataclass(frozen=True)
class PhenotypeP1:
    k: int
    mask: Tuple[bool, ...]

    def selection(self) -> Optional[FeatureSelection]:
        if not any(self.mask):
            return None
        return FeatureSelection(self.mask)


@dataclass(frozen=True)
class PhenotypeP2:
    crs: Tuple[int, ...]


def parse_phenotype_p1(phenotype: str) -> Optional[PhenotypeP1]:
    """Parse ``[k,TRUE,FALSE,...]`` (30 booleans); ``None`` if malformed."""
    s = phenotype.strip()
    if not (s.startswith("[") and s.endswith("]")):
        return None
    tokens = s[1:-1].split(",")
    if len(tokens) != 1 + N_FEATURES:
        return None
    try:
        k = int(tokens[0])
    except ValueError:
        return None
    if not K_MIN <= k <= K_MAX:
        return None
    mask = []
    for tok in tokens[1:]:
        if tok == "TRUE":
            mask.append(True)
        elif tok == "FALSE":
            mask.append(False)
        else:
            return None
    return PhenotypeP1(k=k, mask=tuple(mask))


def parse_phenotype_p2(phenotype: str, k: Optional[int] = None) -> Optional[PhenotypeP2]:
    """Parse ``[cr,cr,...]`` with every ratio on the admissible grid."""
    s = phenotype.strip()
    if not (s.startswith("[") and s.endswith("]")):
        return None
    tokens = s[1:-1].split(",")
    if k is not None and len(tokens) != k:
        return None
    crs = []
    for tok in tokens:
        try:
            cr = int(tok)
        except ValueError:
            return None
        if cr not in CS_GRID:
            return None
        crs.append(cr)
    return PhenotypeP2(crs=tuple(crs))


def p1_grammar() -> Grammar:
    return load_grammar("p1")


def p2_grammar(k: int) -> Grammar:
    """Grammar producing one grid compression ratio per cluster."""
    if not K_MIN <= k <= K_MAX:
        raise EvolveError(f"cluster count {k} outside [{K_MIN}, {K_MAX}]")
    slots = " , ".join("<cr>" for _ in range(k))
    levels = " | ".join(str(c) for c in CS_GRID)
    return parse_bnf(f"<assignment> ::= [ {slots} ]\n<cr> ::= {levels}\n")


def objectives_p1(phenotype: str, features: np.ndarray, seed: int,
                  max_iter: int = 100) -> Tuple[float, float, float]:
    """(selected feature count, cluster-separation index, 1/k); minimized.

    Malformed phenotypes, empty masks, and unclusterable settings all earn
    the penalty vector.
    """
    parsed = parse_phenotype_p1(phenotype)
    if parsed is None:
        return P1_PENALTY
    sel = parsed.selection()
    if sel is None:
        return P1_PENALTY
    X = np.asarray(features, dtype=float)[:, sel.indices]
    mask_key = "".join("1" if b else "0" for b in parsed.mask)
    try:
        model = kmeans_fit(X, parsed.k, seed=subseed(seed, "kmeans", parsed.k, mask_key),
                           max_iter=max_iter)
        db = davies_bouldin(model, X)
    except ClusteringError:
        return P1_PENALTY
    return (float(len(sel)), float(db), 1.0 / parsed.k)


def fit_phenotype(phenotype: str, features: np.ndarray, seed: int,
                  max_iter: int = 100, location=None):
    """Refit the cluster model a P1 phenotype describes.

    Uses the same derived seed as :func:`objectives_p1`, so the returned
    model is exactly the one the front's objective values were scored on.
    """
    parsed = parse_phenotype_p1(phenotype)
    if parsed is None:
        raise EvolveError(f"not a valid model phenotype: {phenotype!r}")
    sel = parsed.selection()
    if sel is None:
        raise EvolveError(f"phenotype selects no features: {phenotype!r}")
    X = np.asarray(features, dtype=float)[:, sel.indices]
    mask_key = "".join("1" if b else "0" for b in parsed.mask)
    return kmeans_fit(X, parsed.k,
                      seed=subseed(seed, "kmeans", parsed.k, mask_key),
                      max_iter=max_iter, feature_selection=sel,
                      location=location)


@dataclass(frozen=True)
class P2Context:
    """Everything objective evaluation needs about one signal model.

    ``labels`` assigns every training segment to a cluster; ``correct`` says,
    per segment and grid ratio, how often recognition from the reconstructed
    segment matched the true activity (a rate in [0, 1]; 0/1 for a single
    sensing-pattern draw).
    """

    labels: np.ndarray           # (N,) cluster id per accuracy-table segment
    counts: np.ndarray           # (k,) cr-averaging weights (training members)
    correct: np.ndarray          # (N, len(CS_GRID)) rates in [0, 1]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        counts = np.asarray(self.counts, dtype=int)
        correct = np.asarray(self.correct, dtype=float)
        if correct.shape != (len(labels), len(CS_GRID)):
            raise EvolveError(
                f"correctness table shape {correct.shape} does not match "
                f"{len(labels)} segments x {len(CS_GRID)} ratios")
        if correct.size and (correct.min() < 0.0 or correct.max() > 1.0):
            raise EvolveError("correctness rates must lie in [0, 1]")
        if len(labels) == 0:
            raise EvolveError("empty training assignment")
        if labels.min() < 0 or labels.max() >= len(counts):
            raise EvolveError("cluster labels outside model range")
        if counts.min() < 0 or counts.sum() <= 0:
            raise EvolveError("cluster weights must be nonnegative, not all zero")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "correct", correct)

    @property
    def k(self) -> int:
        return len(self.counts)


def weighted_mean_cr(counts: Sequence[int], crs: Sequence[int]) -> float:
    """Average compression ratio in percent, weighted by cluster population."""
    counts = np.asarray(counts, dtype=float)
    crs = np.asarray(crs, dtype=float)
    if counts.shape != crs.shape:
        raise EvolveError("counts and ratios differ in length")
    total = counts.sum()
    if total <= 0:
        raise EvolveError("cluster counts sum to zero")
    return float(np.dot(counts, crs) / total)


def objectives_p2(phenotype: str, ctx: P2Context) -> Tuple[float, float]:
    """(1 - mean compression fraction, 1 - recognition accuracy); minimized."""
    parsed = parse_phenotype_p2(phenotype, k=ctx.k)
    if parsed is None:
        return P2_PENALTY
    crs = np.asarray(parsed.crs, dtype=int)
    mean_cr = weighted_mean_cr(ctx.counts, crs)
    col = np.searchsorted(CS_GRID, crs)  # grid membership checked at parse
    per_segment = ctx.correct[np.arange(len(ctx.labels)), col[ctx.labels]]
    accuracy = float(per_segment.mean())
    return (1.0 - mean_cr / 100.0, 1.0 - accuracy)


def eps_threshold(baseline_accuracy: float) -> float:
    """Tolerated recognition error: baseline error plus five points."""
    return (100.0 - baseline_accuracy) + 5.0


def solution_stats(ind: Individual) -> Tuple[float, float]:
    """(mean compression ratio %, recognition error %) of a P2 individual."""
    o1, o2 = ind.objectives
    return (100.0 * (1.0 - o1), 100.0 * o2)


def select_solution(front: List[Individual], baseline_accuracy: float,
                    accept: Optional[Callable[[Individual], bool]] = None,
                    ) -> Individual:
    """Pick the most compressing front member whose error stays tolerable.

    The choice depends only on objective values and phenotype strings, so the
    front may arrive in any order.  An optional `accept` predicate is applied
    in ranking order (most compressing first); callers use it to re-score
    candidates against sensing draws the search never saw.
    """
    if not front:
        raise EvolveError("empty front")
    threshold = eps_threshold(baseline_accuracy)
    feasible = [ind for ind in front if solution_stats(ind)[1] <= threshold]
    if not feasible:
        best = min(solution_stats(ind)[1] for ind in front)
        raise EvolveError(
            f"no solution within the error budget: best recognition error "
            f"{best:.2f}% exceeds the {threshold:.2f}% threshold by "
            f"{best - threshold:.2f} points")
    # max mean cr; ties go to the lower error, then lexicographic phenotype
    def key(ind: Individual):
        cr, err = solution_stats(ind)
        return (-cr, err, ind.phenotype or "")

    ranked = sorted(feasible, key=key)
    if accept is None:
        return ranked[0]
    for ind in ranked:
        if accept(ind):
            return ind
    raise EvolveError(
        f"no solution within the {threshold:.2f}% error budget survived "
        f"re-scoring ({len(feasible)} candidates inside it on the search table)")


def three_by_cluster_count(front: List[Individual]) -> List[Individual]:
    """First, middle, and last front members once sorted by cluster count.

    Duplicates collapse, so fewer than three may come back on small fronts.
    """
    parsed = []
    for ind in front:
        ph = parse_phenotype_p1(ind.phenotype or "")
        if ph is not None:
            parsed.append((ph.k, ind.phenotype, ind))
    if not parsed:
        raise EvolveError("front contains no valid phenotypes")
    parsed.sort(key=lambda t: (t[0], t[1]))
    picks = [parsed[0], parsed[len(parsed) // 2], parsed[-1]]
    out: List[Individual] = []
    seen = set()
    for k, ph, ind in picks:
        if ph not in seen:
            seen.add(ph)
            out.append(ind)
    return out
