"""Feature stability against a sample of trees and the greedy stable estimator."""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import EmptySample, LeafAbsent, NotCoveringPair, SplitAbsent, StepLimitExceeded
from .similarity import maximal_common_trees, rho_value
from .tree import (
    T0,
    Feature,
    Tree,
    Universe,
    added_feature,
    collapse_split,
    covers,
    delete_features,
    enumerate_covers,
    features,
    popcount,
    remove_feature,
    restrict_side,
    separating_subsets,
    remove_leaf,
)


class SampleSet:
    """Immutable ordered collection of sample trees over one taxon table.

    Repeated topologies are folded into multiplicities so that every
    sample statistic is a weighted count over distinct trees.
    """

    def __init__(self, trees: Iterable[Tree], universe: Universe, taxa: int | None = None, threads: int = 1):
        self._trees = tuple(trees)
        if not self._trees:
            raise EmptySample("sample set is empty")
        self.universe = universe
        union = 0
        for t in self._trees:
            union |= t.leaves
        if taxa is None:
            taxa = union
        elif union & ~taxa:
            raise ValueError("sample trees use taxa outside the configured set")
        self.taxa = taxa
        counts = Counter(self._trees)
        # first-appearance order keeps everything deterministic
        self._distinct = tuple(counts)
        self._weights = tuple(counts[t] for t in self._distinct)
        self.threads = max(1, int(threads))

    @property
    def trees(self) -> tuple[Tree, ...]:
        return self._trees

    @property
    def distinct(self) -> tuple[tuple[Tree, int], ...]:
        return tuple(zip(self._distinct, self._weights))

    def __len__(self) -> int:
        return len(self._trees)

    def __iter__(self):
        return iter(self._trees)

    def __getitem__(self, i):
        return self._trees[i]

    def subset(self, indices: Sequence[int]) -> "SampleSet":
        return SampleSet((self._trees[i] for i in indices), self.universe, self.taxa, self.threads)

    def similarities(self, t: Tree) -> tuple[int, ...]:
        """ρ of ``t`` against each distinct sample."""
        if self.threads > 1 and len(self._distinct) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return tuple(ex.map(lambda s: rho_value(t, s), self._distinct))
        return tuple(rho_value(t, s) for s in self._distinct)

    def count_gains(self, lower_rho: Sequence[int], upper: Tree) -> int:
        """Like :meth:`count_drops` with the lower tree's similarities precomputed."""
        up = self.similarities(upper)
        return sum(w for w, a, b in zip(self._weights, lower_rho, up) if a < b)

    def count_drops(self, lower: Tree, upper: Tree, upper_rho: Sequence[int] | None = None) -> int:
        """Number of samples whose similarity to ``lower`` is strictly below that to ``upper``."""
        if upper_rho is None:
            upper_rho = self.similarities(upper)
        lo = self.similarities(lower)
        return sum(w for w, a, b in zip(self._weights, lo, upper_rho) if a < b)


def _fraction(num: int, d: SampleSet) -> Fraction:
    return Fraction(num, len(d))


def leaf_stability(a: int, t: Tree, d: SampleSet) -> Fraction:
    if t.leaves == 0 or not t.leaves >> a & 1:
        raise LeafAbsent(a)
    return _fraction(d.count_drops(remove_leaf(t, a), t), d)


def edge_stability(s: int, t: Tree, d: SampleSet) -> Fraction:
    if s not in t.splits:
        raise SplitAbsent(s)
    return _fraction(d.count_drops(collapse_split(t, s), t), d)


def feature_stability(f: Feature, t: Tree, d: SampleSet, upper_rho=None) -> Fraction:
    return _fraction(d.count_drops(remove_feature(t, f), t, upper_rho), d)


def score(tu: Tree, tv: Tree, d: SampleSet) -> Fraction:
    """Share of samples whose similarity strictly grows from ``tu`` to ``tv``."""
    if not covers(tu, tv):
        raise NotCoveringPair("score needs a covering pair")
    return _fraction(d.count_drops(tu, tv), d)


@dataclass(frozen=True)
class StabilityEntry:
    feature: Feature
    numerator: int
    denominator: int

    @property
    def kind(self) -> str:
        return self.feature.kind

    @property
    def stability(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)


@dataclass(frozen=True)
class StabilityReport:
    tree: Tree
    entries: tuple[StabilityEntry, ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def minimum(self) -> Fraction | None:
        return min((e.stability for e in self.entries), default=None)

    def as_dict(self) -> dict[Feature, Fraction]:
        return {e.feature: e.stability for e in self.entries}


def stability_report(t: Tree, d: SampleSet) -> StabilityReport:
    """Stability of every feature of ``t`` in canonical feature order."""
    if t.leaves == 0:
        return StabilityReport(t, ())
    upper = d.similarities(t)
    n = len(d)
    entries = tuple(
        StabilityEntry(f, d.count_drops(remove_feature(t, f), t, upper), n)
        for f in features(t)
    )
    return StabilityReport(t, entries)


def is_alpha_stable(t: Tree, d: SampleSet, alpha, first: Feature | None = None) -> bool:
    """Every feature of ``t`` has stability at least ``alpha``.

    Stops at the first failing feature; ``first`` is checked before the rest.
    """
    if t.leaves == 0:
        return True
    alpha = Fraction(alpha)
    upper = d.similarities(t)
    n = len(d)
    need = alpha * n
    order = features(t)
    if first is not None and first in order:
        order.remove(first)
        order.insert(0, first)
    for f in order:
        if d.count_drops(remove_feature(t, f), t, upper) < need:
            return False
    return True


def leaf_drop_by_maximal_trees(t: Tree, a: int, sample: Tree) -> bool:
    """Leaf ``a`` lies in every maximal common subtree of ``t`` and ``sample``.

    Brute force; agrees with a strict similarity drop on removing ``a``.
    """
    bit = 1 << a
    return all(z.leaves & bit for z in maximal_common_trees(t, sample))


def edge_drop_by_separating_subsets(t: Tree, side: int, sample: Tree) -> bool:
    """Every maximal common subtree keeps split ``side`` and meets each separating subset.

    Brute force; agrees with a strict similarity drop on collapsing ``side``.
    """
    subsets = separating_subsets(t, side)
    for z in maximal_common_trees(t, sample):
        if z.leaves == 0:
            return False
        s = restrict_side(side, t.leaves, z.leaves)
        if s is None or s not in z.splits:
            return False
        if any(u & z.leaves == 0 for u in subsets):
            return False
    return True


# --------------------------------------------------------------------------
# Greedy estimator
# --------------------------------------------------------------------------


@dataclass
class StepLimits:
    """Round cap for :func:`estimate_stable`; ``None`` uses ten times the
    largest possible rank."""

    max_rounds: int | None = None
    cumulative: bool = True

    def rounds_for(self, n_taxa: int) -> int:
        if self.max_rounds is not None:
            return self.max_rounds
        return 10 * max(2 * n_taxa - 7, 1)


@dataclass
class TraceStep:
    round: int
    action: str
    current: Tree
    candidate: Tree | None = None
    score: Fraction | None = None
    n_candidates: int = 0
    removed: tuple[Feature, ...] = ()
    result: Tree | None = None


@dataclass
class StableEstimate:
    tree: Tree
    report: StabilityReport
    trace: list[TraceStep] = field(default_factory=list)


def _ranked_covers(tu: Tree, d: SampleSet) -> list[tuple[Fraction, Tree]]:
    base = d.similarities(tu)
    n = len(d)
    scored = [(Fraction(d.count_gains(base, tv), n), tv) for tv in enumerate_covers(tu, d.taxa)]
    # highest score first, canonical order among ties
    scored.sort(key=lambda p: (-p[0], p[1].sort_key()))
    return scored


def estimate_stable(d: SampleSet, alpha, limits: StepLimits | None = None) -> StableEstimate:
    """Greedy walk up the poset keeping every visited tree alpha-stable.

    Each round moves to the best-scoring covering tree that is alpha-stable.
    If none is, the top candidate is repaired by deleting its least stable
    features (never the one just added) until it becomes alpha-stable; if
    that fails the walk stops.  A revisited tree also stops the walk.
    """
    alpha = Fraction(alpha)
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    limits = limits or StepLimits()
    cap = limits.rounds_for(popcount(d.taxa))
    n = len(d)
    need = alpha * n

    tu = T0
    visited = {T0}
    trace: list[TraceStep] = []
    rnd = 0
    while True:
        if rnd >= cap:
            raise StepLimitExceeded(
                f"no termination after {cap} rounds",
                partial=StableEstimate(tu, stability_report(tu, d), trace),
            )
        rnd += 1
        ranked = _ranked_covers(tu, d)
        if not ranked:
            trace.append(TraceStep(rnd, "maximal", tu))
            break
        chosen = None
        for sc, tv in ranked:
            # the added feature's stability equals the score, so anything
            # below alpha fails without a full check
            if sc < alpha:
                break
            if is_alpha_stable(tv, d, alpha, first=added_feature(tu, tv)):
                chosen = (sc, tv)
                break
        if chosen is not None:
            sc, tv = chosen
            if tv in visited:
                trace.append(TraceStep(rnd, "revisit", tu, tv, sc, len(ranked), result=tu))
                break
            trace.append(TraceStep(rnd, "advance", tu, tv, sc, len(ranked), result=tv))
            visited.add(tv)
            tu = tv
            continue

        sc, tv = ranked[0]
        new = added_feature(tu, tv)
        report = stability_report(tv, d)
        pool = [e for e in report.entries if new is not None and e.feature != new]
        pool.sort(key=lambda e: (e.numerator, e.feature))
        repaired = None
        removed: list[Feature] = []
        for e in pool:
            if limits.cumulative:
                removed.append(e.feature)
                cand = delete_features(tv, removed)
            else:
                removed = [e.feature]
                cand = remove_feature(tv, e.feature)
            if is_alpha_stable(cand, d, alpha):
                repaired = cand
                break
        if repaired is None:
            trace.append(TraceStep(rnd, "stop", tu, tv, sc, len(ranked), tuple(removed), result=tu))
            break
        if repaired in visited:
            trace.append(TraceStep(rnd, "revisit", tu, tv, sc, len(ranked), tuple(removed), result=tu))
            break
        trace.append(TraceStep(rnd, "repair", tu, tv, sc, len(ranked), tuple(removed), result=repaired))
        visited.add(repaired)
        tu = repaired

    report = stability_report(tu, d)
    assert all(e.numerator >= need for e in report.entries), "estimate is not alpha-stable"
    return StableEstimate(tu, report, trace)
