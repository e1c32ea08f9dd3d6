"""Discovery accounting and the FDR-controlled tree selector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .consensus import SampleSet
from .errors import EmptySample
from .similarity import rho_value
from .subposet import SubposetDag
from .tree import T0, Tree, leq, popcount, restrict_splits


@dataclass(frozen=True)
class DiscoveryCounts:
    td: int
    fd: int
    fdp: Fraction


@dataclass(frozen=True)
class FdrConfig:
    q: Fraction
    n2: int
    eta: Fraction = Fraction(1, 2)

    def __post_init__(self):
        if not 0 < Fraction(self.q) < 1:
            raise ValueError("q must lie in (0, 1)")
        if not 0 < Fraction(self.eta) < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.n2 < 1:
            raise ValueError("n2 must be positive")


def discoveries(estimate: Tree, reference: Tree) -> DiscoveryCounts:
    td = rho_value(estimate, reference)
    r = estimate.rank
    fd = r - td
    return DiscoveryCounts(td, fd, Fraction(fd, r) if r else Fraction(0))


def naive_fd(estimate: Tree, reference: Tree) -> int:
    """Excess splits on the shared leaves plus excess leaves."""
    if estimate.leaves == 0:
        return 0
    shared = estimate.leaves & reference.leaves
    extra_leaves = popcount(estimate.leaves & ~reference.leaves)
    if popcount(shared) < 4:
        return extra_leaves
    mine = restrict_splits(estimate, shared)
    theirs = restrict_splits(reference, shared) if reference.leaves else set()
    return len(mine - theirs) + extra_leaves


def kappa(sub: SubposetDag) -> dict[Tree, int]:
    return sub.kappa()


def threshold(kappa_t: int, rank_t: int, r_max: int, cfg: FdrConfig) -> float:
    """Score threshold for a tree with multiplicity ``kappa_t`` at ``rank_t``."""
    arg = kappa_t * (r_max - rank_t + 1) / (float(cfg.q) * r_max)
    inner = math.log(arg) / cfg.n2 if arg > 0 else 0.0
    return math.sqrt(max(inner, 0.0)) + (1 - float(cfg.eta))


def gamma(t: Tree, cfg: FdrConfig, sub: SubposetDag) -> float:
    """Score threshold a covering step into ``t`` must reach."""
    return threshold(sub.kappa()[t], t.rank, sub.r_max, cfg)


@dataclass
class GateStep:
    round: int
    current: Tree
    candidate: Tree
    score: Fraction
    gamma: float
    accepted: bool
    failed_pair: tuple[Tree, Tree] | None = None


@dataclass
class FdrSelection:
    tree: Tree
    trace: list[GateStep] = field(default_factory=list)


class _PairScores:
    # covering-pair scores on the held-out samples, each computed once
    def __init__(self, d: SampleSet):
        self.d = d
        self.cache: dict[tuple[Tree, Tree], Fraction] = {}

    def __call__(self, lo: Tree, hi: Tree) -> Fraction:
        key = (lo, hi)
        got = self.cache.get(key)
        if got is None:
            got = Fraction(self.d.count_drops(lo, hi), len(self.d))
            self.cache[key] = got
        return got


def select_fdr(sub: SubposetDag, d2: SampleSet, cfg: FdrConfig) -> FdrSelection:
    """Walk up the subposet while every covering pair below the next tree passes its threshold."""
    scores = _PairScores(d2)
    thresholds = {t: gamma(t, cfg, sub) for t in sub.nodes if t.leaves}
    passed: dict[tuple[Tree, Tree], bool] = {}

    def pair_ok(x: Tree, y: Tree) -> bool:
        ok = passed.get((x, y))
        if ok is None:
            # exact rational score against the double threshold, ties accepted
            ok = scores(x, y) >= Fraction(thresholds[y])
            passed[(x, y)] = ok
        return ok

    tu = T0
    trace: list[GateStep] = []
    rnd = 0
    while True:
        rnd += 1
        cands = sorted(sub.covers_of(tu), key=lambda v: (-scores(tu, v), v.sort_key()))
        moved = False
        for tv in cands:
            failed = None
            for x, y in sub.edges:
                if leq(y, tv) and not pair_ok(x, y):
                    failed = (x, y)
                    break
            trace.append(GateStep(rnd, tu, tv, scores(tu, tv), thresholds[tv], failed is None, failed))
            if failed is None:
                tu = tv
                moved = True
                break
        if not moved:
            break
    return FdrSelection(tu, trace)


def null_covering_pairs(sub: SubposetDag, reference: Tree) -> set[tuple[Tree, Tree]]:
    return {(a, b) for a, b in sub.edges if rho_value(a, reference) == rho_value(b, reference)}


def assumption2_estimate(
    sub: SubposetDag,
    reference: Tree,
    sampler: Callable[[int], Tree],
    m: int,
) -> Fraction | None:
    """Monte-Carlo estimate of the smallest tie probability over null covering pairs.

    ``sampler(i)`` returns the i-th draw.  ``None`` means there are no null
    pairs, so the condition holds vacuously.
    """
    if m <= 0:
        raise EmptySample("need at least one draw")
    nulls = sorted(null_covering_pairs(sub, reference), key=lambda p: (p[0].sort_key(), p[1].sort_key()))
    if not nulls:
        return None
    ties = [0] * len(nulls)
    for i in range(m):
        t = sampler(i)
        for j, (a, b) in enumerate(nulls):
            if rho_value(a, t) == rho_value(b, t):
                ties[j] += 1
    return Fraction(min(ties), m)


def telescoping_bound(path: list[Tree], reference: Tree) -> int:
    """Number of steps on a covering path that add no similarity to ``reference``."""
    return sum(
        1 for a, b in zip(path, path[1:]) if rho_value(a, reference) == rho_value(b, reference)
    )

