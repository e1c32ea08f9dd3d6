"""Similarity between two trees: the rank of a largest tree below both.

The fast path is a depth-first search over subsets of *common splits*.
A common split comes from one edge of each tree: intersect the two sides
pairwise, and if both halves keep at least two leaves the result is a
bipartition of a leaf subset that both edges agree on.  Any subset of
common splits induces a candidate tree on the intersection of their leaf
sets; the similarity is the best rank over valid subsets.

Restricting common splits to a shared leaf set never creates a conflict
between them (each one is a restriction of an edge of the first tree, and
those are pairwise compatible), so a subset is valid exactly when every
restricted split stays non-trivial and no two restrictions coincide.
Both failures persist when more splits are added, which lets the search
drop a branch as soon as it turns invalid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

from .errors import UniverseTooLarge
from .tree import (
    ENUMERATION_GUARD,
    T0,
    Tree,
    bits,
    compatible_split_sets,
    leq,
    lowbit,
    mask_of,
    popcount,
    restrict_splits,
)


@dataclass(frozen=True)
class CommonSplit:
    """Agreement bipartition of one edge pair.

    ``side_a`` holds the lowest leaf of ``leaves``; ``origin`` is
    ``(index in t1.splits, index in t2.splits, crossed)`` where ``crossed``
    marks the pairing of the first tree's canonical side with the second
    tree's non-canonical side.
    """

    side_a: int
    side_b: int
    origin: tuple[int, int, bool]

    @property
    def leaves(self) -> int:
        return self.side_a | self.side_b


@dataclass(frozen=True)
class SimilarityResult:
    rho: int
    witness: Tree


def common_splits(t1: Tree, t2: Tree) -> list[CommonSplit]:
    """Deduplicated agreement splits, largest leaf sets first."""
    if t1.leaves == 0 or t2.leaves == 0:
        return []
    seen = {}
    l1, l2 = t1.leaves, t2.leaves
    for i, a1 in enumerate(t1.splits):
        b1 = l1 ^ a1
        for j, a2 in enumerate(t2.splits):
            b2 = l2 ^ a2
            for crossed, (x, y) in ((False, (a1 & a2, b1 & b2)), (True, (a1 & b2, b1 & a2))):
                if popcount(x) < 2 or popcount(y) < 2:
                    continue
                both = x | y
                if not x & lowbit(both):
                    x, y = y, x
                key = (both, x)
                if key not in seen:
                    seen[key] = CommonSplit(x, y, (i, j, crossed))
    out = list(seen.values())
    out.sort(key=lambda c: (-popcount(c.leaves), c.leaves, c.side_a))
    return out


def _search(t1: Tree, t2: Tree) -> SimilarityResult:
    if leq(t1, t2):
        return SimilarityResult(t1.rank, t1)
    if leq(t2, t1):
        return SimilarityResult(t2.rank, t2)
    cs = common_splits(t1, t2)
    m = len(cs)
    if m == 0:
        return SimilarityResult(0, T0)
    c_leaves = [c.leaves for c in cs]
    c_side = [c.side_a for c in cs]
    split_cap = min(len(t1.splits), len(t2.splits))

    best = 0
    best_state = None
    # frame: [next index, leaf set, restricted sides, number chosen]
    stack = [[0, -1, (), 0]]
    while stack:
        frame = stack[-1]
        j = frame[0]
        if j >= m:
            stack.pop()
            continue
        frame[0] = j + 1
        cur_l, sides, k = frame[1], frame[2], frame[3]

        new_l = c_leaves[j] if k == 0 else cur_l & c_leaves[j]
        nl = popcount(new_l)
        if nl < 4:
            continue
        potential = nl - 4 + min(k + (m - j), split_cap, nl - 3)
        if potential <= best:
            continue

        low = lowbit(new_l)
        restricted = set()
        ok = True
        for s in sides:
            a = s & new_l
            b = (cur_l ^ s) & new_l
            if popcount(a) < 2 or popcount(b) < 2:
                ok = False
                break
            r = a if a & low else b
            if r in restricted:
                ok = False
                break
            restricted.add(r)
        if not ok:
            continue
        a = c_side[j] & new_l
        b = (c_leaves[j] ^ c_side[j]) & new_l
        if popcount(a) < 2 or popcount(b) < 2:
            continue
        r = a if a & low else b
        if r in restricted:
            continue
        restricted.add(r)

        rank = nl - 4 + len(restricted)
        new_sides = tuple(restricted)
        if rank > best:
            best = rank
            best_state = (new_l, new_sides)
        stack.append([j + 1, new_l, new_sides, k + 1])

    if best_state is None:
        return SimilarityResult(0, T0)
    leaves, sides = best_state
    return SimilarityResult(best, Tree(leaves, tuple(sorted(sides))))


@lru_cache(maxsize=1 << 20)
def _rho_cached(t1: Tree, t2: Tree) -> SimilarityResult:
    return _search(t1, t2)


def rho(t1: Tree, t2: Tree) -> SimilarityResult:
    """Similarity of two trees with one maximal common subtree as witness.

    Results are memoised on the unordered pair, so ``rho(a, b)`` and
    ``rho(b, a)`` share a cache entry and return the same witness.
    """
    if t2.sort_key() < t1.sort_key():
        t1, t2 = t2, t1
    return _rho_cached(t1, t2)


def rho_value(t1: Tree, t2: Tree) -> int:
    return rho(t1, t2).rho


def clear_cache() -> None:
    _rho_cached.cache_clear()


def cache_info():
    return _rho_cached.cache_info()


# --------------------------------------------------------------------------
# Exhaustive oracles
# --------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _trees_by_leafset(universe: int) -> tuple[tuple[int, tuple[frozenset, ...]], ...]:
    # every non-T0 element over ``universe``, grouped by leaf set, with each
    # tree reduced to its split set
    if popcount(universe) > ENUMERATION_GUARD:
        raise UniverseTooLarge(
            f"exhaustive search limited to {ENUMERATION_GUARD} shared leaves"
        )
    groups = []
    ids = bits(universe)
    for k in range(4, len(ids) + 1):
        for subset in itertools.combinations(ids, k):
            y = mask_of(subset)
            groups.append((y, tuple(frozenset(s) for s in compatible_split_sets(y))))
    return tuple(groups)


def _common_lower_bounds(t1: Tree, t2: Tree):
    # yields (rank, tree) for every non-T0 tree below both inputs
    if t1.leaves == 0 or t2.leaves == 0:
        return
    shared = t1.leaves & t2.leaves
    for y, split_sets in _trees_by_leafset(shared):
        # the order test against a fixed tree only needs its restriction to
        # y, so compute it once per leaf set
        r1 = restrict_splits(t1, y)
        if not r1:
            continue
        r2 = restrict_splits(t2, y)
        if not r2:
            continue
        base = popcount(y) - 4
        for ss in split_sets:
            if ss <= r1 and ss <= r2:
                yield base + len(ss), y, ss


def rho_bruteforce(t1: Tree, t2: Tree) -> int:
    """Similarity by scanning every tree on the shared leaves."""
    shared = t1.leaves & t2.leaves
    if popcount(shared) > ENUMERATION_GUARD:
        raise UniverseTooLarge(
            f"exhaustive search limited to {ENUMERATION_GUARD} shared leaves"
        )
    best = 0
    for r, _, _ in _common_lower_bounds(t1, t2):
        if r > best:
            best = r
    return best


def maximal_common_trees(t1: Tree, t2: Tree) -> set[Tree]:
    """Every largest-rank tree below both inputs (``{T0}`` if none)."""
    shared = t1.leaves & t2.leaves
    if popcount(shared) > ENUMERATION_GUARD:
        raise UniverseTooLarge(
            f"exhaustive search limited to {ENUMERATION_GUARD} shared leaves"
        )
    best = 0
    found: list[tuple[int, frozenset]] = []
    for r, y, ss in _common_lower_bounds(t1, t2):
        if r > best:
            best = r
            found = [(y, ss)]
        elif r == best:
            found.append((y, ss))
    if best == 0:
        return {T0}
    return {Tree(y, tuple(sorted(ss))) for y, ss in found}
