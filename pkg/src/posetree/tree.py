"""Unrooted leaf-labelled tree topologies and the poset they form.

Leaves are small integer ids handed out by a :class:`Universe`.  A leaf set
is an ``int`` bitmask and every split is stored as the bitmask of the side
that holds the lowest leaf id of the tree, so set algebra on splits is a
handful of integer operations.

A :class:`Tree` is the pair (leaf set, split set).  All star trees collapse
onto the single least element :data:`T0`, which has no leaves and no splits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import (
    IncompatibleSplits,
    LeafAbsent,
    SplitAbsent,
    UniverseTooLarge,
)

ENUMERATION_GUARD = 8


def popcount(x: int) -> int:
    return x.bit_count()


def lowbit(x: int) -> int:
    return x & -x


def bits(mask: int) -> list[int]:
    """Ids of the set bits of ``mask`` in increasing order."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def mask_of(ids: Iterable[int]) -> int:
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def canonical_side(side: int, leaves: int) -> int:
    """Orient a bipartition of ``leaves`` so the side holding the lowest id is kept."""
    side &= leaves
    if side & lowbit(leaves):
        return side
    return leaves ^ side


def is_nontrivial(side: int, leaves: int) -> bool:
    return popcount(side & leaves) >= 2 and popcount(leaves & ~side) >= 2


def splits_compatible(s1: int, s2: int, leaves: int) -> bool:
    """Four-containment test for two bipartitions of the same leaf set.

    ``s1`` and ``s2`` are either side of their split; orientation does not
    matter.
    """
    a1 = s1 & leaves
    b1 = leaves ^ a1
    a2 = s2 & leaves
    b2 = leaves ^ a2
    return (
        not (a1 & ~a2)
        or not (a1 & ~b2)
        or not (b1 & ~a2)
        or not (b1 & ~b2)
    )


class Tree:
    """Canonical topology: a leaf bitmask plus a sorted tuple of split sides.

    Instances are immutable and hashable; equality is structural.  Build
    them through :func:`canonicalize` (or the operations in this module),
    never by hand, unless the inputs are already canonical.
    """

    __slots__ = ("leaves", "splits", "_hash")

    def __init__(self, leaves: int, splits: tuple[int, ...]):
        object.__setattr__(self, "leaves", leaves)
        object.__setattr__(self, "splits", splits)
        object.__setattr__(self, "_hash", hash((leaves, splits)))

    def __setattr__(self, name, value):
        raise AttributeError("Tree is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Tree):
            return NotImplemented
        return self._hash == other._hash and self.leaves == other.leaves and self.splits == other.splits

    def __lt__(self, other: "Tree") -> bool:
        return self.sort_key() < other.sort_key()

    def __reduce__(self):
        return (_rebuild, (self.leaves, self.splits))

    @property
    def is_least(self) -> bool:
        return self.leaves == 0

    @property
    def rank(self) -> int:
        if self.leaves == 0:
            return 0
        return len(self.splits) + popcount(self.leaves) - 4

    @property
    def n_leaves(self) -> int:
        return popcount(self.leaves)

    def leaf_ids(self) -> list[int]:
        return bits(self.leaves)

    def sort_key(self) -> tuple:
        return (self.rank, self.leaves, self.splits)

    def __repr__(self) -> str:
        if self.leaves == 0:
            return "Tree(T0)"
        sp = ",".join(f"{s:#x}" for s in self.splits)
        return f"Tree(leaves={self.leaves:#x}, splits=[{sp}])"


T0 = Tree(0, ())


def _rebuild(leaves: int, splits: tuple[int, ...]) -> Tree:
    # unpickling keeps the least element a singleton
    return T0 if leaves == 0 else Tree(leaves, splits)


def canonicalize(leaves: int | Iterable[int], splits: Iterable) -> Tree:
    """Normal form of a (leaf set, bipartitions) pair.

    ``leaves`` is a bitmask or an iterable of leaf ids.  Each entry of
    ``splits`` is either one side as a bitmask or an ``(a, b)`` pair of
    bitmasks.  Trivial splits are dropped and duplicates merged; an empty
    result is the least element :data:`T0`.
    """
    if not isinstance(leaves, int):
        leaves = mask_of(leaves)
    kept = set()
    for s in splits:
        if isinstance(s, tuple):
            a, b = s
            if (a | b) != leaves or a & b:
                raise ValueError("bipartition does not partition the leaf set")
            s = a
        elif s & ~leaves:
            raise ValueError("split side has leaves outside the leaf set")
        if is_nontrivial(s, leaves):
            kept.add(canonical_side(s, leaves))
    if not kept:
        return T0
    ordered = tuple(sorted(kept))
    for i, s1 in enumerate(ordered):
        for s2 in ordered[i + 1:]:
            if not splits_compatible(s1, s2, leaves):
                raise IncompatibleSplits(f"splits {s1:#x} and {s2:#x} conflict")
    return Tree(leaves, ordered)


def _from_trusted(leaves: int, sides: Iterable[int]) -> Tree:
    # sides already canonical, nontrivial and pairwise compatible
    ordered = tuple(sorted(set(sides)))
    if not ordered:
        return T0
    return Tree(leaves, ordered)


def rank(t: Tree) -> int:
    return t.rank


def restrict_side(side: int, old_leaves: int, new_leaves: int) -> int | None:
    """Restriction of one split to ``new_leaves``; ``None`` if it turns trivial."""
    a = side & new_leaves
    b = (old_leaves ^ side) & new_leaves
    if popcount(a) < 2 or popcount(b) < 2:
        return None
    return a if a & lowbit(new_leaves) else b


def restrict_splits(t: Tree, y: int) -> set[int]:
    """The restricted split set of ``t`` on ``y`` (undefined restrictions dropped)."""
    out = set()
    low = lowbit(y)
    leaves = t.leaves
    for s in t.splits:
        a = s & y
        if popcount(a) < 2:
            continue
        b = (leaves ^ s) & y
        if popcount(b) < 2:
            continue
        out.add(a if a & low else b)
    return out


def restrict(t: Tree, y: int) -> Tree:
    if t.leaves == 0:
        return T0
    if y & ~t.leaves:
        raise LeafAbsent(f"restriction set {y:#x} is not inside the leaf set")
    if popcount(y) < 4:
        return T0
    return _from_trusted(y, restrict_splits(t, y))


def remove_leaf(t: Tree, a: int) -> Tree:
    bit = 1 << a
    if not t.leaves & bit:
        raise LeafAbsent(a)
    return restrict(t, t.leaves ^ bit)


def collapse_split(t: Tree, s: int) -> Tree:
    if s not in t.splits:
        raise SplitAbsent(s)
    return _from_trusted(t.leaves, (x for x in t.splits if x != s))


def leq(t1: Tree, t2: Tree) -> bool:
    """Order test: every leaf and every split of ``t1`` is carried by ``t2``."""
    if t1.leaves == 0:
        return True
    if t1.leaves & ~t2.leaves:
        return False
    if len(t1.splits) > len(t2.splits):
        return False
    if t1.leaves == t2.leaves:
        if t1.splits == t2.splits:
            return True
        return set(t1.splits) <= set(t2.splits)
    return set(t1.splits) <= restrict_splits(t2, t1.leaves)


def _covering_clause(ta: Tree, tb: Tree) -> bool:
    # the structural characterisation of covering pairs, checked on top of
    # order + rank gap as a consistency guard
    if ta.leaves == 0:
        return popcount(tb.leaves) == 4 and len(tb.splits) == 1
    if ta.leaves == tb.leaves:
        return len(tb.splits) == len(ta.splits) + 1 and set(ta.splits) <= set(tb.splits)
    extra = tb.leaves & ~ta.leaves
    if ta.leaves & ~tb.leaves or popcount(extra) != 1:
        return False
    return restrict_splits(tb, ta.leaves) == set(ta.splits)


def covers(ta: Tree, tb: Tree) -> bool:
    """True when ``tb`` covers ``ta``: comparable, distinct, one rank apart."""
    if ta == tb or tb.rank != ta.rank + 1:
        return False
    if not leq(ta, tb):
        return False
    return _covering_clause(ta, tb)


# --------------------------------------------------------------------------
# Adjacency reconstruction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InternalNode:
    """One internal vertex of an unrooted tree.

    ``cluster`` is the set of leaves below the vertex when the tree hangs
    from its lowest leaf; ``bundles`` are the leaf sets reached through each
    incident edge (children first, then the way back up).
    """

    cluster: int
    bundles: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.bundles)


def internal_nodes(t: Tree) -> list[InternalNode]:
    """Rebuild the internal vertices of ``t`` from its split set."""
    if t.leaves == 0:
        return []
    leaves = t.leaves
    root_leaf = lowbit(leaves)
    clusters = [leaves ^ s for s in t.splits]
    clusters.append(leaves ^ root_leaf)
    # largest first, so a cluster's parent is the last strictly larger
    # superset seen
    clusters.sort(key=lambda c: (-popcount(c), c))
    children: dict[int, list[int]] = {c: [] for c in clusters}
    for i, c in enumerate(clusters):
        if i == 0:
            continue
        parent = None
        for j in range(i - 1, -1, -1):
            p = clusters[j]
            if c & ~p == 0:
                parent = p
                break
        children[parent].append(c)
    # singleton leaves hang off the smallest cluster containing them
    for leaf in bits(leaves ^ root_leaf):
        lb = 1 << leaf
        for c in reversed(clusters):
            if c & lb:
                children[c].append(lb)
                break
    nodes = []
    for c in clusters:
        kids = sorted(children[c], key=lowbit)
        nodes.append(InternalNode(c, tuple(kids) + (leaves ^ c,)))
    nodes.sort(key=lambda n: (popcount(n.cluster), n.cluster))
    return nodes


def separating_subsets(t: Tree, side: int) -> list[int]:
    """Leaf sets whose removal merges split ``side`` with a neighbouring edge.

    For each endpoint of the edge and each other edge at that endpoint,
    this is the symmetric difference of the two nested split sides, which
    equals the union of the remaining bundles at the vertex.
    """
    if side not in t.splits:
        raise SplitAbsent("split is not in the tree")
    other = t.leaves ^ side
    out = set()
    for node in internal_nodes(t):
        for x in node.bundles:
            if x != side and x != other:
                continue
            for y in node.bundles:
                if y != x:
                    out.add(t.leaves & ~x & ~y)
    return sorted(out)


# --------------------------------------------------------------------------
# Covering enumeration
# --------------------------------------------------------------------------


def _quartets(universe: int) -> list[Tree]:
    out = []
    for quad in itertools.combinations(bits(universe), 4):
        m = mask_of(quad)
        a = 1 << quad[0]
        for other in quad[1:]:
            out.append(Tree(m, (a | (1 << other),)))
    return out


def refinements(t: Tree) -> list[Tree]:
    """All trees obtained by resolving one vertex of degree at least four."""
    out = []
    leaves = t.leaves
    for node in internal_nodes(t):
        d = node.degree
        if d < 4:
            continue
        first, rest = node.bundles[0], node.bundles[1:]
        for k in range(1, d - 2):
            for combo in itertools.combinations(rest, k):
                side = first
                for b in combo:
                    side |= b
                new = canonical_side(side, leaves)
                out.append(Tree(leaves, tuple(sorted(t.splits + (new,)))))
    return out


def leaf_additions(t: Tree, universe: int) -> list[Tree]:
    """All trees obtained by hanging one missing leaf on an internal vertex."""
    out = []
    missing = universe & ~t.leaves
    if not missing or t.leaves == 0:
        return out
    nodes = internal_nodes(t)
    for x in bits(missing):
        xb = 1 << x
        new_leaves = t.leaves | xb
        low = lowbit(new_leaves)
        for node in nodes:
            c = node.cluster
            sides = []
            for s in t.splits:
                below = t.leaves ^ s
                if c & ~below == 0:
                    below |= xb
                sides.append(below if below & low else new_leaves ^ below)
            out.append(Tree(new_leaves, tuple(sorted(sides))))
    return out


def enumerate_covers(tu: Tree, universe: int) -> list[Tree]:
    """Every element of the poset over ``universe`` that covers ``tu``, sorted."""
    if tu.leaves & ~universe:
        raise LeafAbsent("tree has leaves outside the universe")
    if tu.leaves == 0:
        out = _quartets(universe)
    else:
        out = refinements(tu) + leaf_additions(tu, universe)
    out.sort(key=Tree.sort_key)
    return out


def enumerate_covered(tv: Tree) -> list[Tree]:
    """Every element covered by ``tv``, sorted."""
    if tv.leaves == 0:
        return []
    target = tv.rank - 1
    found = set()
    if tv.rank == 1:
        return [T0]
    for s in tv.splits:
        c = collapse_split(tv, s)
        if c.rank == target:
            found.add(c)
    for a in tv.leaf_ids():
        r = remove_leaf(tv, a)
        if r.rank == target:
            found.add(r)
    return sorted(found, key=Tree.sort_key)


def is_maximal(t: Tree, universe: int) -> bool:
    """No element over ``universe`` covers ``t`` (binary on the full leaf set)."""
    n = popcount(universe)
    if n < 4:
        return t.leaves == 0
    return t.leaves == universe and len(t.splits) == n - 3


# --------------------------------------------------------------------------
# Exhaustive enumeration
# --------------------------------------------------------------------------


def nontrivial_sides(y: int) -> list[int]:
    """Canonical sides of every non-trivial split of leaf set ``y``."""
    ids = bits(y)
    first = 1 << ids[0]
    rest = ids[1:]
    out = []
    for k in range(1, len(ids) - 2):
        for combo in itertools.combinations(rest, k):
            out.append(first | mask_of(combo))
    out.sort()
    return out


def compatible_split_sets(y: int) -> Iterator[tuple[int, ...]]:
    """Every non-empty pairwise-compatible set of non-trivial splits on ``y``."""
    sides = nontrivial_sides(y)
    n = len(sides)
    ok = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if splits_compatible(sides[i], sides[j], y):
                ok[i] |= 1 << j
                ok[j] |= 1 << i

    def grow(chosen: tuple[int, ...], cand: int) -> Iterator[tuple[int, ...]]:
        while cand:
            low = cand & -cand
            i = low.bit_length() - 1
            cand ^= low
            nxt = chosen + (sides[i],)
            yield nxt
            yield from grow(nxt, cand & ok[i])

    yield from grow((), (1 << n) - 1)


def enumerate_all(universe: int) -> Iterator[Tree]:
    """Stream every element of the poset over ``universe`` exactly once.

    ``T0`` comes first, then the trees grouped by leaf set.  Guarded to
    universes of at most eight leaves.
    """
    if popcount(universe) > ENUMERATION_GUARD:
        raise UniverseTooLarge(
            f"exhaustive enumeration limited to {ENUMERATION_GUARD} leaves"
        )
    yield T0
    ids = bits(universe)
    for k in range(4, len(ids) + 1):
        for subset in itertools.combinations(ids, k):
            y = mask_of(subset)
            for sides in compatible_split_sets(y):
                yield Tree(y, tuple(sorted(sides)))


def count_all(n_leaves: int) -> int:
    """Size of the poset over ``n_leaves`` labels, by direct enumeration."""
    return sum(1 for _ in enumerate_all((1 << n_leaves) - 1))


# --------------------------------------------------------------------------
# Features
# --------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Feature:
    """A leaf (``kind='leaf'``, ``value`` = leaf id) or an edge
    (``kind='edge'``, ``value`` = canonical split side)."""

    kind: str
    value: int

    @property
    def is_leaf(self) -> bool:
        return self.kind == "leaf"


def features(t: Tree) -> list[Feature]:
    if t.leaves == 0:
        return []
    return [Feature("leaf", a) for a in t.leaf_ids()] + [
        Feature("edge", s) for s in t.splits
    ]


def remove_feature(t: Tree, f: Feature) -> Tree:
    if f.is_leaf:
        return remove_leaf(t, f.value)
    return collapse_split(t, f.value)


def delete_features(t: Tree, removed: Sequence[Feature]) -> Tree:
    """Drop a batch of features of ``t`` at once.

    Splits are collapsed first, then the leaf set shrinks; the result does
    not depend on the order of ``removed``.
    """
    gone_leaves = mask_of(f.value for f in removed if f.is_leaf)
    gone_splits = {f.value for f in removed if not f.is_leaf}
    if gone_leaves & ~t.leaves or not gone_splits <= set(t.splits):
        raise ValueError("feature is not part of the tree")
    kept = _from_trusted(t.leaves, (s for s in t.splits if s not in gone_splits))
    if kept.leaves == 0:
        return T0
    return restrict(kept, t.leaves & ~gone_leaves)


def added_feature(tu: Tree, tv: Tree) -> Feature | None:
    """The feature ``tv`` gains over ``tu`` when ``tv`` covers ``tu``.

    Returns ``None`` when ``tu`` is ``T0`` (every feature of a quartet is new).
    """
    if tu.leaves == 0:
        return None
    if tu.leaves == tv.leaves:
        (new,) = set(tv.splits) - set(tu.splits)
        return Feature("edge", new)
    extra = tv.leaves & ~tu.leaves
    return Feature("leaf", extra.bit_length() - 1)


# --------------------------------------------------------------------------
# Taxon interning and display
# --------------------------------------------------------------------------


class Universe:
    """Interning table mapping taxon names to dense leaf ids.

    Ids are handed out in insertion order.  Once ingestion is done call
    :meth:`freeze`; interning a new name afterwards raises ``KeyError``.
    """

    def __init__(self, taxa: Iterable[str] = ()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        self._frozen = False
        for name in taxa:
            self.intern(name)

    def intern(self, name: str) -> int:
        got = self._ids.get(name)
        if got is not None:
            return got
        if self._frozen:
            raise LeafAbsent(f"unknown taxon {name!r}")
        i = len(self._names)
        self._names.append(name)
        self._ids[name] = i
        return i

    def freeze(self) -> "Universe":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise LeafAbsent(name) from None

    def name(self, i: int) -> str:
        return self._names[i]

    @property
    def taxa(self) -> tuple[str, ...]:
        return tuple(self._names)

    @property
    def size(self) -> int:
        return len(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name) -> bool:
        return name in self._ids

    @property
    def mask(self) -> int:
        return (1 << len(self._names)) - 1

    def mask_of(self, names: Iterable[str]) -> int:
        return mask_of(self.id(n) for n in names)

    def names_of(self, mask: int) -> list[str]:
        return [self._names[i] for i in bits(mask)]

    def tree(self, leaves: Iterable[str], splits: Iterable[str] = ()) -> Tree:
        """Build a tree from names; each split is written like ``"AB|CD"``
        (single-character taxa) or ``"A,B|C,D"``."""
        leaf_mask = mask_of(self.intern(n) for n in leaves)
        sides = []
        for s in splits:
            left = s.split("|")[0]
            names = left.split(",") if "," in left else list(left)
            sides.append(mask_of(self.intern(n.strip()) for n in names if n.strip()))
        return canonicalize(leaf_mask, sides)

    def format_tree(self, t: Tree) -> str:
        """Debug form ``leaves:{A,B,C,D} splits:{A,B|C,D}``."""
        leaves = ",".join(self.names_of(t.leaves))
        parts = []
        for s in t.splits:
            a = ",".join(self.names_of(s))
            b = ",".join(self.names_of(t.leaves ^ s))
            parts.append(f"{a}|{b}")
        return "leaves:{%s} splits:{%s}" % (leaves, ";".join(parts))

    def format_feature(self, t: Tree, f: Feature) -> str:
        if f.is_leaf:
            return self._names[f.value]
        a = ",".join(self.names_of(f.value))
        b = ",".join(self.names_of(t.leaves ^ f.value))
        return f"{a}|{b}"

    def __eq__(self, other) -> bool:
        return isinstance(other, Universe) and self._names == other._names

    def __hash__(self) -> int:
        return hash(tuple(self._names))

    def __repr__(self) -> str:
        return f"Universe({self._names!r})"


def unrooted_tree_counts(n_max: int) -> list[int]:
    """Number of unrooted trees with ``k`` labelled leaves and no degree-2
    vertices, for ``k = 0..n_max`` (stars included)."""
    from math import comb

    # rooted trees with m labelled leaves and every internal node branching
    # at least twice; rooting at an extra leaf gives the unrooted count.
    # f[m] sums products of such trees over the set partitions of m leaves.
    t = [0, 1]
    f = [1, 1]
    for m in range(2, n_max):
        v = sum(comb(m - 1, k - 1) * t[k] * f[m - k] for k in range(1, m))
        t.append(v)
        f.append(2 * v)
    out = [0] * (n_max + 1)
    for k in range(2, n_max + 1):
        out[k] = t[k - 1]
    return out


def census_closed_form(n_leaves: int) -> int:
    """Poset size from the unrooted-tree counts: one least element plus every
    non-star tree on every leaf subset of size at least four."""
    from math import comb

    counts = unrooted_tree_counts(n_leaves)
    return 1 + sum(comb(n_leaves, k) * (counts[k] - 1) for k in range(4, n_leaves + 1))
