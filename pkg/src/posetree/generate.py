"""Seeded random trees for fuzzing and property checks."""

from __future__ import annotations

import numpy as np

from .tree import T0, Tree, canonicalize, mask_of


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an optional stream path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def splits_from_edges(edges: list[tuple[int, int]], leaf_nodes: dict[int, int]) -> list[int]:
    """Leaf-set side for every edge of an unrooted graph.

    ``edges`` are node pairs; ``leaf_nodes`` maps graph node to leaf id.
    For each edge the side away from the first endpoint is returned.
    """
    adj: dict[int, list[int]] = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    out = []
    for u, v in edges:
        seen = {u, v}
        todo = [v]
        side = 0
        while todo:
            x = todo.pop()
            if x in leaf_nodes:
                side |= 1 << leaf_nodes[x]
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
        out.append(side)
    return out


def random_binary_tree(rng: np.random.Generator, leaf_ids: list[int]) -> Tree:
    """Uniform random unrooted binary topology on ``leaf_ids`` (sequential edge insertion)."""
    if len(leaf_ids) < 4:
        return T0
    order = list(leaf_ids)
    rng.shuffle(order)
    # nodes 0..n-1 are leaves (by position in ``order``), the rest internal
    leaf_nodes = {i: order[i] for i in range(len(order))}
    centre = len(order)
    edges = [(centre, 0), (centre, 1), (centre, 2)]
    nxt = centre + 1
    for i in range(3, len(order)):
        k = int(rng.integers(len(edges)))
        u, v = edges[k]
        mid = nxt
        nxt += 1
        edges[k] = (u, mid)
        edges.append((mid, v))
        edges.append((mid, i))
    leaves = mask_of(order)
    return canonicalize(leaves, splits_from_edges(edges, leaf_nodes))


def random_tree(
    rng: np.random.Generator,
    n_taxa: int,
    min_leaves: int = 4,
    collapse_prob: float | None = None,
    leaf_prob: float | None = None,
) -> Tree:
    """Random element of the poset over ``n_taxa`` labels.

    A random leaf subset gets a random binary topology; each split is then
    collapsed independently.  ``None`` draws the probabilities themselves.
    """
    if leaf_prob is None:
        leaf_prob = float(rng.uniform(0.5, 1.0))
    if collapse_prob is None:
        collapse_prob = float(rng.uniform(0.0, 0.6))
    ids = [i for i in range(n_taxa) if rng.random() < leaf_prob]
    if len(ids) < min_leaves:
        extra = [i for i in range(n_taxa) if i not in ids]
        rng.shuffle(extra)
        ids = sorted(ids + extra[: min_leaves - len(ids)])
    t = random_binary_tree(rng, ids)
    if t.leaves == 0:
        return t
    kept = [s for s in t.splits if rng.random() >= collapse_prob]
    return canonicalize(t.leaves, kept)


def random_pair(rng: np.random.Generator, n_taxa: int) -> tuple[Tree, Tree]:
    """Two random trees; half the time the second is a perturbation of the first."""
    t1 = random_tree(rng, n_taxa)
    if rng.random() < 0.5:
        return t1, random_tree(rng, n_taxa)
    # perturb: regraft one leaf and drop some structure so the pair shares a lot
    base = random_binary_tree(rng, sorted(_ids(t1.leaves) if t1.leaves else range(n_taxa)))
    if t1.leaves:
        base = t1 if rng.random() < 0.3 else _mix(rng, t1, base)
    return t1, random_tree_near(rng, base, n_taxa)


def _ids(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def _mix(rng, t1: Tree, other: Tree) -> Tree:
    # keep the splits of ``t1`` that are compatible with a random part of ``other``
    from .tree import splits_compatible

    kept = [s for s in other.splits if rng.random() < 0.5]
    for s in t1.splits:
        if all(splits_compatible(s, k, t1.leaves) for k in kept):
            kept.append(s)
    return canonicalize(t1.leaves, set(kept))


def random_tree_near(rng: np.random.Generator, t: Tree, n_taxa: int) -> Tree:
    """Drop, add or keep leaves of ``t`` and collapse a few splits."""
    from .tree import restrict

    if t.leaves == 0:
        return random_tree(rng, n_taxa)
    ids = _ids(t.leaves)
    keep = [i for i in ids if rng.random() < 0.85]
    if len(keep) < 4:
        keep = ids
    r = restrict(t, mask_of(keep))
    if r.leaves == 0:
        return r
    kept = [s for s in r.splits if rng.random() < 0.85]
    return canonicalize(r.leaves, kept)
