"""Gene trees under the multispecies coalescent, one lineage per species.

Every gene tree ``i`` of a run draws from its own Philox stream keyed by
``(seed, i)``, so output does not depend on generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .consensus import SampleSet
from .generate import make_rng
from .newick import Node, RootedParseTree, parse_newick, write_rooted
from .tree import Tree, Universe, canonicalize

BIG_LENGTH = 1e6


@dataclass
class SpeciesTree:
    """Rooted species tree; node 0 is the root and children follow parents.

    ``lengths[i]`` is the length of the branch above node ``i`` in
    coalescent units (ignored for the root).
    """

    children: list[list[int]]
    lengths: list[float]
    names: list[str | None]

    def __post_init__(self):
        for i, ch in enumerate(self.children):
            for c in ch:
                if c <= i:
                    raise ValueError("children must follow their parent")
        for v in self.lengths:
            if not math.isfinite(v) or v < 0:
                raise ValueError("branch lengths must be finite and non-negative")
        leaves = [self.names[i] for i in self.leaf_nodes()]
        if any(not n for n in leaves) or len(set(leaves)) != len(leaves):
            raise ValueError("leaf names must be present and unique")

    def leaf_nodes(self) -> list[int]:
        return [i for i, ch in enumerate(self.children) if not ch]

    def taxa(self) -> list[str]:
        return [self.names[i] for i in self.leaf_nodes()]

    @classmethod
    def from_newick(cls, text: str) -> "SpeciesTree":
        rt = parse_newick(text)
        # renumber in preorder so children follow parents
        order = []
        todo = [0]
        while todo:
            i = todo.pop()
            order.append(i)
            todo.extend(reversed(rt.nodes[i].children))
        pos = {old: new for new, old in enumerate(order)}
        children = [[pos[c] for c in rt.nodes[i].children] for i in order]
        lengths = [rt.nodes[i].length or 0.0 for i in order]
        names = [rt.nodes[i].label if not rt.nodes[i].children else None for i in order]
        return cls(children, lengths, names)

    def to_newick(self) -> str:
        nodes = []
        parent = [None] * len(self.children)
        for i, ch in enumerate(self.children):
            for c in ch:
                parent[c] = i
        for i, ch in enumerate(self.children):
            nodes.append(Node(parent[i], self.names[i], None if i == 0 else self.lengths[i], list(ch)))
        return write_rooted(RootedParseTree(nodes))

    def topology(self, universe: Universe) -> Tree:
        """Unrooted topology over the species names."""
        below = self._clusters(universe)
        leaves = below[0]
        return canonicalize(leaves, [below[i] for i, ch in enumerate(self.children) if ch and i])

    def _clusters(self, universe: Universe) -> list[int]:
        below = [0] * len(self.children)
        for i in range(len(self.children) - 1, -1, -1):
            if not self.children[i]:
                below[i] = 1 << universe.intern(self.names[i])
            else:
                m = 0
                for c in self.children[i]:
                    m |= below[c]
                below[i] = m
        return below


def scale_branches(sp: SpeciesTree, sigma: float) -> SpeciesTree:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return SpeciesTree([list(c) for c in sp.children], [v * sigma for v in sp.lengths], list(sp.names))


@dataclass(frozen=True)
class SimConfig:
    n: int
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def coalesce_once(sp: SpeciesTree, leaf_bits: list[int], rng) -> list[int]:
    """One gene genealogy; returns the clusters of its internal nodes."""
    n = len(sp.children)
    lineages: list[list[int] | None] = [None] * n
    clusters: list[int] = []
    for i in range(n - 1, -1, -1):
        if not sp.children[i]:
            lins = [leaf_bits[i]]
        else:
            lins = []
            for c in sp.children[i]:
                lins.extend(lineages[c])
                lineages[c] = None
        remaining = math.inf if i == 0 else sp.lengths[i]
        while len(lins) > 1:
            j = len(lins)
            rate = j * (j - 1) / 2
            wait = rng.exponential(1.0 / rate)
            if wait > remaining:
                break
            remaining -= wait
            a = int(rng.integers(j))
            b = int(rng.integers(j - 1))
            if b >= a:
                b += 1
            merged = lins[a] | lins[b]
            clusters.append(merged)
            for k in sorted((a, b), reverse=True):
                lins.pop(k)
            lins.append(merged)
        lineages[i] = lins
    return clusters


def simulate_gene_trees(sp: SpeciesTree, cfg: SimConfig, universe: Universe | None = None) -> SampleSet:
    """``cfg.n`` unrooted gene-tree topologies for ``sp`` scaled by ``cfg.sigma``."""
    universe = universe if universe is not None else Universe()
    scaled = scale_branches(sp, cfg.sigma) if cfg.sigma != 1 else sp
    leaf_bits = [0] * len(sp.children)
    all_leaves = 0
    for i in sp.leaf_nodes():
        leaf_bits[i] = 1 << universe.intern(sp.names[i])
        all_leaves |= leaf_bits[i]
    trees = []
    for k in range(cfg.n):
        rng = make_rng(cfg.seed, k)
        clusters = coalesce_once(scaled, leaf_bits, rng)
        trees.append(canonicalize(all_leaves, clusters))
    return SampleSet(trees, universe)


@dataclass(frozen=True)
class LengthLaw:
    """Lognormal branch lengths given by arithmetic mean and variance."""

    mean: float = 2.0
    variance: float = 4.0
    round_to: float = 0.5

    @property
    def log_params(self) -> tuple[float, float]:
        s2 = math.log(1 + self.variance / self.mean**2)
        return math.log(self.mean) - s2 / 2, math.sqrt(s2)

    def draw(self, rng) -> float:
        mu, s = self.log_params
        x = float(rng.lognormal(mu, s))
        if self.round_to:
            step = self.round_to
            x = math.floor(x / step + 0.5) * step
        return x


def random_species_tree(
    num_leaves: int,
    seed: int,
    law: LengthLaw | None = None,
    names: list[str] | None = None,
) -> SpeciesTree:
    """Uniform random rooted binary species tree with lognormal branch lengths."""
    if num_leaves < 3:
        raise ValueError("need at least three species")
    law = law or LengthLaw()
    if names is None:
        names = default_names(num_leaves)
    rng = make_rng(seed)
    # parent links over a growing rooted tree; node 0 is the first leaf
    parent: list[int | None] = [None]
    label: list[str | None] = [names[0]]
    root = 0
    for k in range(1, num_leaves):
        nodes = len(parent)
        # every node owns the edge above it, the root's edge included
        target = int(rng.integers(nodes))
        joint = nodes + 1
        parent.append(joint)
        label.append(names[k])
        parent.append(parent[target])
        label.append(None)
        parent[target] = joint
        if target == root:
            root = joint
    kids: dict[int, list[int]] = {i: [] for i in range(len(parent))}
    for i, p in enumerate(parent):
        if p is not None:
            kids[p].append(i)
    # preorder renumbering, children ordered by first appearance
    order = []
    todo = [root]
    while todo:
        i = todo.pop()
        order.append(i)
        todo.extend(reversed(kids[i]))
    pos = {old: new for new, old in enumerate(order)}
    children = [[pos[c] for c in kids[i]] for i in order]
    lengths = [0.0] + [law.draw(rng) for _ in order[1:]]
    return SpeciesTree(children, lengths, [label[i] for i in order])


def default_names(n: int) -> list[str]:
    if n <= 26:
        return [chr(ord("A") + i) for i in range(n)]
    width = len(str(n))
    return [f"t{i + 1:0{width}d}" for i in range(n)]
