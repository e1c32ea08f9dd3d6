"""Restricted search space for the FDR-controlled selector.

The subposet is a chain through the data-driven stable tree up to a fully
resolved tree, joined at an anchor rank to a k-ary greedy bifurcation that
fans downward to the least element.  Its edges are every covering pair
between its nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .consensus import SampleSet
from .errors import EmptySample
from .tree import (
    T0,
    Tree,
    Universe,
    canonicalize,
    covers,
    enumerate_covered,
    enumerate_covers,
    is_maximal,
    leq,
)


@dataclass(frozen=True)
class SubposetParams:
    tau: Fraction = Fraction(3, 4)
    k: int = 2
    anchor_cap: int = 12
    alpha: Fraction = Fraction(17, 20)

    def __post_init__(self):
        if not Fraction(1, 2) < Fraction(self.tau) <= 1:
            raise ValueError("tau must lie in (1/2, 1]")
        if self.k < 2:
            raise ValueError("branch factor must be at least 2")
        if self.anchor_cap < 0:
            raise ValueError("anchor cap must be non-negative")


@dataclass
class ConstructionStep:
    phase: str
    source: Tree
    chosen: tuple[Tree, ...]
    scores: tuple[Fraction, ...]


class SubposetDag:
    """Node set plus covering edges, with cached maximal set and top rank."""

    def __init__(self, nodes, taxa: int, construction_edges=(), steps=()):
        uniq = set(nodes)
        uniq.add(T0)
        self.nodes: tuple[Tree, ...] = tuple(sorted(uniq, key=Tree.sort_key))
        self.taxa = taxa
        self.construction_edges = tuple(construction_edges)
        self.steps = list(steps)
        by_rank: dict[int, list[Tree]] = {}
        for t in self.nodes:
            by_rank.setdefault(t.rank, []).append(t)
        edges = []
        for t in self.nodes:
            for u in by_rank.get(t.rank + 1, ()):
                if covers(t, u):
                    edges.append((t, u))
        self._set_edges(edges)

    def _set_edges(self, edges):
        self.edges: tuple[tuple[Tree, Tree], ...] = tuple(edges)
        self.up: dict[Tree, list[Tree]] = {t: [] for t in self.nodes}
        self.down: dict[Tree, list[Tree]] = {t: [] for t in self.nodes}
        for a, b in self.edges:
            self.up.setdefault(a, []).append(b)
            self.down.setdefault(b, []).append(a)
        self.maximal = tuple(t for t in self.nodes if not self.up.get(t))
        self.r_max = max(t.rank for t in self.nodes)
        self._kappa = None

    def __contains__(self, t: Tree) -> bool:
        return t in self.up

    def __len__(self) -> int:
        return len(self.nodes)

    def covers_of(self, t: Tree) -> list[Tree]:
        return list(self.up.get(t, ()))

    def covered_by(self, t: Tree) -> list[Tree]:
        return list(self.down.get(t, ()))

    def kappa(self) -> dict[Tree, int]:
        """Multiplicity factor of every node, top-down by rank."""
        if self._kappa is None:
            out: dict[Tree, int] = {}
            m = len(self.maximal)
            for t in sorted(self.nodes, key=lambda x: (-x.rank, x.sort_key())):
                below = len(self.down[t])
                if not self.up[t]:
                    out[t] = m * below
                else:
                    out[t] = below * max(out[p] for p in self.up[t])
            self._kappa = out
        return self._kappa

    def to_json(self, universe: Universe) -> dict:
        from .newick import write_newick

        index = {t: i for i, t in enumerate(self.nodes)}
        kap = self.kappa()
        return {
            "taxa": list(universe.taxa),
            "nodes": [
                {
                    "id": index[t],
                    "rank": t.rank,
                    "kappa": kap[t],
                    "leaves": universe.names_of(t.leaves),
                    "splits": [universe.names_of(s) for s in t.splits],
                    "newick": write_newick(t, universe),
                }
                for t in self.nodes
            ],
            "edges": [[index[a], index[b]] for a, b in self.edges],
            "construction_edges": [[index[a], index[b]] for a, b in self.construction_edges],
            "maximal": [index[t] for t in self.maximal],
            "r_max": self.r_max,
        }

    @classmethod
    def from_json(cls, doc: dict, universe: Universe) -> "SubposetDag":
        for name in doc["taxa"]:
            universe.intern(name)
        nodes = [
            canonicalize(universe.mask_of(rec["leaves"]), [universe.mask_of(s) for s in rec["splits"]])
            for rec in doc["nodes"]
        ]
        taxa = universe.mask
        cons = [(nodes[a], nodes[b]) for a, b in doc.get("construction_edges", [])]
        return cls(nodes, taxa, cons)


def anchor_rank(q, eta, n2: int, params: SubposetParams) -> int:
    """Rank below which the subposet fans out, clamped to ``[0, anchor_cap]``."""
    k = params.k
    tau = float(params.tau)
    eta = float(eta)
    raw = math.log(float(q), k) + n2 * (tau - eta) ** 2 * math.log(math.e, k) + 1
    return max(0, min(params.anchor_cap, math.floor(raw)))


def _best_up(t: Tree, d: SampleSet) -> tuple[Tree, Fraction] | None:
    cands = enumerate_covers(t, d.taxa)
    if not cands:
        return None
    base = d.similarities(t)
    n = len(d)
    best = min(((-Fraction(d.count_gains(base, v), n), v.sort_key(), v) for v in cands))
    return best[2], -best[0]


def _top_down(t: Tree, d: SampleSet, k: int) -> list[tuple[Tree, Fraction]]:
    cands = enumerate_covered(t)
    if not cands:
        return []
    upper = d.similarities(t)
    n = len(d)
    ranked = sorted(
        ((Fraction(d.count_drops(u, t, upper), n), u) for u in cands),
        key=lambda p: (-p[0], p[1].sort_key()),
    )
    return [(u, s) for s, u in ranked[:k]]


def build_subposet(d1: SampleSet, stable: Tree, r_anchor: int, params: SubposetParams) -> SubposetDag:
    """Chain-plus-bifurcation subposet around ``stable``, scored on ``d1``."""
    if len(d1) == 0:
        raise EmptySample("no samples to build the subposet from")
    taxa = d1.taxa
    nodes = {T0}
    cons: list[tuple[Tree, Tree]] = []
    steps: list[ConstructionStep] = []

    def climb(start: Tree, stop_rank: int | None, phase: str) -> list[Tree]:
        chain = [start]
        t = start
        while not is_maximal(t, taxa) and (stop_rank is None or t.rank < stop_rank):
            nxt = _best_up(t, d1)
            if nxt is None:
                break
            v, s = nxt
            steps.append(ConstructionStep(phase, t, (v,), (s,)))
            chain.append(v)
            t = v
        return chain

    def add_chain(chain: list[Tree]):
        nodes.update(chain)
        cons.extend(zip(chain, chain[1:]))

    def bifurcate(top: Tree):
        frontier = [top]
        seen = {top}
        while frontier:
            t = frontier.pop(0)
            kids = _top_down(t, d1, params.k)
            if kids:
                steps.append(ConstructionStep("bifurcate", t, tuple(u for u, _ in kids), tuple(s for _, s in kids)))
            for u, _ in kids:
                nodes.add(u)
                cons.append((u, t))
                if u not in seen:
                    seen.add(u)
                    frontier.append(u)

    if stable.rank > r_anchor:
        add_chain(climb(stable, None, "up"))
        t = stable
        down = [t]
        while t.rank > r_anchor:
            kids = _top_down(t, d1, 1)
            if not kids:
                break
            u, s = kids[0]
            steps.append(ConstructionStep("down", t, (u,), (s,)))
            down.append(u)
            t = u
        nodes.update(down)
        cons.extend((b, a) for a, b in zip(down, down[1:]))
        bifurcate(t)
    else:
        # climb only to locate the anchor; trees passed on the way stay out
        anchor = climb(stable, r_anchor, "locate")[-1]
        add_chain(climb(anchor, None, "up"))
        bifurcate(anchor)

    return SubposetDag(nodes, taxa, cons, steps)


@dataclass
class Validation:
    ok: bool
    problems: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def validate_subposet(sub: SubposetDag) -> Validation:
    problems = []
    nodes = set(sub.nodes)
    if T0 not in nodes:
        problems.append("least element missing")
    for a, b in sub.edges:
        if a not in nodes or b not in nodes:
            problems.append("edge endpoint outside node set")
            continue
        if b.rank != a.rank + 1:
            problems.append(f"rank gap {b.rank - a.rank} on an edge")
        if not covers(a, b):
            problems.append("edge is not a covering pair")
    edge_set = set(sub.edges)
    for a, b in sub.construction_edges:
        if (a, b) not in edge_set:
            problems.append("construction edge missing from the edge set")
    expected = set()
    for a in sub.nodes:
        for b in sub.nodes:
            if b.rank == a.rank + 1 and covers(a, b):
                expected.add((a, b))
    if expected != edge_set:
        problems.append("edge set differs from the covering relation on the nodes")
    # reachability from T0, also catches cycles since ranks grow on every edge
    if T0 in nodes:
        seen = {T0}
        todo = [T0]
        while todo:
            t = todo.pop()
            for u in sub.up.get(t, ()):
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
        if seen != nodes:
            problems.append(f"{len(nodes - seen)} nodes unreachable from the least element")
    return Validation(not problems, problems)


def induced_gaps(sub: SubposetDag) -> list[tuple[Tree, Tree]]:
    """Comparable node pairs more than one rank apart with no node between them.

    Such pairs are covering pairs of the induced order that are not covering
    pairs of the full poset; bifurcating branches can produce them.
    """
    out = []
    for a in sub.nodes:
        for b in sub.nodes:
            if b.rank > a.rank + 1 and leq(a, b):
                if not any(a.rank < c.rank < b.rank and leq(a, c) and leq(c, b) for c in sub.nodes):
                    out.append((a, b))
    return out
