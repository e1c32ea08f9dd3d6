"""End-to-end pipelines: sample splitting, FDR-controlled selection, simulation sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .consensus import SampleSet, StableEstimate, StepLimits, estimate_stable
from .fdr import FdrConfig, FdrSelection, discoveries, select_fdr
from .generate import make_rng
from .msc import LengthLaw, SimConfig, SpeciesTree, random_species_tree, simulate_gene_trees
from .subposet import SubposetDag, SubposetParams, anchor_rank, build_subposet, validate_subposet
from .tree import Tree, Universe

SPLIT_STREAM = 0x5EED


def split_samples(d: SampleSet, fraction, seed: int) -> tuple[SampleSet, SampleSet, list[int]]:
    """Seeded shuffle, then the first ``fraction`` of samples forms the first part."""
    fraction = Fraction(fraction)
    if not 0 < fraction < 1:
        raise ValueError("split fraction must lie in (0, 1)")
    n = len(d)
    n1 = int(fraction * n)
    if n1 < 1 or n1 >= n:
        raise ValueError("split leaves one part empty")
    perm = [int(i) for i in make_rng(seed, SPLIT_STREAM).permutation(n)]
    return d.subset(perm[:n1]), d.subset(perm[n1:]), perm


@dataclass
class FdrRun:
    stable: StableEstimate
    r_anchor: int
    subposet: SubposetDag
    selection: FdrSelection
    permutation: list[int] = field(default_factory=list)

    @property
    def tree(self) -> Tree:
        return self.selection.tree


def fdr_from_split(
    d1: SampleSet,
    d2: SampleSet,
    cfg: FdrConfig,
    params: SubposetParams,
    stable: StableEstimate | None = None,
    limits: StepLimits | None = None,
) -> FdrRun:
    """Stable tree on ``d1``, subposet on ``d1``, gated selection on ``d2``."""
    if stable is None:
        stable = estimate_stable(d1, params.alpha, limits)
    r_anchor = anchor_rank(cfg.q, cfg.eta, cfg.n2, params)
    sub = build_subposet(d1, stable.tree, r_anchor, params)
    check = validate_subposet(sub)
    if not check:
        raise RuntimeError("subposet failed validation: " + "; ".join(check.problems))
    selection = select_fdr(sub, d2, cfg)
    return FdrRun(stable, r_anchor, sub, selection)


def run_fdr_pipeline(
    d: SampleSet,
    q,
    params: SubposetParams,
    eta=Fraction(1, 2),
    split=Fraction(1, 2),
    seed: int = 0,
    limits: StepLimits | None = None,
) -> FdrRun:
    d1, d2, perm = split_samples(d, split, seed)
    cfg = FdrConfig(Fraction(q), len(d2), Fraction(eta))
    run = fdr_from_split(d1, d2, cfg, params, limits=limits)
    run.permutation = perm
    return run


@dataclass
class ReplicateResult:
    replicate: int
    n: int
    sigma: float
    q: Fraction
    td: int
    fd: int
    fdp: Fraction
    rank: int
    stable_rank: int
    r_anchor: int
    subposet_size: int
    stabilities: tuple[Fraction, ...] = ()


def simulation_replicates(
    species: SpeciesTree,
    n: int,
    sigma: float,
    qs: Sequence,
    replicates: int,
    seed: int,
    params: SubposetParams,
    eta=Fraction(1, 2),
) -> list[ReplicateResult]:
    """Gene-tree replicates scored against the species topology.

    The stable tree depends only on the first half of the data, so it is
    computed once per replicate and shared across ``qs``.
    """
    out = []
    for rep in range(replicates):
        universe = Universe(species.taxa())
        reference = species.topology(universe)
        d = simulate_gene_trees(species, SimConfig(n, sigma, _rep_seed(seed, rep)), universe)
        d1, d2, _ = split_samples(d, Fraction(1, 2), _rep_seed(seed, rep))
        stable = estimate_stable(d1, params.alpha)
        for q in qs:
            cfg = FdrConfig(Fraction(q), len(d2), Fraction(eta))
            run = fdr_from_split(d1, d2, cfg, params, stable=stable)
            dc = discoveries(run.tree, reference)
            out.append(
                ReplicateResult(
                    rep, n, sigma, Fraction(q), dc.td, dc.fd, dc.fdp, run.tree.rank,
                    stable.tree.rank, run.r_anchor, len(run.subposet),
                    tuple(e.stability for e in stable.report.entries),
                )
            )
    return out


def _rep_seed(seed: int, rep: int) -> int:
    # distinct 63-bit seed per replicate derived from the run seed
    return int(make_rng(seed, rep).integers(1 << 62))


@dataclass
class SweepRow:
    n: int
    sigma: float
    q: Fraction
    replicates: int
    mean_td: Fraction
    mean_fd: Fraction
    mean_fdp: Fraction
    zero_fd: int
    max_rank: int


def summarize(results: list[ReplicateResult], max_rank: int) -> list[SweepRow]:
    groups: dict[tuple, list[ReplicateResult]] = {}
    for r in results:
        groups.setdefault((r.n, r.sigma, r.q), []).append(r)
    rows = []
    for (n, sigma, q), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        k = len(rs)
        rows.append(
            SweepRow(
                n, sigma, q, k,
                Fraction(sum(r.td for r in rs), k),
                Fraction(sum(r.fd for r in rs), k),
                sum((r.fdp for r in rs), Fraction(0)) / k,
                sum(1 for r in rs if r.fd == 0),
                max_rank,
            )
        )
    return rows


def sweep(
    species: SpeciesTree,
    ns: Sequence[int],
    sigmas: Sequence[float],
    qs: Sequence,
    replicates: int,
    seed: int,
    params: SubposetParams,
    eta=Fraction(1, 2),
) -> tuple[list[SweepRow], list[ReplicateResult]]:
    results = []
    for n in ns:
        for sigma in sigmas:
            results.extend(simulation_replicates(species, n, sigma, qs, replicates, seed, params, eta))
    universe = Universe(species.taxa())
    return summarize(results, species.topology(universe).rank), results


def default_species(num_leaves: int, seed: int) -> SpeciesTree:
    return random_species_tree(num_leaves, seed, LengthLaw())
