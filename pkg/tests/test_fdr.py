import itertools
import math
from fractions import Fraction

import mpmath
import pytest

from posetree.consensus import SampleSet
from posetree.errors import EmptySample
from posetree.experiments import default_species, run_fdr_pipeline
from posetree.fdr import (
    FdrConfig,
    assumption2_estimate,
    discoveries,
    gamma,
    naive_fd,
    null_covering_pairs,
    select_fdr,
    telescoping_bound,
    threshold,
)
from posetree.generate import make_rng, random_pair
from posetree.msc import SimConfig, simulate_gene_trees
from posetree.subposet import SubposetDag, SubposetParams
from posetree.tree import T0, Universe, leq, restrict_splits
from posetree.similarity import rho_value


@pytest.fixture(scope="module")
def pipeline():
    sp = default_species(8, 0)
    uni = Universe(sp.taxa())
    ref = sp.topology(uni)
    d = simulate_gene_trees(sp, SimConfig(100, 1.0, 7), uni)
    run = run_fdr_pipeline(d, Fraction(1, 5), SubposetParams(), seed=3)
    return run, ref, sp, uni


def chain_and_fork(u):
    c1 = u.tree("ABCD", ["AB|CD"])
    c2 = u.tree("ABCE", ["AB|CE"])
    mid = u.tree("ABCDE", ["AB|CDE"])
    top = u.tree("ABCDE", ["AB|CDE", "ABC|DE"])
    return SubposetDag([c1, c2, mid, top], u.mask_of("ABCDE")), (c1, c2, mid, top)


# discoveries


def test_discoveries_examples(u):
    t = u.tree("ABCDEF", ["ABC|DEF"])
    dc = discoveries(t, t)
    assert (dc.td, dc.fd, dc.fdp) == (3, 0, 0)
    est = u.tree("ABCDEF", ["ABD|CEF"])
    ref = u.tree("ABCDEF", ["ABC|DEF"])
    dc = discoveries(est, ref)
    assert (dc.td, dc.fd, dc.fdp) == (1, 2, Fraction(2, 3))
    assert discoveries(T0, ref).fdp == 0


def test_misplaced_leaf_on_polytomy(u):
    # removing C from the estimate leaves a subtree of the reference
    est = u.tree("ABCDEFG", ["AB|CDEFG", "ABD|CEFG", "ABDE|CFG"])
    ref = u.tree("ABCDEFG", ["AC|BDEFG", "ABC|DEFG", "ABCD|EFG", "ABCDE|FG"])
    assert discoveries(est, ref).fd == 1
    assert naive_fd(est, ref) == 3
    assert naive_fd(ref, ref) == 0


def test_naive_count_can_undercount(u):
    est = u.tree("ABCDE", ["AB|CDE"])
    ref = u.tree("ABCDE", ["AC|BDE"])
    assert naive_fd(est, ref) == 1
    assert discoveries(est, ref).fd == 2


def test_naive_dominates_when_a_split_survives():
    # collapsing the unmatched splits leaves a common lower bound unless nothing survives
    rng = make_rng(30)
    seen = 0
    for _ in range(1000):
        est, ref = random_pair(rng, 7)
        if est.leaves == 0 or est.leaves & ~ref.leaves:
            continue
        if not set(est.splits) & restrict_splits(ref, est.leaves):
            continue
        seen += 1
        assert discoveries(est, ref).fd <= naive_fd(est, ref)
    assert seen > 100


def test_fd_zero_iff_below_reference():
    rng = make_rng(31)
    for _ in range(1000):
        a, b = random_pair(rng, 7)
        dc = discoveries(a, b)
        assert dc.td + dc.fd == a.rank
        assert (dc.fd == 0) == leq(a, b)
        assert 0 <= dc.fdp <= 1


# kappa and gamma


def test_kappa_chain(u):
    t1 = u.tree("ABCD", ["AB|CD"])
    t2 = u.tree("ABCDE", ["AB|CDE"])
    sub = SubposetDag([t1, t2], u.mask_of("ABCDE"))
    k = sub.kappa()
    assert k[t2] == 1 and k[t1] == 1


def test_kappa_fork(u):
    sub, (c1, c2, mid, top) = chain_and_fork(u)
    k = sub.kappa()
    assert (k[top], k[mid], k[c1], k[c2]) == (1, 2, 2, 2)


def test_threshold_spot_value():
    cfg = FdrConfig(Fraction(1, 5), 50)
    want = mpmath.mpf("0.5") + mpmath.sqrt(mpmath.log(6) / 50)
    assert abs(threshold(4, 8, 10, cfg) - float(want)) < 1e-12
    assert round(threshold(4, 8, 10, cfg), 4) == 0.6893


def test_threshold_clamps_at_one_minus_eta():
    cfg = FdrConfig(Fraction(1, 2), 50, Fraction(3, 10))
    assert threshold(1, 10, 10, cfg) == pytest.approx(0.7)
    assert threshold(1, 10, 10, FdrConfig(Fraction(1, 2), 50)) == 0.5


def test_config_validation():
    for bad in (dict(q=0, n2=5), dict(q=1, n2=5), dict(q=Fraction(1, 2), n2=0), dict(q=Fraction(1, 2), n2=5, eta=1)):
        with pytest.raises(ValueError):
            FdrConfig(**bad)


def test_kappa_and_gamma_monotone(pipeline):
    run, ref, _, _ = pipeline
    sub = run.subposet
    cfg = FdrConfig(Fraction(1, 5), 50)
    k = sub.kappa()
    kmax = max(k.values())
    hi = 0.5 + math.sqrt(math.log(kmax * sub.r_max / float(cfg.q)) / cfg.n2)
    for a, b in sub.edges:
        if a.leaves:
            assert k[b] <= k[a]
            assert gamma(b, cfg, sub) <= gamma(a, cfg, sub) + 1e-15
        assert 0.5 <= gamma(b, cfg, sub) <= hi


# selection


def test_select_returns_top_of_clean_chain(u):
    t1 = u.tree("ABCD", ["AB|CD"])
    t2 = u.tree("ABCDE", ["AB|CDE"])
    t3 = u.tree("ABCDE", ["AB|CDE", "ABC|DE"])
    sub = SubposetDag([t1, t2, t3], u.mask_of("ABCDE"))
    d2 = SampleSet([t3] * 50, u)
    sel = select_fdr(sub, d2, FdrConfig(Fraction(1, 5), 50))
    assert sel.tree == t3
    assert all(s.accepted for s in sel.trace)


def test_select_tiny_q_gives_least_element(u):
    t1 = u.tree("ABCD", ["AB|CD"])
    t2 = u.tree("ABCDE", ["AB|CDE"])
    sub = SubposetDag([t1, t2], u.mask_of("ABCDE"))
    d2 = SampleSet([t2] * 3, u)
    sel = select_fdr(sub, d2, FdrConfig(Fraction(1, 10**6), 3))
    assert sel.tree is T0
    assert sel.trace and not any(s.accepted for s in sel.trace)


def test_gate_replay(pipeline):
    run, _, _, uni = pipeline
    sub = run.subposet
    assert run.tree.rank > 0
    cfg = FdrConfig(Fraction(1, 5), 50)
    accepted = [s for s in run.selection.trace if s.accepted]
    assert accepted[-1].candidate == run.tree
    for s in accepted:
        assert s.score >= Fraction(s.gamma)
        assert s.gamma == gamma(s.candidate, cfg, sub)


def test_selection_path_is_covering_chain(pipeline):
    run, _, _, _ = pipeline
    acc = [s for s in run.selection.trace if s.accepted]
    prev = T0
    for s in acc:
        assert s.current == prev and (s.current, s.candidate) in set(run.subposet.edges)
        prev = s.candidate


# diagnostics


def test_null_pairs_edge_cases(u):
    sub, (c1, c2, mid, top) = chain_and_fork(u)
    assert null_covering_pairs(sub, top) == set()
    assert null_covering_pairs(sub, T0) == set(sub.edges)


def test_null_pairs_add_false_discoveries(pipeline):
    run, ref, _, _ = pipeline
    sub = run.subposet
    nulls = null_covering_pairs(sub, ref)
    rng = make_rng(2)
    for reference in [ref] + [random_pair(rng, 8)[0] for _ in range(5)]:
        nulls = null_covering_pairs(sub, reference)
        for a, b in sub.edges:
            assert ((a, b) in nulls) == (discoveries(b, reference).fd > discoveries(a, reference).fd)


def _paths(sub, t=T0, acc=None):
    acc = (acc or []) + [t]
    ups = sub.covers_of(t)
    if not ups:
        yield acc
    for v in ups:
        yield from _paths(sub, v, acc)


def test_telescoping_bound(pipeline, u):
    run, ref, _, _ = pipeline
    subs = [run.subposet, chain_and_fork(u)[0]]
    rng = make_rng(3)
    for sub in subs:
        refs = [ref, T0] + [random_pair(rng, 8)[0] for _ in range(3)]
        for path in itertools.islice(_paths(sub), 200):
            for reference in refs:
                for k in range(1, len(path)):
                    assert discoveries(path[k], reference).fd <= telescoping_bound(path[: k + 1], reference)


def test_assumption2_constant_sampler(pipeline):
    run, ref, _, _ = pipeline
    other = random_pair(make_rng(4), 8)[0]
    est = assumption2_estimate(run.subposet, other, lambda i: other, 5)
    assert est in (None, 1)
    with pytest.raises(EmptySample):
        assumption2_estimate(run.subposet, ref, lambda i: ref, 0)


def test_assumption2_under_coalescent(pipeline):
    run, ref, sp, uni = pipeline
    draws = simulate_gene_trees(sp, SimConfig(500, 2.0, 123), uni)
    est = assumption2_estimate(run.subposet, ref, lambda i: draws[i], len(draws))
    assert est is None or est >= Fraction(1, 2)


def test_rho_steps_by_at_most_one_on_covers(pipeline):
    run, ref, _, _ = pipeline
    for a, b in run.subposet.edges:
        assert 0 <= rho_value(b, ref) - rho_value(a, ref) <= 1
