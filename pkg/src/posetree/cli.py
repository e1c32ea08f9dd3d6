"""Command-line interface.

Exit codes: 0 success, 1 verification mismatch or round cap hit,
2 unreadable or malformed input, 3 invalid parameters.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .consensus import SampleSet, StepLimits, estimate_stable, stability_report
from .errors import DuplicateLeaf, EmptySample, ParseError, StepLimitExceeded, UniverseTooLarge
from .newick import format_fraction, parse_topology, read_sample_lines, score_rows, write_newick
from .tree import Universe

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_PARAMS = 3

THREADS_ENV = "POSETREE_THREADS"


class ParamError(Exception):
    pass


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _csv(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except (ValueError, ZeroDivisionError):
            raise argparse.ArgumentTypeError(f"bad list: {text!r}") from None

    return parse


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _write_text(path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _manifest(args, inputs: list, started: float, extra: dict | None = None):
    target = getattr(args, "manifest", None)
    if target is None:
        out = getattr(args, "out", None)
        if out is None or str(out) == "-":
            return
        target = str(out) + ".manifest.json"
    params = {
        k: _jsonable(v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "manifest")
    }
    doc = {
        "command": args.command,
        "parameters": params,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "seconds": round(time.perf_counter() - started, 3),
    }
    if extra:
        doc.update(extra)
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_samples(path, threads: int, universe: Universe | None = None) -> SampleSet:
    with open(path, encoding="utf-8") as fh:
        trees, universe = read_sample_lines(fh, universe)
    return SampleSet(trees, universe, threads=threads)


def _check_unit(name: str, v: Fraction, low_open=True, high_closed=True):
    lo_ok = v > 0 if low_open else v >= 0
    hi_ok = v <= 1 if high_closed else v < 1
    if not (lo_ok and hi_ok):
        raise ParamError(f"{name} out of range: {v}")


def _tree_record(t, universe, taxa=None):
    return write_newick(t, universe, taxa if t.leaves == 0 else None)


def _trace_lines(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _stable_trace(est, universe) -> list[dict]:
    out = []
    for s in est.trace:
        out.append(
            {
                "round": s.round,
                "action": s.action,
                "current": write_newick(s.current, universe),
                "candidate": write_newick(s.candidate, universe) if s.candidate is not None else None,
                "score": _jsonable(s.score) if s.score is not None else None,
                "candidates": s.n_candidates,
                "removed": [universe.format_feature(s.candidate, f) for f in s.removed],
                "result": write_newick(s.result, universe) if s.result is not None else None,
            }
        )
    return out


def _write_scores_file(report, universe, path, alpha=None, figure=None, title=None):
    text = "\n".join(score_rows(report, universe)) + "\n"
    _write_text(path, text)
    if figure:
        from .plotting import stability_figure

        names = [universe.format_feature(report.tree, e.feature) for e in report.entries]
        stability_figure(names, [e.kind for e in report.entries], [e.stability for e in report.entries], figure, alpha, title)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_rho(args) -> int:
    from .similarity import rho

    universe = Universe()
    with open(args.file_a, encoding="utf-8") as fh:
        a, universe = read_sample_lines(fh, universe)
    with open(args.file_b, encoding="utf-8") as fh:
        b, universe = read_sample_lines(fh, universe)
    if len(a) != len(b) and 1 not in (len(a), len(b)):
        raise ParamError("files must hold the same number of trees, or one tree")
    n = max(len(a), len(b))
    rows = ["index\trho\twitness"]
    for i in range(n):
        t1 = a[i if len(a) > 1 else 0]
        t2 = b[i if len(b) > 1 else 0]
        r = rho(t1, t2)
        rows.append(f"{i + 1}\t{r.rho}\t{write_newick(r.witness, universe)}")
    _write_text(args.out, "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_stable(args) -> int:
    started = time.perf_counter()
    _check_unit("alpha", args.alpha)
    d = _load_samples(args.input, args.threads)
    limits = StepLimits(args.max_rounds, cumulative=not args.single_removal)
    try:
        est = estimate_stable(d, args.alpha, limits)
        code = EXIT_OK
    except StepLimitExceeded as e:
        est = e.partial
        code = EXIT_MISMATCH
        print(f"error: {e}", file=sys.stderr)
    u = d.universe
    _write_text(args.out, _tree_record(est.tree, u, d.taxa) + "\n")
    if args.scores or args.figure:
        _write_scores_file(est.report, u, args.scores or os.devnull, args.alpha, args.figure, "stable tree")
    if args.trace:
        _write_text(args.trace, _trace_lines(_stable_trace(est, u)))
    _manifest(args, [args.input], started, {"rank": est.tree.rank})
    return code


def cmd_fdr(args) -> int:
    from .experiments import fdr_from_split, split_samples
    from .fdr import FdrConfig, discoveries
    from .subposet import SubposetParams

    started = time.perf_counter()
    _check_unit("q", args.q, high_closed=False)
    _check_unit("alpha", args.alpha)
    _check_unit("eta", args.eta, high_closed=False)
    if not 0 < args.split < 1:
        raise ParamError("split must lie in (0, 1)")
    try:
        params = SubposetParams(args.tau, args.k, args.anchor_cap, args.alpha)
    except ValueError as e:
        raise ParamError(str(e)) from None
    d = _load_samples(args.input, args.threads)
    try:
        d1, d2, perm = split_samples(d, args.split, args.seed)
    except ValueError as e:
        raise ParamError(str(e)) from None
    cfg = FdrConfig(args.q, len(d2), args.eta)
    limits = StepLimits(args.max_rounds)
    try:
        run = fdr_from_split(d1, d2, cfg, params, limits=limits)
    except StepLimitExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    u = d.universe
    sel = run.selection
    _write_text(args.out, _tree_record(sel.tree, u, d.taxa) + "\n")
    if args.trace:
        recs = [
            {
                "round": s.round,
                "current": write_newick(s.current, u),
                "candidate": write_newick(s.candidate, u),
                "score": _jsonable(s.score),
                "gamma": s.gamma,
                "accept": s.accepted,
                "failed_pair": [write_newick(x, u) for x in s.failed_pair] if s.failed_pair else None,
            }
            for s in sel.trace
        ]
        _write_text(args.trace, _trace_lines(recs))
    if args.subposet_out:
        with open(args.subposet_out, "w", encoding="utf-8") as fh:
            json.dump(run.subposet.to_json(u), fh, indent=1, sort_keys=True)
            fh.write("\n")
    extra = {
        "permutation": perm,
        "n1": len(d1),
        "n2": len(d2),
        "r_anchor": run.r_anchor,
        "stable_tree": write_newick(run.stable.tree, u, d.taxa if run.stable.tree.leaves == 0 else None),
        "rank": sel.tree.rank,
    }
    inputs = [args.input]
    if args.reference:
        ref = parse_topology(Path(args.reference).read_text(encoding="utf-8").strip().splitlines()[0], u)
        dc = discoveries(sel.tree, ref)
        extra["discoveries"] = {"td": dc.td, "fd": dc.fd, "fdp": _jsonable(dc.fdp)}
        inputs.append(args.reference)
        print(f"td\t{dc.td}\nfd\t{dc.fd}\nfdp\t{format_fraction(dc.fdp)}", file=sys.stderr)
    _manifest(args, inputs, started, extra)
    return EXIT_OK


def cmd_score(args) -> int:
    started = time.perf_counter()
    d = _load_samples(args.input, args.threads)
    u = d.universe
    with open(args.tree, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise EmptySample("tree file is empty")
    t = parse_topology(lines[0], u)
    report = stability_report(t, d)
    _write_scores_file(report, u, args.scores, args.alpha, args.figure, "feature stability")
    _manifest(args, [args.input, args.tree], started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .msc import SimConfig, SpeciesTree, simulate_gene_trees

    started = time.perf_counter()
    if args.n < 1 or not args.sigma > 0:
        raise ParamError("need n >= 1 and sigma > 0")
    text = Path(args.species).read_text(encoding="utf-8").strip()
    try:
        sp = SpeciesTree.from_newick(text.splitlines()[0] if text else "")
    except ValueError as e:
        raise ParamError(f"bad species tree: {e}") from None
    u = Universe(sp.taxa())
    d = simulate_gene_trees(sp, SimConfig(args.n, float(args.sigma), args.seed), u)
    _write_text(args.out, "".join(write_newick(t, u, d.taxa if t.leaves == 0 else None) + "\n" for t in d.trees))
    _manifest(args, [args.species], started)
    return EXIT_OK


def cmd_random_species(args) -> int:
    from .msc import LengthLaw, random_species_tree

    started = time.perf_counter()
    if args.leaves < 3:
        raise ParamError("need at least three leaves")
    if not (args.mean > 0 and args.variance > 0):
        raise ParamError("mean and variance must be positive")
    sp = random_species_tree(args.leaves, args.seed, LengthLaw(float(args.mean), float(args.variance)))
    _write_text(args.out, sp.to_newick() + "\n")
    _manifest(args, [], started)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .tree import census_closed_form, count_all

    if args.leaves is None and args.rho_fuzz is None:
        raise ParamError("give --leaves and/or --rho-fuzz")
    ok = True
    if args.leaves is not None:
        if not 0 <= args.leaves <= 8:
            raise ParamError("--leaves must be between 0 and 8")
        t0 = time.perf_counter()
        got = count_all(args.leaves)
        secs = time.perf_counter() - t0
        closed = census_closed_form(args.leaves)
        print(got)
        print(f"census leaves={args.leaves} enumerated={got} closed_form={closed} seconds={secs:.2f}", file=sys.stderr)
        if got != closed:
            ok = False
        if args.expect is not None and got != args.expect:
            print(f"census mismatch: expected {args.expect}, enumerated {got}", file=sys.stderr)
            ok = False
    if args.rho_fuzz is not None:
        from .generate import make_rng, random_pair
        from .similarity import rho, rho_bruteforce

        rng = make_rng(args.seed)
        agree = 0
        for _ in range(args.rho_fuzz):
            a, b = random_pair(rng, args.taxa)
            if rho(a, b).rho == rho_bruteforce(a, b):
                agree += 1
        print(f"{agree}/{args.rho_fuzz} oracle agreements")
        if agree != args.rho_fuzz:
            ok = False
    return EXIT_OK if ok else EXIT_MISMATCH


def cmd_sweep(args) -> int:
    from .experiments import default_species, sweep
    from .msc import SpeciesTree
    from .subposet import SubposetParams

    started = time.perf_counter()
    try:
        params = SubposetParams(args.tau, args.k, args.anchor_cap, args.alpha)
    except ValueError as e:
        raise ParamError(str(e)) from None
    for q in args.qs:
        _check_unit("q", q, high_closed=False)
    if args.replicates < 1 or not args.ns or not args.sigmas:
        raise ParamError("need replicates >= 1 and non-empty n and sigma lists")
    inputs = []
    if args.species:
        sp = SpeciesTree.from_newick(Path(args.species).read_text(encoding="utf-8").strip().splitlines()[0])
        inputs.append(args.species)
    else:
        sp = default_species(args.leaves, args.seed)
    rows, results = sweep(sp, args.ns, [float(s) for s in args.sigmas], args.qs, args.replicates, args.seed, params, args.eta)
    out = ["n\tsigma\tq\treplicates\tmean_td\tmean_fd\tmean_fdp\tzero_fd\tmax_rank\tmean_td_exact\tmean_fdp_exact"]
    for r in rows:
        out.append(
            f"{r.n}\t{r.sigma:g}\t{format_fraction(r.q, 4)}\t{r.replicates}\t{format_fraction(r.mean_td, 4)}\t"
            f"{format_fraction(r.mean_fd, 4)}\t{format_fraction(r.mean_fdp, 4)}\t{r.zero_fd}\t{r.max_rank}\t"
            f"{_jsonable(r.mean_td)}\t{_jsonable(r.mean_fdp)}"
        )
    _write_text(args.out, "\n".join(out) + "\n")
    if args.details:
        det = ["replicate\tn\tsigma\tq\ttd\tfd\tfdp\trank\tstable_rank\tr_anchor\tsubposet_size"]
        for r in results:
            det.append(
                f"{r.replicate}\t{r.n}\t{r.sigma:g}\t{_jsonable(r.q)}\t{r.td}\t{r.fd}\t{_jsonable(r.fdp)}\t"
                f"{r.rank}\t{r.stable_rank}\t{r.r_anchor}\t{r.subposet_size}"
            )
        _write_text(args.details, "\n".join(det) + "\n")
    if args.figure:
        from .plotting import sweep_figure

        sweep_figure(rows, args.figure, rows[0].max_rank if rows else None)
    _manifest(args, inputs, started, {"species_tree": sp.to_newick()})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="posetree", description="Stable consensus trees over the poset of tree topologies.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, manifest=True):
        if manifest:
            sp.add_argument("--manifest", help="run manifest path (default: <out>.manifest.json)")

    s = sub.add_parser("rho", help="similarity of paired trees")
    s.add_argument("file_a")
    s.add_argument("file_b")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_rho)

    s = sub.add_parser("stable", help="greedy alpha-stable consensus tree")
    s.add_argument("--input", required=True)
    s.add_argument("--alpha", type=_fraction, required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--scores")
    s.add_argument("--trace")
    s.add_argument("--figure", help="PNG of feature stabilities")
    s.add_argument("--max-rounds", type=int, default=None)
    s.add_argument("--single-removal", action="store_true", help="repair by removing one feature at a time")
    common(s)
    s.set_defaults(func=cmd_stable)

    s = sub.add_parser("fdr", help="tree selection with false discovery rate control")
    s.add_argument("--input", required=True)
    s.add_argument("--q", type=_fraction, required=True)
    s.add_argument("--alpha", type=_fraction, required=True)
    s.add_argument("--tau", type=_fraction, required=True)
    s.add_argument("--split", type=_fraction, default=Fraction(1, 2))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--eta", type=_fraction, default=Fraction(1, 2))
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--anchor-cap", type=int, default=12)
    s.add_argument("--max-rounds", type=int, default=None)
    s.add_argument("--subposet-out")
    s.add_argument("--reference", help="reference tree for discovery counts")
    s.add_argument("--out", default="-")
    s.add_argument("--trace")
    common(s)
    s.set_defaults(func=cmd_fdr)

    s = sub.add_parser("score", help="feature stabilities of a given tree")
    s.add_argument("--input", required=True)
    s.add_argument("--tree", required=True)
    s.add_argument("--scores", default="-")
    s.add_argument("--figure", help="PNG of feature stabilities")
    s.add_argument("--alpha", type=_fraction, default=None, help="reference line on the figure")
    common(s)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("simulate", help="gene trees under the multispecies coalescent")
    s.add_argument("--species", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--sigma", type=_fraction, default=Fraction(1))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("random-species", help="random species tree with lognormal branch lengths")
    s.add_argument("--leaves", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mean", type=_fraction, default=Fraction(2))
    s.add_argument("--variance", type=_fraction, default=Fraction(4))
    s.add_argument("--out", default="-")
    common(s)
    s.set_defaults(func=cmd_random_species)

    s = sub.add_parser("verify", help="poset census and similarity oracle checks")
    s.add_argument("--leaves", type=int)
    s.add_argument("--expect", type=int, help="census value the enumeration must match")
    s.add_argument("--rho-fuzz", type=int)
    s.add_argument("--taxa", type=int, default=7, help="label pool for fuzzed pairs")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="simulation sweep of true and false discoveries")
    s.add_argument("--species", help="species tree file (default: random)")
    s.add_argument("--leaves", type=int, default=8)
    s.add_argument("--ns", type=_csv(int), default=[20, 100])
    s.add_argument("--sigmas", type=_csv(Fraction), default=[Fraction(1, 2), Fraction(1), Fraction(2)])
    s.add_argument("--qs", type=_csv(Fraction), default=[Fraction(1, 20), Fraction(1, 5)])
    s.add_argument("--replicates", type=int, default=20)
    s.add_argument("--alpha", type=_fraction, default=Fraction(17, 20))
    s.add_argument("--tau", type=_fraction, default=Fraction(3, 4))
    s.add_argument("--eta", type=_fraction, default=Fraction(1, 2))
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--anchor-cap", type=int, default=12)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.add_argument("--details", help="per-replicate TSV")
    s.add_argument("--figure", help="PNG of mean true discoveries")
    common(s)
    s.set_defaults(func=cmd_sweep)
    return p


def _resolve_threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV)
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ParamError(f"{THREADS_ENV} must be an integer") from None
    if n < 1:
        raise ParamError("thread count must be at least 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse reports bad flags with status 2; those are parameter errors here
        return EXIT_OK if e.code == 0 else EXIT_PARAMS
    try:
        args.threads = _resolve_threads(args)
        return args.func(args)
    except ParamError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARAMS
    except (ParseError, DuplicateLeaf, EmptySample) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except UniverseTooLarge as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARAMS


if __name__ == "__main__":
    sys.exit(main())
