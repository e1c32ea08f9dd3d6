import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest

from posetree.cli import main

WANDER = [
    "(((A,G),B),C,D,(E,F));",
    "((A,B),C,D,(E,(F,G)));",
]


@pytest.fixture
def mixture_file(tmp_path):
    p = tmp_path / "mix.nwk"
    p.write_text("\n".join(WANDER[i % 2] for i in range(200)) + "\n")
    return p


@pytest.fixture(scope="module")
def gene_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("genes")
    sp = d / "sp.nwk"
    assert main(["random-species", "--leaves", "8", "--seed", "0", "--out", str(sp)]) == 0
    genes = d / "genes.nwk"
    assert main(["simulate", "--species", str(sp), "--n", "100", "--seed", "5", "--out", str(genes)]) == 0
    return sp, genes


def read(p):
    return Path(p).read_bytes()


def test_stable_drops_wandering_leaf(tmp_path, mixture_file):
    out, scores, trace = tmp_path / "t.nwk", tmp_path / "s.tsv", tmp_path / "t.jsonl"
    code = main(["stable", "--input", str(mixture_file), "--alpha", "0.9", "--out", str(out),
                 "--scores", str(scores), "--trace", str(trace)])
    assert code == 0
    assert "G" not in out.read_text()
    rows = scores.read_text().splitlines()
    assert rows[0] == "feature\tkind\tstability\texact"
    assert all(Fraction(r.split("\t")[3]) >= Fraction(9, 10) for r in rows[1:])
    steps = [json.loads(x) for x in trace.read_text().splitlines()]
    assert steps[0]["action"] == "advance" and steps[-1]["action"] in ("stop", "revisit", "maximal")
    manifest = json.loads((tmp_path / "t.nwk.manifest.json").read_text())
    assert manifest["command"] == "stable"
    assert manifest["parameters"]["alpha"] == "9/10"
    assert list(manifest["inputs"].values())[0] and manifest["version"]


def test_stable_star_output_lists_leaves(tmp_path):
    p = tmp_path / "q.nwk"
    p.write_text("((A,B),(C,D));\n((A,C),(B,D));\n")
    out = tmp_path / "o.nwk"
    assert main(["stable", "--input", str(p), "--alpha", "1", "--out", str(out)]) == 0
    assert out.read_text() == "(A,B,C,D);\n"


def test_missing_file_is_input_error(tmp_path, capsys):
    assert main(["stable", "--input", str(tmp_path / "nope"), "--alpha", "0.9"]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_line_is_input_error(tmp_path, capsys):
    p = tmp_path / "bad.nwk"
    p.write_text("((A,B),(C,D));\n((A,B),(C\n")
    assert main(["stable", "--input", str(p), "--alpha", "0.9"]) == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["stable", "--alpha", "1.5"],
    ["stable", "--alpha", "0"],
    ["stable", "--alpha", "abc"],
    ["fdr", "--q", "0.2", "--alpha", "0.85", "--tau", "0.75", "--split", "0"],
    ["fdr", "--q", "0.2", "--alpha", "0.85", "--tau", "0.4"],
    ["fdr", "--q", "1", "--alpha", "0.85", "--tau", "0.75"],
])
def test_invalid_parameters(argv, mixture_file):
    assert main(argv + ["--input", str(mixture_file)]) == 3


def test_bad_thread_settings(mixture_file, monkeypatch):
    assert main(["--threads", "0", "stable", "--input", str(mixture_file), "--alpha", "0.9"]) == 3
    monkeypatch.setenv("POSETREE_THREADS", "many")
    assert main(["stable", "--input", str(mixture_file), "--alpha", "0.9"]) == 3


def test_step_cap_exit_code(tmp_path, mixture_file):
    out = tmp_path / "o.nwk"
    code = main(["stable", "--input", str(mixture_file), "--alpha", "0.9", "--max-rounds", "1", "--out", str(out)])
    assert code == 1
    assert out.read_text().count(",") == 3


def test_fdr_pipeline(tmp_path, gene_file):
    sp, genes = gene_file
    out, trace, sub = tmp_path / "f.nwk", tmp_path / "f.jsonl", tmp_path / "sub.json"
    code = main(["fdr", "--input", str(genes), "--q", "0.2", "--alpha", "0.85", "--tau", "0.75",
                 "--seed", "1", "--out", str(out), "--trace", str(trace), "--subposet-out", str(sub),
                 "--reference", str(sp)])
    assert code == 0
    assert out.read_text().strip() != ";"
    steps = [json.loads(x) for x in trace.read_text().splitlines()]
    accepted = [s for s in steps if s["accept"]]
    assert accepted and all(Fraction(s["score"]) >= Fraction(s["gamma"]) for s in accepted)
    doc = json.loads(sub.read_text())
    assert doc["nodes"] and doc["edges"]
    man = json.loads((tmp_path / "f.nwk.manifest.json").read_text())
    perm = man["permutation"]
    assert sorted(perm) == list(range(100)) and man["n1"] == man["n2"] == 50
    assert man["discoveries"]["fd"] == 0


def test_fdr_stringent_q_gives_no_discoveries(tmp_path, gene_file):
    _, genes = gene_file
    small = tmp_path / "small.nwk"
    small.write_text("".join(genes.read_text().splitlines(keepends=True)[:12]))
    out = tmp_path / "f.nwk"
    assert main(["fdr", "--input", str(small), "--q", "0.001", "--alpha", "0.85", "--tau", "0.75",
                 "--out", str(out)]) == 0
    text = out.read_text().strip()
    assert ")" not in text.replace("(", "", 1)[:-2] or text.count("(") == 1


def test_score_identical_samples(tmp_path):
    t = "((A,B),(C,(D,E)));"
    s, tr = tmp_path / "s.nwk", tmp_path / "t.nwk"
    s.write_text((t + "\n") * 6)
    tr.write_text(t + "\n")
    out = tmp_path / "o.tsv"
    assert main(["score", "--input", str(s), "--tree", str(tr), "--scores", str(out)]) == 0
    rows = out.read_text().splitlines()[1:]
    assert len(rows) == 5 + 2 and all(r.split("\t")[2] == "1.000000" for r in rows)


def test_score_star_tree_gives_header_only(tmp_path):
    s, tr = tmp_path / "s.nwk", tmp_path / "t.nwk"
    s.write_text("((A,B),(C,D));\n")
    tr.write_text("(A,B,C,D);\n")
    out = tmp_path / "o.tsv"
    assert main(["score", "--input", str(s), "--tree", str(tr), "--scores", str(out)]) == 0
    assert out.read_text() == "feature\tkind\tstability\texact\n"


def test_score_resolved_tree_on_discordant_samples(tmp_path, gene_file):
    sp, genes = gene_file
    low = tmp_path / "low.nwk"
    lines = genes.read_text().splitlines()
    assert main(["simulate", "--species", str(sp), "--n", "60", "--sigma", "0.1", "--seed", "2", "--out", str(low)]) == 0
    tr = tmp_path / "t.nwk"
    tr.write_text(lines[0] + "\n")
    out, fig = tmp_path / "o.tsv", tmp_path / "o.png"
    assert main(["score", "--input", str(low), "--tree", str(tr), "--scores", str(out), "--figure", str(fig),
                 "--alpha", "0.85"]) == 0
    vals = [Fraction(r.split("\t")[3]) for r in out.read_text().splitlines()[1:]]
    assert min(vals) < Fraction(1, 5)
    assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_simulate_line_count_and_determinism(tmp_path):
    sp = tmp_path / "sp.nwk"
    assert main(["random-species", "--leaves", "10", "--seed", "3", "--out", str(sp)]) == 0
    a, b = tmp_path / "a.nwk", tmp_path / "b.nwk"
    for p in (a, b):
        assert main(["simulate", "--species", str(sp), "--n", "100", "--seed", "9", "--out", str(p)]) == 0
    assert read(a) == read(b)
    assert len(a.read_text().splitlines()) == 100


def test_simulate_bad_species(tmp_path):
    sp = tmp_path / "sp.nwk"
    sp.write_text("((A:1,A:1):1,B:1);\n")
    assert main(["simulate", "--species", str(sp), "--n", "3"]) == 3
    sp.write_text("((A:1,B:1\n")
    assert main(["simulate", "--species", str(sp), "--n", "3"]) == 2


def test_verify_census(capsys):
    assert main(["verify", "--leaves", "5"]) == 0
    assert capsys.readouterr().out.strip() == "41"
    assert main(["verify", "--leaves", "5", "--expect", "40"]) == 1
    assert main(["verify", "--leaves", "12"]) == 3


def test_verify_fuzz(capsys):
    assert main(["verify", "--rho-fuzz", "300", "--seed", "1"]) == 0
    assert capsys.readouterr().out.strip() == "300/300 oracle agreements"


def test_rho_command(tmp_path, capsys):
    a, b = tmp_path / "a.nwk", tmp_path / "b.nwk"
    a.write_text("((A,B,C),(D,E,F));\n((A,B),(C,D));\n")
    b.write_text("((A,B,D),(C,E,F));\n((A,B),(C,D));\n")
    assert main(["rho", str(a), str(b)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1] == "1\t1\t((A,B),(E,F));"
    assert out[2] == "2\t1\t((A,B),(C,D));"


def test_sweep_outputs(tmp_path):
    out, det, fig = tmp_path / "s.tsv", tmp_path / "d.tsv", tmp_path / "s.png"
    code = main(["sweep", "--leaves", "6", "--ns", "20,40", "--sigmas", "1,2", "--qs", "0.2",
                 "--replicates", "2", "--out", str(out), "--details", str(det), "--figure", str(fig)])
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("n\tsigma\tq") and len(rows) == 1 + 4
    assert len(det.read_text().splitlines()) == 1 + 8
    assert fig.read_bytes()[:4] == b"\x89PNG"


def _run_all(tmp, threads, mixture_file, gene_file):
    sp, genes = gene_file
    files = []

    def o(name):
        p = tmp / name
        files.append(p)
        return str(p)

    base = ["--threads", str(threads)]
    assert main(base + ["stable", "--input", str(mixture_file), "--alpha", "0.9", "--out", o("st.nwk"),
                        "--scores", o("st.tsv"), "--trace", o("st.jsonl"), "--figure", o("st.png")]) == 0
    assert main(base + ["fdr", "--input", str(genes), "--q", "0.2", "--alpha", "0.85", "--tau", "0.75",
                        "--out", o("f.nwk"), "--trace", o("f.jsonl"), "--subposet-out", o("f.json")]) == 0
    assert main(base + ["score", "--input", str(genes), "--tree", str(sp), "--scores", o("sc.tsv"),
                        "--figure", o("sc.png")]) == 0
    assert main(base + ["simulate", "--species", str(sp), "--n", "20", "--seed", "4", "--out", o("g.nwk")]) == 0
    assert main(base + ["sweep", "--leaves", "6", "--ns", "20", "--sigmas", "1", "--qs", "0.2",
                        "--replicates", "2", "--out", o("sw.tsv"), "--figure", o("sw.png")]) == 0
    return {p.name: read(p) for p in files}


def test_reruns_are_byte_identical_across_thread_counts(tmp_path, mixture_file, gene_file):
    runs = []
    for k, threads in enumerate((1, 1, 4)):
        d = tmp_path / f"run{k}"
        d.mkdir()
        runs.append(_run_all(d, threads, mixture_file, gene_file))
    assert runs[0] == runs[1] == runs[2]


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "posetree.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
    res = subprocess.run([sys.executable, "-m", "posetree.cli", "verify"], capture_output=True, text=True)
    assert res.returncode == 3
