"""Newick reading and writing, sample files and score tables."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DuplicateLeaf, EmptySample, ParseError
from .tree import T0, Tree, Universe, bits, canonicalize, lowbit

_DELIMS = set("(),:;[]'")
_SPACE = set(" \t\r\n")


@dataclass
class Node:
    parent: int | None
    label: str | None = None
    length: float | None = None
    children: list[int] = field(default_factory=list)


@dataclass
class RootedParseTree:
    """Rooted tree as parsed: node 0 is the root."""

    nodes: list[Node]

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if not n.children]

    def leaf_labels(self) -> list[str]:
        return [self.nodes[i].label or "" for i in self.leaves()]


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def fail(self, msg: str):
        raise ParseError(msg, offset=len(self.text[: self.i].encode("utf-8")))

    def skip(self):
        t = self.text
        while self.i < len(t):
            c = t[self.i]
            if c in _SPACE:
                self.i += 1
            elif c == "[":
                end = t.find("]", self.i + 1)
                if end < 0:
                    self.fail("unterminated comment")
                self.i = end + 1
            else:
                break

    def peek(self) -> str:
        self.skip()
        return self.text[self.i] if self.i < len(self.text) else ""

    def label(self) -> str | None:
        self.skip()
        t = self.text
        if self.i < len(t) and t[self.i] == "'":
            out = []
            self.i += 1
            while True:
                if self.i >= len(t):
                    self.fail("unterminated quoted label")
                c = t[self.i]
                if c == "'":
                    if self.i + 1 < len(t) and t[self.i + 1] == "'":
                        out.append("'")
                        self.i += 2
                        continue
                    self.i += 1
                    break
                out.append(c)
                self.i += 1
            return "".join(out)
        start = self.i
        while self.i < len(t) and t[self.i] not in _DELIMS and t[self.i] not in _SPACE:
            self.i += 1
        if self.i == start:
            return None
        return t[start: self.i]

    def length(self) -> float | None:
        if self.peek() != ":":
            return None
        self.i += 1
        self.skip()
        t = self.text
        start = self.i
        while self.i < len(t) and t[self.i] not in _DELIMS and t[self.i] not in _SPACE:
            self.i += 1
        tok = t[start: self.i]
        try:
            return float(tok)
        except ValueError:
            self.i = start
            self.fail(f"expected a branch length, found {tok!r}")


def parse_newick(text: str) -> RootedParseTree:
    """Parse one ``;``-terminated Newick statement."""
    r = _Reader(text)
    nodes = [Node(None)]
    if r.peek() == ";":
        r.i += 1
        if r.peek():
            r.fail("unexpected text after ';'")
        return RootedParseTree(nodes)
    stack: list[int] = []
    cur = 0

    def new_child(parent: int) -> int:
        child = len(nodes)
        nodes.append(Node(parent))
        nodes[parent].children.append(child)
        return child

    expecting_subtree = True
    while True:
        c = r.peek()
        if expecting_subtree:
            if c == "(":
                r.i += 1
                stack.append(cur)
                cur = new_child(cur)
                continue
            nodes[cur].label = r.label()
            if not nodes[cur].label:
                r.fail("expected a leaf label or '('" if c else "unexpected end of input")
            nodes[cur].length = r.length()
            expecting_subtree = False
            continue
        if c == ",":
            if not stack:
                r.fail("',' outside parentheses")
            r.i += 1
            cur = new_child(stack[-1])
            expecting_subtree = True
        elif c == ")":
            if not stack:
                r.fail("unbalanced ')'")
            r.i += 1
            cur = stack.pop()
            nodes[cur].label = r.label()
            nodes[cur].length = r.length()
        elif c == ";":
            if stack:
                r.fail("expected ',' or ')' before ';'")
            r.i += 1
            if r.peek():
                r.fail("unexpected text after ';'")
            return RootedParseTree(nodes)
        elif c == "":
            r.fail("unexpected end of input")
        else:
            r.fail(f"expected ',' ')' or ';', found {c!r}")


def to_topology(rt: RootedParseTree, universe: Universe) -> Tree:
    """Unrooted topology of a parsed tree; lengths and internal labels are dropped."""
    n = len(rt.nodes)
    ids: dict[int, int] = {}
    seen_names: set[str] = set()
    for i in rt.leaves():
        name = rt.nodes[i].label
        if not name:
            if n == 1:
                return T0
            raise ParseError("leaf without a label")
        if name in seen_names:
            raise DuplicateLeaf(name)
        seen_names.add(name)
        ids[i] = universe.intern(name)
    below = [0] * n
    # children always have larger indices than their parent
    for i in range(n - 1, -1, -1):
        node = rt.nodes[i]
        if not node.children:
            below[i] = 1 << ids[i]
        else:
            m = 0
            for c in node.children:
                m |= below[c]
            below[i] = m
    leaves = below[0]
    return canonicalize(leaves, [below[i] for i in range(1, n) if rt.nodes[i].children])


def parse_topology(text: str, universe: Universe) -> Tree:
    return to_topology(parse_newick(text), universe)


def quote_label(name: str) -> str:
    if name and not any(c in _DELIMS or c in _SPACE for c in name):
        return name
    return "'" + name.replace("'", "''") + "'"


def write_newick(t: Tree, universe: Universe, leaves: int | None = None) -> str:
    """Deterministic Newick text for ``t``.

    The tree is rooted on the edge of its first split and children are
    ordered by their smallest leaf id.  ``T0`` is written as a star over
    ``leaves`` when given.
    """
    if t.leaves == 0:
        if not leaves:
            return ";"
        return "(" + ",".join(quote_label(universe.name(i)) for i in bits(leaves)) + ");"
    x = t.splits[0]
    y = t.leaves ^ x
    clusters = []
    for s in t.splits[1:]:
        a = s
        b = t.leaves ^ s
        clusters.append(a if (a & ~x == 0 or a & ~y == 0) else b)

    def render(c: int) -> str:
        if c & (c - 1) == 0:
            return quote_label(universe.name(c.bit_length() - 1))
        inner = [d for d in clusters if d != c and d & ~c == 0]
        tops = [d for d in inner if not any(e != d and d & ~e == 0 and e != c for e in inner)]
        covered = 0
        for d in tops:
            covered |= d
        parts = tops + [1 << i for i in bits(c & ~covered)]
        parts.sort(key=lowbit)
        return "(" + ",".join(render(p) for p in parts) + ")"

    return "(" + ",".join(render(p) for p in sorted((x, y), key=lowbit)) + ");"


def _fmt_length(v: float) -> str:
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def write_rooted(rt: RootedParseTree) -> str:
    """Newick for a rooted tree, keeping labels and branch lengths."""

    def render(i: int) -> str:
        node = rt.nodes[i]
        s = ""
        if node.children:
            s = "(" + ",".join(render(c) for c in node.children) + ")"
        if node.label:
            s += quote_label(node.label)
        if node.length is not None and i != 0:
            s += ":" + _fmt_length(node.length)
        return s

    return render(0) + ";"


def read_sample_lines(lines, universe: Universe | None = None) -> tuple[list[Tree], Universe]:
    """Parse one Newick statement per line; ``#`` lines and blanks are skipped."""
    universe = universe if universe is not None else Universe()
    trees = []
    errors = []
    for no, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            trees.append(parse_topology(text, universe))
        except ParseError as e:
            errors.append(ParseError(e.message, offset=e.offset, line=no))
        except DuplicateLeaf as e:
            errors.append(ParseError(f"duplicate leaf {e.args[0]!r}", line=no))
    if errors:
        first = errors[0]
        msg = first.message if len(errors) == 1 else f"{first.message} ({len(errors)} bad lines)"
        raise ParseError(msg, offset=first.offset, line=first.line, errors=errors)
    if not trees:
        raise EmptySample("no trees found")
    return trees, universe


def read_sample_file(path, universe: Universe | None = None, threads: int = 1):
    """Load a sample file into a :class:`~posetree.consensus.SampleSet`."""
    from .consensus import SampleSet

    with open(path, encoding="utf-8") as fh:
        trees, universe = read_sample_lines(fh, universe)
    return SampleSet(trees, universe, threads=threads)


def format_fraction(x: Fraction, places: int = 6) -> str:
    """Decimal rendering with round-half-even, computed exactly."""
    x = Fraction(x)
    scaled = round(x * 10**places)
    sign = "-" if scaled < 0 else ""
    scaled = abs(scaled)
    whole, frac = divmod(scaled, 10**places)
    return f"{sign}{whole}.{frac:0{places}d}"


SCORE_HEADER = "feature\tkind\tstability\texact"


def score_rows(report, universe: Universe) -> list[str]:
    rows = [SCORE_HEADER]
    for e in report.entries:
        name = universe.format_feature(report.tree, e.feature)
        rows.append(
            f"{name}\t{e.kind}\t{format_fraction(e.stability)}\t{e.numerator}/{e.denominator}"
        )
    return rows


def write_scores(report, universe: Universe, path_or_stream) -> None:
    text = "\n".join(score_rows(report, universe)) + "\n"
    if isinstance(path_or_stream, (str, os.PathLike)):
        with open(path_or_stream, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        path_or_stream.write(text)
