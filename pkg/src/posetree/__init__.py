"""Consensus trees from a graded poset of unrooted tree topologies."""

__version__ = "0.1.0"

from .consensus import SampleSet, StepLimits, estimate_stable, stability_report
from .errors import (
    DuplicateLeaf,
    EmptySample,
    IncompatibleSplits,
    LeafAbsent,
    NotCoveringPair,
    ParseError,
    PosetreeError,
    SplitAbsent,
    StepLimitExceeded,
    UniverseTooLarge,
)
from .fdr import FdrConfig, discoveries, select_fdr
from .newick import parse_topology, read_sample_file, write_newick
from .similarity import rho, rho_bruteforce
from .subposet import SubposetParams, anchor_rank, build_subposet
from .tree import T0, Tree, Universe, canonicalize, covers, leq, rank, restrict

__all__ = [
    "DuplicateLeaf", "EmptySample", "FdrConfig", "IncompatibleSplits", "LeafAbsent",
    "NotCoveringPair", "ParseError", "PosetreeError", "SampleSet", "SplitAbsent",
    "StepLimitExceeded", "StepLimits", "SubposetParams", "T0", "Tree", "Universe",
    "UniverseTooLarge", "anchor_rank", "build_subposet", "canonicalize", "covers",
    "discoveries", "estimate_stable", "leq", "parse_topology", "rank", "read_sample_file",
    "restrict", "rho", "rho_bruteforce", "select_fdr", "stability_report", "write_newick",
]
