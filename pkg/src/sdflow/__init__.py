"""Sessional dataflow kernel: parser, checker, scheduler and interpreter."""

from .conformance import (
    check_preservation, check_progress_theorem, heap_flowstate,
    step_flowstate, step_flowstate_internal,
)
from .flowstate import (
    distribute_guard, distribute_iterator, flowstates_equivalent, fold_guards,
    rate_summary,
)
from .kinding import eval_size, kind_of, normalize_size, size_leq
from .netcheck import (
    check_determinism, check_progress, classify_event, complement_event,
    inchans, outchans,
)
from .parser import parse_program, parse_program_or_raise
from .printer import print_flow, print_proc_flow, print_program
from .runtime import Fault, explore, instantiate, run
from .typecheck import check_network, check_proc, infer_expr

__all__ = [
    "parse_program", "parse_program_or_raise", "print_program", "print_flow",
    "print_proc_flow", "eval_size", "normalize_size", "size_leq", "kind_of",
    "fold_guards", "distribute_iterator", "distribute_guard", "rate_summary",
    "flowstates_equivalent", "infer_expr", "check_proc", "check_network",
    "classify_event", "complement_event", "inchans", "outchans",
    "check_determinism", "check_progress", "instantiate", "run", "explore",
    "Fault", "heap_flowstate", "step_flowstate", "step_flowstate_internal",
    "check_preservation", "check_progress_theorem",
]
