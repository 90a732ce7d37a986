"""Toolchain for Simulink connection descriptions: parse, check, build, run, score."""

from .conformance import ValidationReport, validate
from .codegen import BuildScript, lower, render_engine_script, render_matlab
from .diff import DiffResult, accuracy, canonicalize
from .executor import ExecutionResult, dry_run, run_external
from .kb import BlockDescriptor, KnowledgeBase, ingest, load_kb, lookup
from .netlist import Netlist, load_netlist, parse_netlist, render

__version__ = "0.1.0"

__all__ = [
    "BlockDescriptor",
    "BuildScript",
    "DiffResult",
    "ExecutionResult",
    "KnowledgeBase",
    "Netlist",
    "ValidationReport",
    "accuracy",
    "canonicalize",
    "dry_run",
    "ingest",
    "load_kb",
    "load_netlist",
    "lookup",
    "lower",
    "parse_netlist",
    "render",
    "render_engine_script",
    "render_matlab",
    "run_external",
    "validate",
]
