"""Agent workflow: prompts, directives, state machine, transports and pipeline."""

from .directives import Directive, extract_directive
from .fsm import Event, EventKind, Limits, Phase, WorkflowState, step
from .pipeline import PipelineOptions, RunRecord, TaskInputs, load_task, run_pipeline
from .prompts import AgentRole, render_prompt
from .report import write_report
from .transport import AgentMessage, HTTPTransport, ReplayTransport, ScriptedTransport, Transcript

__all__ = [
    "AgentMessage",
    "AgentRole",
    "Directive",
    "Event",
    "EventKind",
    "HTTPTransport",
    "Limits",
    "Phase",
    "PipelineOptions",
    "ReplayTransport",
    "RunRecord",
    "ScriptedTransport",
    "TaskInputs",
    "Transcript",
    "WorkflowState",
    "extract_directive",
    "load_task",
    "render_prompt",
    "run_pipeline",
    "step",
    "write_report",
]
