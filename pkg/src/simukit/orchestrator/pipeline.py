"""The agent workflow driven through the state machine."""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

from ..codegen import (
    BuildScript,
    engine_statement,
    extract_code,
    lower,
    parse_engine_script,
    render_engine_script,
    sanitize_model_name,
)
from ..conformance import render_review, validate
from ..diff import accuracy
from ..errors import (
    DirectiveMalformed,
    DirectiveNotFound,
    ExecutionTimeout,
    ScriptSyntaxError,
    SimukitError,
)
from ..executor import ExecutionResult, ExternalConfig, dry_run, run_external
from ..kb import KnowledgeBase, render_descriptor
from ..netlist import Netlist, load_netlist, parse_netlist, scan_agent_text
from .directives import INVESTIGATOR_ERROR, REQUEST_BLOCKS, UNIT_TEST_PASS, extract_directive
from .fsm import Event, EventKind, Limits, Phase, WorkflowState, step
from .prompts import AgentRole, code_template, functions_text, render_prompt
from .report import write_report
from .transport import REQUEST, AgentMessage, Transcript, Transport

REVIEWER_MODES = ("agent", "deterministic", "both")
BUILDER_MODES = ("agent", "lower")
LOCATOR_MODES = ("agent", "builtin")
REPORT_MODES = ("template", "agent")


@dataclass(frozen=True)
class TaskInputs:
    name: str
    explanation: str
    blocks_list: str
    image_ref: str | None = None
    gt: Netlist | None = None
    model_name: str | None = None
    task_dir: str | None = None


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".gif", ".webp")


def load_task(task_dir) -> TaskInputs:
    """Read ``explanation.md``, ``blocks.txt`` and the optional ``gt.net`` and diagram."""
    task_dir = os.fspath(task_dir)

    def read(name: str) -> str:
        path = os.path.join(task_dir, name)
        if not os.path.isfile(path):
            raise SimukitError(f"task directory {task_dir!r} lacks {name}")
        with open(path, encoding="utf-8") as fh:
            return fh.read()

    gt_path = os.path.join(task_dir, "gt.net")
    image = next(
        (f for f in sorted(os.listdir(task_dir)) if f.startswith("diagram") and f.lower().endswith(IMAGE_SUFFIXES)),
        None,
    )
    return TaskInputs(
        name=os.path.basename(os.path.normpath(task_dir)),
        explanation=read("explanation.md"),
        blocks_list=read("blocks.txt"),
        image_ref=image,
        gt=load_netlist(gt_path) if os.path.isfile(gt_path) else None,
        task_dir=task_dir,
    )


@dataclass(frozen=True)
class PipelineOptions:
    reviewer: str = "both"
    builder: str = "agent"
    locator: str = "agent"
    report: str = "template"
    autorouting: bool = False

    def __post_init__(self) -> None:
        for value, allowed in (
            (self.reviewer, REVIEWER_MODES),
            (self.builder, BUILDER_MODES),
            (self.locator, LOCATOR_MODES),
            (self.report, REPORT_MODES),
        ):
            if value not in allowed:
                raise ValueError(f"{value!r} is not one of {allowed}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunRecord:
    task: str
    final_state: str
    failure: str | None = None
    review_rounds: int = 0
    build_cycles: int = 0
    netlist: str = ""
    validation: dict | None = None
    script: str | None = None
    executions: list = field(default_factory=list)
    report: str | None = None
    accuracy: dict | None = None
    cost_usd: float = 0.0
    wall_time_s: float = 0.0

    def __post_init__(self) -> None:
        if self.cost_usd < 0 or self.wall_time_s < 0:
            raise ValueError("cost and time must be non-negative")

    @property
    def done(self) -> bool:
        return self.final_state == Phase.DONE.value

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("wall_time_s")
            for ex in d["executions"]:
                ex.pop("wall_time", None)
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"


Backend = Callable[[BuildScript], ExecutionResult]


class Pipeline:
    """One run of the workflow; single-threaded by construction."""

    def __init__(
        self,
        task: TaskInputs,
        transport: Transport | None,
        kb: KnowledgeBase,
        limits: Limits = Limits(),
        executor: str | Backend = "dryrun",
        options: PipelineOptions = PipelineOptions(),
        external: ExternalConfig | None = None,
        model_ids: dict | None = None,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.task = task
        self.transport = transport
        self.kb = kb
        self.limits = limits
        self.options = options
        self.model_ids = {AgentRole(k): v for k, v in (model_ids or {}).items()}
        self.clock = clock
        if callable(executor):
            self.backend = executor
        elif executor == "dryrun":
            self.backend = lambda script: dry_run(script, kb)
        elif executor == "matlab":
            cfg = external or ExternalConfig()
            self.backend = lambda script: run_external(script, replace(cfg, autorouting=options.autorouting))
        else:
            raise ValueError(f"unknown executor backend {executor!r}")
        self.transcript = Transcript(metadata={"task": task.name, "options": options.to_dict()})
        self.model_name = task.model_name or sanitize_model_name(task.name)

        self.block_lines: list[str] = []
        self.descriptions_text = ""
        self.requested: list[str] = []
        self.netlist = Netlist()
        self.netlist_text = ""
        self.validation = None
        self.review_feedback: str | None = None
        self.error_report: str | None = None
        self.debug_feedback: str | None = None
        self.script: BuildScript | None = None
        self.script_text: str | None = None
        self.pending_failure: ExecutionResult | None = None
        self.last_result: ExecutionResult | None = None
        self.executions: list[dict] = []
        self.report: str | None = None
        self.cost = 0.0

    # -- transport ---------------------------------------------------------

    def exchange(self, role: AgentRole, content: str, image_ref: str | None = None) -> str:
        if self.transport is None:
            raise SimukitError(f"{role.value} needs an agent transport")
        request = AgentMessage(
            role, REQUEST, content, image_ref=image_ref, timestamp=self.clock(), model=self.model_ids.get(role)
        )
        self.transcript.append(request)
        response = self.transport.send(request)
        response = replace(response, timestamp=self.clock())
        self.transcript.append(response)
        self.cost += response.token_cost or 0.0
        return response.content

    def _record_execution(self, result: ExecutionResult) -> None:
        self.transcript.append(
            AgentMessage(AgentRole.EXECUTOR, REQUEST, self.script_text or "", timestamp=self.clock())
        )
        self.transcript.append(
            AgentMessage(
                AgentRole.EXECUTOR,
                "response",
                json.dumps(result.to_dict(timing=False), sort_keys=True),
                timestamp=self.clock(),
            )
        )

    # -- phases ------------------------------------------------------------

    def _describe(self, types) -> str:
        parts = []
        for t in types:
            desc = self.kb.get(t)
            parts.append(render_descriptor(desc) if desc is not None else f"## {t}\n\nNo description found.\n---\n")
        return "\n".join(parts)

    def investigate1(self) -> Event:
        prompt = render_prompt(
            AgentRole.INVESTIGATOR,
            {"simulation_explanation": self.task.explanation, "simulation_blocks_list": self.task.blocks_list},
            "round1",
        )
        text = self.exchange(AgentRole.INVESTIGATOR, prompt, self.task.image_ref)
        blocks, _ = scan_agent_text(text)
        if not blocks:
            return Event(EventKind.ABORT, "Investigator returned no block list")
        self.block_lines = blocks
        self.requested = extract_directive(text, REQUEST_BLOCKS).value
        self.descriptions_text = self._describe(self.requested)
        return Event(EventKind.BLOCKS_REQUESTED, self.requested)

    def investigate2(self) -> Event:
        if self.review_feedback is None:
            ctx = {
                "simulation_blocks_list": "\n".join(self.block_lines),
                "blocks_description": self.descriptions_text,
            }
            prompt = render_prompt(AgentRole.INVESTIGATOR, ctx, "round2")
        else:
            ctx = {
                "investigator_simulation_info": self.netlist_text,
                "reviewer_feedback": self.review_feedback,
                "blocks_description": self.descriptions_text,
            }
            prompt = render_prompt(AgentRole.INVESTIGATOR, ctx, "revise")
        text = self.exchange(AgentRole.INVESTIGATOR, prompt, self.task.image_ref)
        blocks, conns = scan_agent_text(text)
        self.block_lines = blocks or self.block_lines
        self.netlist_text = "\n".join(self.block_lines) + "\n\n" + "\n".join(conns) + "\n"
        self.netlist = parse_netlist(self.netlist_text, strict=False)
        return Event(EventKind.NETLIST_READY)

    def review(self) -> Event:
        report = validate(self.netlist, self.kb)
        self.validation = report
        mode = self.options.reviewer
        if mode == "deterministic":
            passed, feedback = report.passed, render_review(report)
        else:
            ctx = {
                "blocks_list": "\n".join(self.block_lines),
                "investigator_simulation_info": self.netlist_text,
                "error_report": self.error_report,
            }
            stage = "recheck" if self.error_report else "review"
            text = self.exchange(AgentRole.REVIEWER, render_prompt(AgentRole.REVIEWER, ctx, stage))
            passed = extract_directive(text, UNIT_TEST_PASS).value
            feedback = text
            if mode == "both" and not report.passed:
                passed = False
                feedback = text.rstrip() + "\n\nAutomated checks:\n" + render_review(report)
        if self.error_report:
            feedback = feedback.rstrip() + "\n\nBuild failure report:\n" + self.error_report
        self.error_report = None
        self.review_feedback = None if passed else feedback
        return Event(EventKind.REVIEWED, passed)

    def build(self) -> Event:
        self.pending_failure = None
        if self.options.builder == "lower":
            try:
                self.script = lower(self.netlist, self.kb, self.model_name, check=False)
                self.script_text = None
            except SimukitError as exc:
                self.script = None
                self.pending_failure = ExecutionResult("failed", 0, f"lowering failed: {exc}")
        else:
            ctx = {
                "code_template": code_template(),
                "functions": functions_text(),
                "blocks_description": self.descriptions_text,
                "investigator_agent_information": self.netlist_text,
                "execution_code": self.script_text,
                "debug_feedback": self.debug_feedback,
            }
            stage = "retry" if self.debug_feedback else "build"
            text = self.exchange(AgentRole.BUILDER, render_prompt(AgentRole.BUILDER, ctx, stage))
            self.script_text = extract_code(text).strip() + "\n"
            try:
                self.script = parse_engine_script(text)
            except ScriptSyntaxError as exc:
                self.script = None
                self.pending_failure = ExecutionResult("failed", 0, f"script could not be read: {exc}")
        if self.script is not None and self.script_text is None:
            self.script_text = render_engine_script(self.script, self.options.autorouting)
        self.debug_feedback = None
        return Event(EventKind.BUILT)

    def execute(self) -> Event:
        if self.pending_failure is not None:
            result = self.pending_failure
        else:
            try:
                result = self.backend(self.script)
            except ExecutionTimeout as exc:
                result = ExecutionResult("failed", 0, str(exc))
        self.last_result = result
        self.executions.append(result.to_dict())
        self._record_execution(result)
        return Event(EventKind.EXECUTED, result.ok)

    def _failing_statement(self) -> str:
        result = self.last_result
        if self.script is None or result is None or result.failed_command_index is None:
            return ""
        cmd = self.script.commands[result.failed_command_index]
        return engine_statement(cmd, self.script.model_name, self.options.autorouting)

    def debug_locate(self) -> Event:
        result = self.last_result
        where = self._failing_statement()
        error_message = result.error_message + (f"\nFailing call: {where}" if where else "")
        if self.options.locator == "builtin":
            faithful = False
            if self.script is not None:
                try:
                    expected = lower(self.netlist, self.kb, self.script.model_name, check=False)
                    faithful = expected.commands == self.script.commands
                except SimukitError:
                    faithful = False
            if faithful:
                text = (
                    "The script reproduces the connection description exactly, so the failure "
                    f"comes from the description.\nError: {error_message}"
                )
            else:
                text = f"The script departs from the connection description; regenerate it.\nError: {error_message}"
            investigator_error = faithful
        else:
            ctx = {
                "execution_code": self.script_text or "",
                "error_message": error_message,
                "functions_set": functions_text(),
                "blocks_description": self.descriptions_text,
                "investigator_implementation_info": self.netlist_text,
            }
            text = self.exchange(AgentRole.DEBUG_LOCATOR, render_prompt(AgentRole.DEBUG_LOCATOR, ctx))
            investigator_error = extract_directive(text, INVESTIGATOR_ERROR).value
        if investigator_error:
            self.error_report = f"Error message: {error_message}\n\n{text}"
        else:
            self.debug_feedback = text
        return Event(EventKind.LOCATED, investigator_error)

    def write_report(self) -> Event:
        if self.options.report == "agent":
            ctx = {
                "simulation_description": self.task.explanation,
                "used_block_description": self.descriptions_text,
                "connection_description": self.netlist_text,
                "execution_code": self.script_text or "",
            }
            self.report = self.exchange(AgentRole.REPORT_WRITER, render_prompt(AgentRole.REPORT_WRITER, ctx))
        else:
            descriptions = {t: (self.kb.get(t).summary if self.kb.get(t) else "") for t in self.requested}
            self.report = write_report(self.netlist, self.kb, self.script, descriptions, self.task.explanation)
        return Event(EventKind.REPORTED)

    # -- driver ------------------------------------------------------------

    def run(self) -> RunRecord:
        start = time.perf_counter()
        handlers = {
            Phase.INVESTIGATE1: self.investigate1,
            Phase.INVESTIGATE2: self.investigate2,
            Phase.REVIEW: self.review,
            Phase.BUILD: self.build,
            Phase.EXECUTE: self.execute,
            Phase.DEBUG_LOCATE: self.debug_locate,
            Phase.REPORT: self.write_report,
        }
        state = WorkflowState()
        while not state.phase.terminal:
            try:
                event = handlers[state.phase]()
            except (DirectiveNotFound, DirectiveMalformed) as exc:
                event = Event(EventKind.ABORT, f"{type(exc).__name__}: {exc}")
            state = step(state, event, self.limits)
        acc = None
        if self.task.gt is not None and self.netlist.blocks:
            try:
                acc = accuracy(self.task.gt, self.netlist, self.kb).to_dict()
            except SimukitError:
                acc = None
        return RunRecord(
            task=self.task.name,
            final_state=state.phase.value,
            failure=state.failure,
            review_rounds=state.review_rounds,
            build_cycles=state.build_cycles,
            netlist=self.netlist_text,
            validation=self.validation.to_dict() if self.validation is not None else None,
            script=self.script_text,
            executions=self.executions,
            report=self.report,
            accuracy=acc,
            cost_usd=self.cost,
            wall_time_s=time.perf_counter() - start,
        )


def run_pipeline(
    task: TaskInputs,
    transport: Transport | None,
    kb: KnowledgeBase,
    limits: Limits = Limits(),
    executor: str | Backend = "dryrun",
    options: PipelineOptions = PipelineOptions(),
    **kwargs,
) -> tuple[RunRecord, Transcript]:
    pipeline = Pipeline(task, transport, kb, limits, executor, options, **kwargs)
    record = pipeline.run()
    return record, pipeline.transcript
