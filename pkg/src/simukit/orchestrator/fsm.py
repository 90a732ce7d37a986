"""Workflow phases and the pure transition function."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from ..errors import IllegalTransition


class Phase(str, enum.Enum):
    INVESTIGATE1 = "Investigate1"
    INVESTIGATE2 = "Investigate2"
    REVIEW = "Review"
    BUILD = "Build"
    EXECUTE = "Execute"
    DEBUG_LOCATE = "DebugLocate"
    REPORT = "Report"
    DONE = "Done"
    FAILED = "Failed"

    @property
    def terminal(self) -> bool:
        return self in (Phase.DONE, Phase.FAILED)


@dataclass(frozen=True)
class Limits:
    max_review: int = 3
    max_build: int = 5

    def __post_init__(self) -> None:
        if self.max_review < 0 or self.max_build < 1:
            raise ValueError(f"invalid limits {self}")


@dataclass(frozen=True)
class WorkflowState:
    phase: Phase = Phase.INVESTIGATE1
    review_rounds: int = 0
    build_cycles: int = 0
    failure: str | None = None


class EventKind(str, enum.Enum):
    BLOCKS_REQUESTED = "blocks_requested"
    NETLIST_READY = "netlist_ready"
    REVIEWED = "reviewed"
    BUILT = "built"
    EXECUTED = "executed"
    LOCATED = "located"
    REPORTED = "reported"
    ABORT = "abort"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    value: object = None


_SIMPLE = {
    (Phase.INVESTIGATE1, EventKind.BLOCKS_REQUESTED): Phase.INVESTIGATE2,
    (Phase.INVESTIGATE2, EventKind.NETLIST_READY): Phase.REVIEW,
    (Phase.BUILD, EventKind.BUILT): Phase.EXECUTE,
    (Phase.REPORT, EventKind.REPORTED): Phase.DONE,
}


def _enter_build(state: WorkflowState, limits: Limits) -> WorkflowState:
    if state.build_cycles + 1 > limits.max_build:
        return replace(state, phase=Phase.FAILED, failure=f"LimitExceeded: more than {limits.max_build} build cycles")
    return replace(state, phase=Phase.BUILD, build_cycles=state.build_cycles + 1)


def step(state: WorkflowState, event: Event, limits: Limits = Limits()) -> WorkflowState:
    """Next state for ``event``; raises IllegalTransition for unknown pairs."""
    if state.phase.terminal:
        raise IllegalTransition(f"{state.phase.value} is terminal")
    if event.kind is EventKind.ABORT:
        return replace(state, phase=Phase.FAILED, failure=str(event.value or "aborted"))
    target = _SIMPLE.get((state.phase, event.kind))
    if target is not None:
        return replace(state, phase=target)
    if state.phase is Phase.REVIEW and event.kind is EventKind.REVIEWED:
        if event.value:
            return _enter_build(state, limits)
        if state.review_rounds + 1 > limits.max_review:
            return replace(
                state, phase=Phase.FAILED, failure=f"LimitExceeded: more than {limits.max_review} review rounds"
            )
        return replace(state, phase=Phase.INVESTIGATE2, review_rounds=state.review_rounds + 1)
    if state.phase is Phase.EXECUTE and event.kind is EventKind.EXECUTED:
        return replace(state, phase=Phase.REPORT if event.value else Phase.DEBUG_LOCATE)
    if state.phase is Phase.DEBUG_LOCATE and event.kind is EventKind.LOCATED:
        # a fault in the description must go back through review, never straight to the builder
        if event.value:
            return replace(state, phase=Phase.REVIEW)
        return _enter_build(state, limits)
    raise IllegalTransition(f"no transition from {state.phase.value} on {event.kind.value}")
