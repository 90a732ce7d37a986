from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simukit.errors import IllegalTransition
from simukit.orchestrator.fsm import Event, EventKind, Limits, Phase, WorkflowState, step


def at(phase, **kw):
    return WorkflowState(phase, **kw)


def test_review_fail_goes_back_to_investigator():
    s = step(at(Phase.REVIEW), Event(EventKind.REVIEWED, False))
    assert s.phase is Phase.INVESTIGATE2 and s.review_rounds == 1


def test_review_pass_builds():
    s = step(at(Phase.REVIEW), Event(EventKind.REVIEWED, True))
    assert s.phase is Phase.BUILD and s.build_cycles == 1


def test_located_description_fault_returns_to_review():
    s = step(at(Phase.DEBUG_LOCATE, build_cycles=1), Event(EventKind.LOCATED, True))
    assert s.phase is Phase.REVIEW


def test_located_code_fault_rebuilds():
    s = step(at(Phase.DEBUG_LOCATE, build_cycles=1), Event(EventKind.LOCATED, False))
    assert s.phase is Phase.BUILD and s.build_cycles == 2


def test_execute_outcomes():
    assert step(at(Phase.EXECUTE), Event(EventKind.EXECUTED, True)).phase is Phase.REPORT
    assert step(at(Phase.EXECUTE), Event(EventKind.EXECUTED, False)).phase is Phase.DEBUG_LOCATE


def test_simple_chain():
    s = WorkflowState()
    for kind in (EventKind.BLOCKS_REQUESTED, EventKind.NETLIST_READY):
        s = step(s, Event(kind))
    assert s.phase is Phase.REVIEW
    assert step(at(Phase.REPORT), Event(EventKind.REPORTED)).phase is Phase.DONE


def test_review_limit():
    s = step(at(Phase.REVIEW, review_rounds=3), Event(EventKind.REVIEWED, False), Limits(3, 5))
    assert s.phase is Phase.FAILED and s.failure.startswith("LimitExceeded")


def test_build_limit():
    s = step(at(Phase.DEBUG_LOCATE, build_cycles=5), Event(EventKind.LOCATED, False), Limits(3, 5))
    assert s.phase is Phase.FAILED and "build" in s.failure


def test_illegal_and_terminal():
    with pytest.raises(IllegalTransition):
        step(WorkflowState(), Event(EventKind.BUILT))
    with pytest.raises(IllegalTransition):
        step(at(Phase.DONE), Event(EventKind.REPORTED))
    assert step(at(Phase.BUILD), Event(EventKind.ABORT, "x")).phase is Phase.FAILED


def test_limits_validation():
    with pytest.raises(ValueError):
        Limits(-1, 5)
    with pytest.raises(ValueError):
        Limits(3, 0)


EVENTS = st.builds(Event, st.sampled_from([k for k in EventKind if k is not EventKind.ABORT]), st.booleans())


@given(st.lists(EVENTS, max_size=60), st.integers(0, 4), st.integers(1, 6))
def test_random_walks(events, max_review, max_build):
    limits = Limits(max_review, max_build)
    s = WorkflowState()
    for ev in events:
        if s.phase.terminal:
            break
        try:
            nxt = step(s, ev, limits)
        except IllegalTransition:
            continue
        if s.phase is Phase.DEBUG_LOCATE and ev.kind is EventKind.LOCATED and ev.value:
            assert nxt.phase is Phase.REVIEW
        if nxt.phase is Phase.BUILD:
            assert s.phase in (Phase.REVIEW, Phase.DEBUG_LOCATE)
            assert not (s.phase is Phase.DEBUG_LOCATE and ev.value)
        assert nxt.review_rounds <= max_review
        assert nxt.build_cycles <= max_build
        assert nxt.review_rounds >= s.review_rounds and nxt.build_cycles >= s.build_cycles
        if nxt.phase is Phase.FAILED:
            assert nxt.failure.startswith("LimitExceeded")
        s = nxt


@given(st.integers(0, 4), st.integers(1, 6))
def test_always_failing_agents_terminate(max_review, max_build):
    limits = Limits(max_review, max_build)
    # Reviewer always fails.
    s = at(Phase.REVIEW)
    for _ in range(100):
        if s.phase.terminal:
            break
        s = step(s, Event(EventKind.REVIEWED, False), limits)
        if s.phase is Phase.INVESTIGATE2:
            s = step(s, Event(EventKind.NETLIST_READY), limits)
    assert s.phase is Phase.FAILED and s.review_rounds == max_review
    # Executor always fails with a code fault.
    s = at(Phase.REVIEW)
    s = step(s, Event(EventKind.REVIEWED, True), limits)
    for _ in range(100):
        if s.phase.terminal:
            break
        s = step(s, Event(EventKind.BUILT), limits)
        s = step(s, Event(EventKind.EXECUTED, False), limits)
        s = step(s, Event(EventKind.LOCATED, False), limits)
    assert s.phase is Phase.FAILED and s.build_cycles == max_build
