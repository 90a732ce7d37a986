from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simukit.errors import DirectiveMalformed, DirectiveNotFound, MissingPlaceholder
from simukit.orchestrator.directives import (
    INVESTIGATOR_ERROR,
    REQUEST_BLOCKS,
    UNIT_TEST_PASS,
    extract_directive,
    parse_loose_object,
)
from simukit.orchestrator.prompts import (
    DEFAULT_STAGE,
    TEMPLATES,
    AgentRole,
    code_template,
    functions_text,
    load_text,
    placeholders,
    render_prompt,
)

from conftest import FIXTURES

CASE = FIXTURES / "case_study"


def _fill(stem):
    return {name: f"<{name}>" for name in placeholders(load_text(stem))}


def test_investigator_round1_prompt():
    text = render_prompt(AgentRole.INVESTIGATOR, _fill("investigator_round1"))
    assert "request_blocks" in text
    assert "<simulation_explanation>" in text


def test_reviewer_prompt():
    text = render_prompt(AgentRole.REVIEWER, _fill("reviewer"))
    assert "Investigator_unit_test_pass" in text


def test_debug_locator_needs_error_message():
    ctx = _fill("debug_locator")
    ctx.pop("error_message")
    with pytest.raises(MissingPlaceholder):
        render_prompt(AgentRole.DEBUG_LOCATOR, ctx)
    ctx["error_message"] = None
    with pytest.raises(MissingPlaceholder):
        render_prompt(AgentRole.DEBUG_LOCATOR, ctx)


def test_every_template_renders_completely():
    for (role, stage), stem in TEMPLATES.items():
        text = render_prompt(role, _fill(stem), stage)
        for name in placeholders(load_text(stem)):
            assert "{" + name + "}" not in text
            assert f"<{name}>" in text


def test_stage_defaults_and_unknown_stage():
    assert set(DEFAULT_STAGE) == {r for r in AgentRole if r is not AgentRole.EXECUTOR}
    with pytest.raises(ValueError):
        render_prompt(AgentRole.EXECUTOR, {})


def test_builder_payloads_ship():
    assert "new_system" in functions_text()
    assert "model_name" in code_template()


def test_case_study_round1_request_blocks():
    d = extract_directive((CASE / "investigator_round1.txt").read_text(), REQUEST_BLOCKS)
    assert len(d.value) == 10
    assert d.value[-1] == "Scope"


def test_case_study_reviewer_verdict():
    d = extract_directive((CASE / "reviewer_report.txt").read_text(), UNIT_TEST_PASS)
    assert d.value is False


def test_case_study_debug_routing():
    d = extract_directive((CASE / "debug_report.txt").read_text(), INVESTIGATOR_ERROR)
    assert d.value is True


def test_last_object_wins():
    text = 'example {"Investigator_unit_test_pass": true}\nverdict {"Investigator_unit_test_pass": false}'
    assert extract_directive(text, UNIT_TEST_PASS).value is False


def test_missing_and_malformed():
    with pytest.raises(DirectiveNotFound):
        extract_directive("no object here", UNIT_TEST_PASS)
    with pytest.raises(DirectiveMalformed):
        extract_directive('{"Investigator_unit_test_pass": "maybe"}', UNIT_TEST_PASS)
    with pytest.raises(DirectiveMalformed):
        extract_directive('{"request_blocks": "Gain"}', REQUEST_BLOCKS)
    with pytest.raises(DirectiveMalformed):
        extract_directive("{Investigator_error: ???}", INVESTIGATOR_ERROR)
    with pytest.raises(ValueError):
        extract_directive("{}", "something_else")


def test_loose_objects():
    assert parse_loose_object("{'a': True}") == {"a": True}
    assert parse_loose_object('{"a": true, "b": null}') == {"a": True, "b": None}
    assert parse_loose_object("{'a': true}") == {"a": True}


def test_braces_inside_strings_are_ignored():
    text = '{"note": "a } inside", "Investigator_error": false}'
    assert extract_directive(text, INVESTIGATOR_ERROR).value is False


@given(st.booleans(), st.text(alphabet="abc xyz.\n", max_size=40), st.text(alphabet="abc xyz.\n", max_size=40))
def test_flag_survives_surrounding_prose(flag, before, after):
    for literal in (str(flag), str(flag).lower()):
        text = f'{before}{{"Investigator_unit_test_pass": {literal}}}{after}'
        assert extract_directive(text, UNIT_TEST_PASS).value is flag
