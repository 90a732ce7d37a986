from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simukit.errors import DuplicateBlockType, MalformedRecord, UnknownBlockType, UnknownParameterValue
from simukit.kb import (
    CountRule,
    KnowledgeBase,
    PortRole,
    TableRule,
    exposed_ports,
    ingest,
    lookup,
    render_descriptor,
    render_kb,
)

from conftest import KB_PATH


def _busbar_record() -> str:
    text = KB_PATH.read_text()
    start = text.index("## Busbar")
    end = text.index("---", start) + len("---")
    return text[start:end] + "\n"


def test_busbar_descriptor(kb):
    desc = lookup(kb, "Busbar")
    assert desc.library_path == "ee_lib/Connectors & References/Busbar"
    assert {p.name for p in desc.ports} == {"LConn1", "RConn1", "LConn2", "RConn2"}
    assert all(p.role is PortRole.CONSERVING for p in desc.ports)
    rule = desc.rule_for("n_nodes")
    assert isinstance(rule, TableRule)
    assert [len(rule.exposed(v)) for v in ("1", "2", "3", "4")] == [1, 2, 3, 4]
    labels = {p.name: p.visual_label for p in desc.ports}
    assert labels == {"LConn1": "~1", "RConn1": "~2", "LConn2": "~3", "RConn2": "~4"}


def test_busbar_golden_round_trip(kb):
    # The record renders back byte for byte.
    assert render_descriptor(lookup(kb, "Busbar")) == _busbar_record()


def test_kb_render_is_a_fixed_point(kb):
    text = render_kb(kb)
    assert ingest(text) == kb
    assert render_kb(ingest(text)) == text


def test_empty_document():
    assert len(ingest("")) == 0


def test_duplicate_heading():
    record = _busbar_record()
    with pytest.raises(DuplicateBlockType):
        ingest(record + "\n" + record)


def test_missing_path_is_malformed():
    with pytest.raises(MalformedRecord, match="Widget"):
        ingest("## Widget\n\n**Ports:**\n\n- **LConn1**\n---\n")


def test_missing_ports_is_malformed():
    with pytest.raises(MalformedRecord, match="Widget"):
        ingest("## Widget\n\n**Path:** `'lib/Widget'`\n---\n")


def test_lookup_normalizes(kb):
    assert lookup(kb, "busbar ").block_type == "Busbar"
    assert lookup(kb, "  BUSBAR").block_type == "Busbar"


def test_lookup_unknown_has_suggestions(kb):
    with pytest.raises(UnknownBlockType):
        lookup(kb, "Subsystem")
    with pytest.raises(UnknownBlockType) as info:
        lookup(kb, "Capacitorr")
    assert "Capacitor" in info.value.suggestions


def test_lookup_never_falls_back(kb):
    assert kb.get("Capacitorr") is None


def test_busbar_exposure(kb):
    desc = lookup(kb, "Busbar")
    assert [p.name for p in exposed_ports(desc, {"n_nodes": "2"})] == ["LConn1", "RConn1"]
    assert [p.name for p in exposed_ports(desc, {"n_nodes": "1"})] == ["LConn1"]
    with pytest.raises(UnknownParameterValue):
        exposed_ports(desc, {"n_nodes": "5"})


def test_sum_exposure_counts_signs(kb):
    desc = lookup(kb, "Sum")
    ports = exposed_ports(desc, {"Inputs": "+-"})
    inputs = sorted(p.name for p in ports if p.role is PortRole.INPUT)
    outputs = [p.name for p in ports if p.role is PortRole.OUTPUT]
    assert inputs == ["1", "2"]
    assert outputs == ["1"]


def test_sum_spacer_and_decimal(kb):
    rule = lookup(kb, "Sum").rule_for("Inputs")
    assert isinstance(rule, CountRule)
    assert rule.count("|+-") == 2
    assert rule.count("3") == 3
    with pytest.raises(UnknownParameterValue):
        rule.count("abc")


def test_unrelated_params_ignored(kb):
    desc = lookup(kb, "Gain")
    assert exposed_ports(desc, {"Inputs": "++"}) == list(desc.ports)


def test_multi_input_exemption(kb):
    exempt = {d.block_type for d in kb if d.multi_input_exempt}
    assert exempt == {"Electrical Reference", "Solver Configuration"}


def test_indexes_are_bijective(kb):
    paths = [d.library_path for d in kb]
    assert len(set(paths)) == len(paths)
    for d in kb:
        assert kb.by_library_path(d.library_path) is d
        assert kb.get(d.block_type) is d


def test_duplicate_library_path():
    a = ingest("## A\n\n**Path:** `'lib/X'`\n\n**Ports:**\n\n- **LConn1**\n---\n")
    b = ingest("## B\n\n**Path:** `'lib/X'`\n\n**Ports:**\n\n- **LConn1**\n---\n")
    with pytest.raises(MalformedRecord):
        KnowledgeBase(list(a) + list(b))


def _admissible(rule):
    if isinstance(rule, TableRule):
        return st.sampled_from(rule.domain)
    counts = st.integers(1, rule.maximum)
    signs = st.lists(st.sampled_from("+-"), min_size=1, max_size=rule.maximum).map("".join)
    return st.one_of(counts.map(str), signs)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_exposed_ports_subset_without_duplicates(kb, data):
    desc = data.draw(st.sampled_from(list(kb)))
    params = {}
    for rule in desc.exposure_rules:
        if data.draw(st.booleans()):
            params[rule.parameter] = data.draw(_admissible(rule))
    ports = exposed_ports(desc, params)
    keys = [(p.name, p.role) for p in ports]
    assert len(keys) == len(set(keys))
    assert set(ports) <= set(desc.ports)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_lookup_succeeds_exactly_for_headings(kb, data):
    chosen = data.draw(st.lists(st.sampled_from(list(kb)), unique_by=lambda d: d.key, max_size=8))
    sub = ingest(render_kb(chosen))
    for d in kb:
        assert (d.block_type in sub) == (d in chosen)
