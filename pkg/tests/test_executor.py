from __future__ import annotations

import os
import shutil
import stat
import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simukit.codegen import (
    AddBlock,
    AddLine,
    ArrangeSystem,
    BuildScript,
    NewSystem,
    OpenSystem,
    SaveSystem,
    SetParam,
    lower,
    parse_engine_script,
    render_matlab_lines,
)
from simukit.errors import ExecutionTimeout, LauncherNotFound
from simukit.executor import (
    SECOND_PORT_BUSY,
    AttachmentPolicy,
    ExecutionResult,
    ExternalConfig,
    dry_run,
    run_external,
)
from simukit.kb import PortRole, PortSpec
from simukit.netlist import Netlist, load_netlist

from conftest import FIXTURES, gt_paths

GT = [load_netlist(p) for p in gt_paths()]
HEAD = (NewSystem("m"), OpenSystem("m"))
TAIL = (ArrangeSystem("m"), SaveSystem("m", "m.slx"))


def script(*body):
    return BuildScript("m", HEAD + tuple(body) + TAIL)


def test_reviewed_bipolar_fails_at_rload_line(bipolar_reviewed, kb):
    s = lower(bipolar_reviewed, kb, "ElectricalModel")
    result = dry_run(s, kb)
    assert result.status == "failed"
    cmd = s.commands[result.failed_command_index]
    assert (cmd.src, cmd.dst) == ("RLoad/LConn1", "Current-Controlled Current source/LConn2")
    assert result.error_message == SECOND_PORT_BUSY == "The second port already has a line connection"
    prefix = BuildScript(s.model_name, s.commands[: result.failed_command_index])
    assert dry_run(prefix, kb).ok


def test_builder_listing_fails_at_same_line(kb):
    s = parse_engine_script((FIXTURES / "case_study" / "builder_response.txt").read_text())
    result = dry_run(s, kb)
    cmd = s.commands[result.failed_command_index]
    assert (cmd.src, cmd.dst) == ("RLoad/LConn1", "Current-Controlled Current source/LConn2")


def test_repaired_bipolar_runs(bipolar_final, kb):
    assert dry_run(lower(bipolar_final, kb, "ElectricalModel"), kb).ok


def test_unknown_library_path(kb):
    s = script(AddBlock("no/such/block", "m/X"))
    result = dry_run(s, kb)
    assert result.failed_command_index == 2
    assert "no/such/block" in result.error_message


def test_make_name_unique(kb):
    s = script(
        AddBlock("simulink/Sources/Constant", "m/C"),
        AddBlock("simulink/Sources/Constant", "m/C"),
        AddBlock("simulink/Commonly Used Blocks/Scope", "m/S"),
        AddLine("m", "C1/1", "S/1"),
    )
    assert dry_run(s, kb).ok
    strict = script(
        AddBlock("simulink/Sources/Constant", "m/C", make_name_unique=False),
        AddBlock("simulink/Sources/Constant", "m/C", make_name_unique=False),
    )
    assert dry_run(strict, kb).failed_command_index == 3


def test_input_takes_one_line(kb):
    s = script(
        AddBlock("simulink/Sources/Constant", "m/A"),
        AddBlock("simulink/Sources/Constant", "m/B"),
        AddBlock("simulink/Commonly Used Blocks/Scope", "m/S"),
        AddLine("m", "A/1", "S/1"),
        AddLine("m", "B/1", "S/1"),
    )
    result = dry_run(s, kb)
    assert result.failed_command_index == 6 and result.error_message == SECOND_PORT_BUSY


def test_outputs_fan_out(kb):
    s = script(
        AddBlock("simulink/Sources/Constant", "m/A"),
        AddBlock("simulink/Commonly Used Blocks/Scope", "m/S"),
        AddBlock("simulink/Sinks/Display", "m/D"),
        AddLine("m", "A/1", "S/1"),
        AddLine("m", "A/1", "D/1"),
    )
    result = dry_run(s, kb)
    assert result.ok
    assert result.port_occupancy["A/1@out"] == 2


def _resistors(n):
    return tuple(AddBlock("fl_lib/Electrical/Electrical Elements/Resistor", f"m/R{i}") for i in range(n))


def test_conserving_branch_allowed_when_one_end_free(kb):
    s = script(*_resistors(3), AddLine("m", "R0/LConn1", "R1/LConn1"), AddLine("m", "R0/LConn1", "R2/LConn1"))
    assert dry_run(s, kb).ok


def test_conserving_both_busy_rejected(kb):
    s = script(
        *_resistors(3),
        AddLine("m", "R0/LConn1", "R1/LConn1"),
        AddLine("m", "R2/LConn1", "R1/RConn1"),
        AddLine("m", "R0/LConn1", "R2/LConn1"),
    )
    result = dry_run(s, kb)
    assert result.failed_command_index == 7


def test_policy_variants():
    c = PortSpec("LConn1", PortRole.CONSERVING)
    i = PortSpec("1", PortRole.INPUT)
    o = PortSpec("1", PortRole.OUTPUT)
    assert AttachmentPolicy().admits(c, 1, c, 0)
    assert not AttachmentPolicy().admits(c, 1, c, 1)
    assert not AttachmentPolicy(conserving="any").admits(c, 1, c, 0)
    assert AttachmentPolicy(conserving="never").admits(c, 5, c, 5)
    assert not AttachmentPolicy().admits(o, 0, i, 1)
    assert AttachmentPolicy(exclusive_inputs=False).admits(o, 0, i, 1)
    with pytest.raises(ValueError):
        AttachmentPolicy(conserving="sometimes")


def test_set_param_exposes_ports(kb):
    base = (
        AddBlock("simulink/Sources/Constant", "m/A"),
        AddBlock("simulink/Math Operations/Sum", "m/Sum"),
    )
    assert dry_run(script(*base, AddLine("m", "A/1", "Sum/3")), kb).failed_command_index == 4
    ok = script(*base, SetParam("m/Sum", "Inputs", "+++"), AddLine("m", "A/1", "Sum/3"))
    assert dry_run(ok, kb).ok
    bad = script(*base, SetParam("m/Sum", "Gain", "2"))
    assert dry_run(bad, kb).failed_command_index == 4


def test_mixed_domain_rejected(kb):
    s = script(
        AddBlock("simulink/Sources/Constant", "m/A"),
        *_resistors(1),
        AddLine("m", "A/1", "R0/LConn1"),
    )
    assert "physical" in dry_run(s, kb).error_message


def test_result_invariants():
    with pytest.raises(ValueError):
        ExecutionResult("failed")
    with pytest.raises(ValueError):
        ExecutionResult("maybe")
    assert "wall_time" not in ExecutionResult("ok").to_dict(timing=False)


@pytest.mark.parametrize("gt", GT, ids=[p.stem for p in gt_paths()])
def test_gt_fixtures_dry_run_ok(gt, kb):
    assert dry_run(lower(gt, kb, "m"), kb).ok


# -- properties -----------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(GT), st.data())
def test_failure_index_is_first_violation(kb, gt, data):
    base = lower(gt, kb, "m")
    body = list(base.commands[2:-2])
    extra = data.draw(st.lists(st.sampled_from([c for c in body if isinstance(c, AddLine)]), max_size=4))
    for cmd in extra:
        body.insert(data.draw(st.integers(0, len(body))), cmd)
    s = BuildScript("m", base.commands[:2] + tuple(body) + base.commands[-2:])
    before = s.commands
    first = dry_run(s, kb)
    assert dry_run(s, kb).to_dict(timing=False) == first.to_dict(timing=False)
    assert s.commands == before
    if first.ok:
        return
    k = first.failed_command_index
    assert dry_run(BuildScript("m", s.commands[:k]), kb).ok
    assert dry_run(BuildScript("m", s.commands[: k + 1]), kb).failed_command_index == k


# -- external launcher ------------------------------------------------------------


def _launcher(tmp_path, body: str) -> str:
    path = tmp_path / "fake_matlab"
    path.write_text("#!/bin/sh\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


needs_sh = pytest.mark.skipif(shutil.which("sh") is None, reason="needs a POSIX shell")


def test_missing_launcher(kb):
    with pytest.raises(LauncherNotFound):
        run_external(script(), ExternalConfig(launcher="simukit-no-such-matlab"))
    with pytest.raises(LauncherNotFound):
        run_external(script(), ExternalConfig(launcher="/no/such/matlab"))


@needs_sh
def test_external_ok(tmp_path):
    fake = _launcher(tmp_path, '[ "$1" = "-batch" ] && [ -f "$2.m" ] && echo built && exit 0\nexit 3\n')
    result = run_external(script(), ExternalConfig(launcher=fake, temp_dir=str(tmp_path)))
    assert result.ok and "built" in result.raw_output


@needs_sh
def test_external_failure_maps_line(tmp_path, bipolar_reviewed, kb):
    s = lower(bipolar_reviewed, kb, "ElectricalModel")
    _, line_map = render_matlab_lines(s)
    line = next(n for n, i in line_map.items() if i == 30)
    fake = _launcher(
        tmp_path,
        f'echo "Error using add_line (line {line})" >&2\n'
        f'echo "{SECOND_PORT_BUSY}" >&2\nexit 1\n',
    )
    result = run_external(s, ExternalConfig(launcher=fake))
    assert result.failed_command_index == 30
    assert result.error_message == SECOND_PORT_BUSY
    assert result.failed_command_index == dry_run(s, kb).failed_command_index


@needs_sh
def test_external_failure_without_line(tmp_path):
    fake = _launcher(tmp_path, 'echo "license checkout failed" >&2\nexit 1\n')
    result = run_external(script(), ExternalConfig(launcher=fake))
    assert result.failed_command_index == 0
    assert result.error_message == "license checkout failed"


@needs_sh
def test_external_timeout(tmp_path):
    fake = _launcher(tmp_path, "exec sleep 5\n")
    with pytest.raises(ExecutionTimeout):
        run_external(script(), ExternalConfig(launcher=fake, timeout=0.3))


@pytest.mark.skipif(shutil.which("matlab") is None, reason="MATLAB not installed")
def test_real_matlab_agrees_with_dry_run(bipolar_reviewed, kb):
    s = lower(bipolar_reviewed, kb, "ElectricalModel")
    assert not run_external(s).ok


def test_no_stray_temp_files(tmp_path):
    before = set(os.listdir(tmp_path))
    if shutil.which("sh"):
        fake = _launcher(tmp_path, "exit 0\n")
        run_external(script(), ExternalConfig(launcher=fake, temp_dir=str(tmp_path)))
    assert set(os.listdir(tmp_path)) - before <= {"fake_matlab"}
