"""Run build scripts: a MATLAB-free dry run and an external MATLAB batch run."""

from __future__ import annotations

import os
import re
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

from .codegen import (
    AddBlock,
    AddLine,
    ArrangeSystem,
    BuildScript,
    NewSystem,
    OpenSystem,
    SaveSystem,
    SetParam,
    render_matlab_lines,
)
from .errors import ExecutionTimeout, LauncherNotFound, UnknownParameterValue
from .kb import BlockDescriptor, KnowledgeBase, PortRole, PortSpec, exposed_ports

SECOND_PORT_BUSY = "The second port already has a line connection"
DEFAULT_TIMEOUT = 600.0


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    failed_command_index: int | None = None
    error_message: str = ""
    wall_time: float = 0.0
    port_occupancy: dict = field(default_factory=dict)
    raw_output: str = ""

    def __post_init__(self) -> None:
        if self.status not in ("ok", "failed"):
            raise ValueError(f"bad status {self.status!r}")
        if self.status == "failed" and (self.failed_command_index is None or not self.error_message):
            raise ValueError("a failed result needs a command index and a message")
        if self.wall_time < 0:
            raise ValueError("negative wall time")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "status": self.status,
            "failed_command_index": self.failed_command_index,
            "error_message": self.error_message,
            "port_occupancy": dict(sorted(self.port_occupancy.items())),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass(frozen=True)
class AttachmentPolicy:
    """When a new line may attach to ports that already carry lines.

    ``exclusive_inputs``: a dedicated input accepts a single line.
    ``conserving``: for conserving-to-conserving lines, ``"both"`` rejects only
    when both ends are already wired, ``"any"`` when either is, ``"never"``
    always branches.
    """

    exclusive_inputs: bool = True
    conserving: str = "both"

    def __post_init__(self) -> None:
        if self.conserving not in ("both", "any", "never"):
            raise ValueError(f"unknown conserving rule {self.conserving!r}")

    def admits(self, src: PortSpec, src_lines: int, dst: PortSpec, dst_lines: int) -> bool:
        if dst.role is PortRole.INPUT and self.exclusive_inputs and dst_lines > 0:
            return False
        if src.role is PortRole.CONSERVING and dst.role is PortRole.CONSERVING:
            if self.conserving == "both":
                return not (src_lines > 0 and dst_lines > 0)
            if self.conserving == "any":
                return not (src_lines > 0 or dst_lines > 0)
        return True


class _Failure(Exception):
    pass


@dataclass
class _Block:
    desc: BlockDescriptor
    params: dict = field(default_factory=dict)


class _DryRun:
    def __init__(self, kb: KnowledgeBase, policy: AttachmentPolicy) -> None:
        self.kb = kb
        self.policy = policy
        self.models: set[str] = set()
        self.blocks: dict[str, _Block] = {}
        self.occupancy: dict[str, int] = {}

    def _model(self, name: str) -> None:
        if name not in self.models:
            raise _Failure(f"Invalid Simulink object name: '{name}'")

    def _block(self, path: str) -> _Block:
        if path not in self.blocks:
            raise _Failure(f"Invalid Simulink object name: '{path}'")
        return self.blocks[path]

    def apply(self, cmd) -> None:
        if isinstance(cmd, NewSystem):
            if cmd.model in self.models:
                raise _Failure(f"A model named '{cmd.model}' is already loaded")
            self.models.add(cmd.model)
        elif isinstance(cmd, (OpenSystem, ArrangeSystem, SaveSystem)):
            self._model(cmd.model)
        elif isinstance(cmd, AddBlock):
            self.add_block(cmd)
        elif isinstance(cmd, SetParam):
            self.set_param(cmd)
        elif isinstance(cmd, AddLine):
            self.add_line(cmd)
        else:
            raise _Failure(f"unsupported command {type(cmd).__name__}")

    def add_block(self, cmd: AddBlock) -> None:
        desc = self.kb.by_library_path(cmd.library_path)
        if desc is None:
            raise _Failure(f"There is no block named '{cmd.library_path}'")
        model, _, name = cmd.dest_path.partition("/")
        self._model(model)
        if not name:
            raise _Failure(f"Invalid destination '{cmd.dest_path}'")
        path = cmd.dest_path
        if path in self.blocks:
            if not cmd.make_name_unique:
                raise _Failure(f"A block named '{name}' already exists in '{model}'")
            k = 1
            while f"{path}{k}" in self.blocks:
                k += 1
            path = f"{path}{k}"
        self.blocks[path] = _Block(desc)

    def set_param(self, cmd: SetParam) -> None:
        block = self._block(cmd.block_path)
        rule = block.desc.rule_for(cmd.key)
        if rule is None:
            raise _Failure(f"{block.desc.block_type} block does not have a parameter named '{cmd.key}'")
        try:
            rule.exposed(cmd.value, block.desc.block_type)
        except UnknownParameterValue:
            raise _Failure(f"Invalid setting in '{cmd.block_path}' for parameter '{cmd.key}'") from None
        block.params[rule.parameter] = cmd.value

    def _port(self, model: str, end: str, side: str) -> tuple[str, PortSpec]:
        name, sep, port_name = end.rpartition("/")
        if not sep or not name:
            raise _Failure(f"Invalid port specification '{end}'")
        block = self._block(f"{model}/{name}")
        port = block.desc.resolve_port(port_name, side)
        exposed = {(p.name, p.role) for p in exposed_ports(block.desc, block.params)}
        if port is None or (port.name, port.role) not in exposed:
            raise _Failure(f"Invalid Simulink object name: '{end}'")
        if port.role is PortRole.CONSERVING:
            key = f"{name}/{port.name}"
        else:
            key = f"{name}/{port.name}@{'in' if port.role is PortRole.INPUT else 'out'}"
        return key, port

    def add_line(self, cmd: AddLine) -> None:
        self._model(cmd.model)
        skey, src = self._port(cmd.model, cmd.src, "src")
        dkey, dst = self._port(cmd.model, cmd.dst, "dst")
        if src.role is PortRole.INPUT:
            raise _Failure(f"'{cmd.src}' is an input port and cannot start a line")
        if dst.role is PortRole.OUTPUT:
            raise _Failure(f"'{cmd.dst}' is an output port and cannot end a line")
        if (src.role is PortRole.CONSERVING) != (dst.role is PortRole.CONSERVING):
            raise _Failure(f"Cannot connect signal port to physical port ('{cmd.src}', '{cmd.dst}')")
        if not self.policy.admits(src, self.occupancy.get(skey, 0), dst, self.occupancy.get(dkey, 0)):
            raise _Failure(SECOND_PORT_BUSY)
        self.occupancy[skey] = self.occupancy.get(skey, 0) + 1
        self.occupancy[dkey] = self.occupancy.get(dkey, 0) + 1


def dry_run(script: BuildScript, kb: KnowledgeBase, policy: AttachmentPolicy | None = None) -> ExecutionResult:
    """Interpret ``script`` in order; the first illegal command stops the run."""
    start = time.perf_counter()
    state = _DryRun(kb, policy or AttachmentPolicy())
    for i, cmd in enumerate(script.commands):
        try:
            state.apply(cmd)
        except _Failure as exc:
            return ExecutionResult(
                "failed", i, str(exc), time.perf_counter() - start, dict(state.occupancy)
            )
    return ExecutionResult("ok", None, "", time.perf_counter() - start, dict(state.occupancy))


# -- external MATLAB ------------------------------------------------------------


@dataclass(frozen=True)
class ExternalConfig:
    launcher: str = "matlab"
    timeout: float = DEFAULT_TIMEOUT
    temp_dir: str | None = None
    autorouting: bool = False


_LINE_RE = re.compile(r"\(line (\d+)\)")


def _resolve_launcher(launcher: str) -> str:
    if os.sep in launcher or (os.altsep and os.altsep in launcher):
        if os.path.isfile(launcher) and os.access(launcher, os.X_OK):
            return launcher
        raise LauncherNotFound(f"MATLAB launcher {launcher!r} is not an executable file")
    found = shutil.which(launcher)
    if found is None:
        raise LauncherNotFound(f"MATLAB launcher {launcher!r} not found on PATH")
    return found


def _first_error_line(text: str) -> str:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    for ln in lines:
        if not ln.startswith(("Error using", "Error in")):
            return ln
    return lines[0] if lines else ""


def run_external(script: BuildScript, config: ExternalConfig | None = None) -> ExecutionResult:
    """Render ``script`` to a ``.m`` file and run it with ``launcher -batch``."""
    config = config or ExternalConfig()
    launcher = _resolve_launcher(config.launcher)
    text, line_map = render_matlab_lines(script, config.autorouting)
    stem = "build_" + re.sub(r"\W", "_", script.model_name, flags=re.ASCII)
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(dir=config.temp_dir, prefix="simukit_") as tmp:
        with open(os.path.join(tmp, stem + ".m"), "w", encoding="utf-8") as fh:
            fh.write(text)
        try:
            proc = subprocess.run(
                [launcher, "-batch", stem],
                cwd=tmp,
                capture_output=True,
                text=True,
                timeout=config.timeout,
            )
        except subprocess.TimeoutExpired:
            raise ExecutionTimeout(config.timeout) from None
    elapsed = time.perf_counter() - start
    raw = proc.stdout + proc.stderr
    if proc.returncode == 0:
        return ExecutionResult("ok", None, "", elapsed, {}, raw)
    index = 0
    for m in _LINE_RE.finditer(proc.stderr or raw):
        line = int(m.group(1))
        if line in line_map:
            index = line_map[line]
            break
    message = _first_error_line(proc.stderr) or _first_error_line(proc.stdout)
    message = message or f"MATLAB exited with status {proc.returncode}"
    return ExecutionResult("failed", index, message, elapsed, {}, raw)
