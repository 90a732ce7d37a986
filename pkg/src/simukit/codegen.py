"""Build-command IR, lowering from a netlist, and the two script renderers."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Union

from .conformance import validate
from .errors import ScriptSyntaxError, UnvalidatedNetlist
from .kb import KnowledgeBase, lookup
from .netlist import Netlist


@dataclass(frozen=True)
class NewSystem:
    model: str


@dataclass(frozen=True)
class OpenSystem:
    model: str


@dataclass(frozen=True)
class AddBlock:
    library_path: str
    dest_path: str
    make_name_unique: bool = True


@dataclass(frozen=True)
class AddLine:
    model: str
    src: str
    dst: str


@dataclass(frozen=True)
class SetParam:
    block_path: str
    key: str
    value: str


@dataclass(frozen=True)
class ArrangeSystem:
    model: str


@dataclass(frozen=True)
class SaveSystem:
    model: str
    file: str


BuildCommand = Union[NewSystem, OpenSystem, AddBlock, AddLine, SetParam, ArrangeSystem, SaveSystem]
COMMAND_TYPES = (NewSystem, OpenSystem, AddBlock, AddLine, SetParam, ArrangeSystem, SaveSystem)


@dataclass(frozen=True)
class BuildScript:
    model_name: str
    commands: tuple = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "commands", tuple(self.commands))
        for cmd in self.commands:
            if not isinstance(cmd, COMMAND_TYPES):
                raise TypeError(f"not a build command: {cmd!r}")

    def count(self, kind) -> int:
        return sum(1 for c in self.commands if isinstance(c, kind))


def sanitize_model_name(stem: str) -> str:
    """MATLAB model names: a letter first, then letters, digits, underscores."""
    name = re.sub(r"\W", "_", stem, flags=re.ASCII).strip("_")
    if not name or not name[0].isalpha():
        name = "model_" + name
    return name[:63]


def lower(netlist: Netlist, kb: KnowledgeBase, model_name: str, check: bool = True) -> BuildScript:
    """Translate a netlist into build commands.

    With ``check`` the netlist must pass validation first; blocks are added in
    declaration order, each followed by its port-count settings, then one line
    per connection.
    """
    if check:
        report = validate(netlist, kb)
        if not report.passed:
            raise UnvalidatedNetlist(report)
    if not netlist.blocks:
        raise UnvalidatedNetlist()
    cmds: list = [NewSystem(model_name), OpenSystem(model_name)]
    for block in netlist.blocks:
        desc = lookup(kb, block.block_type)
        dest = f"{model_name}/{block.name}"
        cmds.append(AddBlock(desc.library_path, dest, True))
        params = netlist.block_params(block)
        for rule in desc.exposure_rules:
            if rule.parameter in params:
                cmds.append(SetParam(dest, rule.parameter, params[rule.parameter]))
    for conn in netlist.connections:
        ends = []
        for ep in conn.endpoints:
            block = netlist.resolve(ep)
            ends.append(f"{block.name if block else ep.block_name}/{ep.port}")
        cmds.append(AddLine(model_name, ends[0], ends[1]))
    cmds += [ArrangeSystem(model_name), SaveSystem(model_name, model_name + ".slx")]
    return BuildScript(model_name, tuple(cmds))


def _block_of(path: str) -> str:
    return path.rsplit("/", 1)[0]


def script_problems(script: BuildScript) -> list[str]:
    """Structural invariants of a script; empty when it is well formed."""
    out = []
    cmds = script.commands
    if len(cmds) < 4:
        return ["script is shorter than its header and footer"]
    if not isinstance(cmds[0], NewSystem) or not isinstance(cmds[1], OpenSystem):
        out.append("script must begin with new_system, open_system")
    if not isinstance(cmds[-2], ArrangeSystem) or not isinstance(cmds[-1], SaveSystem):
        out.append("script must end with arrangeSystem, save_system")
    added: set[str] = set()
    wired: set[str] = set()
    for i, cmd in enumerate(cmds):
        if isinstance(cmd, AddBlock):
            added.add(cmd.dest_path)
        elif isinstance(cmd, SetParam):
            if cmd.block_path not in added:
                out.append(f"command {i}: set_param on {cmd.block_path!r} before it is added")
            if cmd.block_path in wired:
                out.append(f"command {i}: set_param on {cmd.block_path!r} after it is wired")
        elif isinstance(cmd, AddLine):
            for end in (cmd.src, cmd.dst):
                path = f"{cmd.model}/{_block_of(end)}"
                if path not in added:
                    out.append(f"command {i}: line endpoint {end!r} names a block not yet added")
                wired.add(path)
    return out


# -- MATLAB-native rendering ----------------------------------------------------


def _m_str(s: str) -> str:
    return "'" + s.replace("'", "''") + "'"


def _m_path(model: str, path: str) -> str:
    prefix = model + "/"
    if path.startswith(prefix):
        return f"[model_name {_m_str('/' + path[len(prefix):])}]"
    return _m_str(path)


def _m_command(cmd, model: str, autorouting: bool) -> str:
    if isinstance(cmd, NewSystem):
        return f"new_system({_m_model(cmd.model, model)});"
    if isinstance(cmd, OpenSystem):
        return f"open_system({_m_model(cmd.model, model)});"
    if isinstance(cmd, AddBlock):
        extra = ", 'MakeNameUnique', 'on'" if cmd.make_name_unique else ""
        return f"add_block({_m_str(cmd.library_path)}, {_m_path(model, cmd.dest_path)}{extra});"
    if isinstance(cmd, SetParam):
        return f"set_param({_m_path(model, cmd.block_path)}, {_m_str(cmd.key)}, {_m_str(cmd.value)});"
    if isinstance(cmd, AddLine):
        extra = ", 'autorouting', 'on'" if autorouting else ""
        return f"add_line({_m_model(cmd.model, model)}, {_m_str(cmd.src)}, {_m_str(cmd.dst)}{extra});"
    if isinstance(cmd, ArrangeSystem):
        return f"Simulink.BlockDiagram.arrangeSystem({_m_model(cmd.model, model)});"
    if isinstance(cmd, SaveSystem):
        target = "[model_name '.slx']" if cmd.file == cmd.model + ".slx" and cmd.model == model else _m_str(cmd.file)
        return f"save_system({_m_model(cmd.model, model)}, {target});"
    raise TypeError(cmd)


def _m_model(name: str, model: str) -> str:
    return "model_name" if name == model else _m_str(name)


def render_matlab_lines(script: BuildScript, autorouting: bool = False) -> tuple[str, dict[int, int]]:
    """Render a ``.m`` script and map 1-based text lines to command indices."""
    lines = [f"model_name = {_m_str(script.model_name)};"]
    line_map: dict[int, int] = {}
    for i, cmd in enumerate(script.commands):
        lines.append(_m_command(cmd, script.model_name, autorouting))
        line_map[len(lines)] = i
    return "\n".join(lines) + "\n", line_map


def render_matlab(script: BuildScript, autorouting: bool = False) -> str:
    return render_matlab_lines(script, autorouting)[0]


# -- matlab.engine rendering ----------------------------------------------------

ENGINE_HEADER = (
    "import sys\n"
    "# sys.path.append(<matlab engine install directory>)\n"
    "import matlab.engine\n"
    "\n"
    "eng = matlab.engine.start_matlab()\n"
)

# Callables a build script may use; everything else is rejected.
ENGINE_CALLS = (
    "new_system",
    "open_system",
    "add_block",
    "add_line",
    "set_param",
    "Simulink.BlockDiagram.arrangeSystem",
    "save_system",
)
ENGINE_BOILERPLATE = ("matlab.engine.start_matlab", "sys.path.append", "eng.quit")


def _py_str(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'") + "'"


def _py_path(model: str, path: str) -> str:
    prefix = model + "/"
    if path.startswith(prefix):
        return f"model_name + {_py_str('/' + path[len(prefix):])}"
    return _py_str(path)


def _py_model(name: str, model: str) -> str:
    return "model_name" if name == model else _py_str(name)


def engine_statement(cmd, model: str, autorouting: bool) -> str:
    if isinstance(cmd, NewSystem):
        return f"eng.new_system({_py_model(cmd.model, model)}, nargout=0)"
    if isinstance(cmd, OpenSystem):
        return f"eng.open_system({_py_model(cmd.model, model)}, nargout=0)"
    if isinstance(cmd, AddBlock):
        extra = ", 'MakeNameUnique', 'on'" if cmd.make_name_unique else ""
        return f"eng.add_block({_py_str(cmd.library_path)}, {_py_path(model, cmd.dest_path)}{extra}, nargout=0)"
    if isinstance(cmd, SetParam):
        return (
            f"eng.set_param({_py_path(model, cmd.block_path)}, {_py_str(cmd.key)}, "
            f"{_py_str(cmd.value)}, nargout=0)"
        )
    if isinstance(cmd, AddLine):
        extra = ", 'autorouting', 'on'" if autorouting else ""
        return (
            f"eng.add_line({_py_model(cmd.model, model)}, {_py_str(cmd.src)}, "
            f"{_py_str(cmd.dst)}{extra}, nargout=0)"
        )
    if isinstance(cmd, ArrangeSystem):
        return f"eng.Simulink.BlockDiagram.arrangeSystem({_py_model(cmd.model, model)}, nargout=0)"
    if isinstance(cmd, SaveSystem):
        if cmd.model == model and cmd.file == model + ".slx":
            target = "model_name + '.slx'"
        else:
            target = _py_str(cmd.file)
        return f"eng.save_system({_py_model(cmd.model, model)}, {target}, nargout=0)"
    raise TypeError(cmd)


def render_engine_script(script: BuildScript, autorouting: bool = False) -> str:
    """Render the Python matlab.engine dialect used by the Builder agent."""
    sections: list[list[str]] = [[f"model_name = {_py_str(script.model_name)}"]]
    current = None
    for cmd in script.commands:
        group = {AddBlock: "blocks", SetParam: "blocks", AddLine: "lines"}.get(type(cmd), type(cmd).__name__)
        if group in ("NewSystem", "OpenSystem"):
            group = "open"
        if group != current and not (current is None and group == "open"):
            sections.append([])
        current = group
        sections[-1].append(engine_statement(cmd, script.model_name, autorouting))
    body = "\n\n".join("\n".join(s) for s in sections if s)
    return ENGINE_HEADER + "\n" + body + "\n"


# -- reading Builder output back --------------------------------------------------

_FENCE_RE = re.compile(r"```[ \t]*(?:python|py)?[ \t]*\n(.*?)```", re.S)
_ROLE_RE = re.compile(r"^\s*\[[A-Za-z_ ]+\]\s*")


def extract_code(text: str) -> str:
    """Code part of a Builder response: the first fenced block, else the text."""
    m = _FENCE_RE.search(text)
    code = m.group(1) if m else text
    return _ROLE_RE.sub("", code, count=1)


def _dotted(node) -> str | None:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        base = _dotted(node.value)
        return f"{base}.{node.attr}" if base else None
    return None


class _Reader:
    def __init__(self) -> None:
        self.env: dict[str, str] = {}
        self.engine: str | None = None
        self.commands: list = []
        self.model: str | None = None

    def value(self, node, line: int) -> str:
        if isinstance(node, ast.Constant) and isinstance(node.value, str):
            return node.value
        if isinstance(node, ast.Name) and node.id in self.env:
            return self.env[node.id]
        if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
            return self.value(node.left, line) + self.value(node.right, line)
        raise ScriptSyntaxError(f"line {line}: unsupported argument expression")

    def statement(self, node) -> None:
        line = getattr(node, "lineno", 0)
        if isinstance(node, (ast.Import, ast.ImportFrom)):
            return
        if isinstance(node, ast.Assign) and len(node.targets) == 1 and isinstance(node.targets[0], ast.Name):
            target = node.targets[0].id
            if isinstance(node.value, ast.Call) and _dotted(node.value.func) == "matlab.engine.start_matlab":
                self.engine = target
                return
            self.env[target] = self.value(node.value, line)
            return
        if isinstance(node, ast.Expr) and isinstance(node.value, ast.Call):
            self.call(node.value, line)
            return
        raise ScriptSyntaxError(f"line {line}: unsupported statement {type(node).__name__}")

    def call(self, call: ast.Call, line: int) -> None:
        name = _dotted(call.func)
        if name is None:
            raise ScriptSyntaxError(f"line {line}: unsupported call")
        if name in ("sys.path.append",):
            return
        if self.engine is None or not name.startswith(self.engine + "."):
            raise ScriptSyntaxError(f"line {line}: call to {name!r} outside the engine")
        fn = name[len(self.engine) + 1 :]
        if fn == "quit":
            return
        if fn not in ENGINE_CALLS:
            raise ScriptSyntaxError(f"line {line}: {fn!r} is not a permitted build function")
        args = [self.value(a, line) for a in call.args]
        self.commands.append(self.build(fn, args, line))

    def build(self, fn: str, args: list[str], line: int):
        def need(n: int) -> None:
            if len(args) < n:
                raise ScriptSyntaxError(f"line {line}: {fn} expects at least {n} arguments")

        if fn == "new_system":
            need(1)
            self.model = args[0]
            return NewSystem(args[0])
        if fn == "open_system":
            need(1)
            return OpenSystem(args[0])
        if fn == "add_block":
            need(2)
            opts = dict(zip(args[2::2], args[3::2]))
            unique = any(k.lower() == "makenameunique" and v.lower() == "on" for k, v in opts.items())
            return AddBlock(args[0], args[1], unique)
        if fn == "add_line":
            need(3)
            return AddLine(args[0], args[1], args[2])
        if fn == "set_param":
            need(3)
            return SetParam(args[0], args[1], args[2])
        if fn == "Simulink.BlockDiagram.arrangeSystem":
            need(1)
            return ArrangeSystem(args[0])
        need(2)
        return SaveSystem(args[0], args[1])


def parse_engine_script(text: str) -> BuildScript:
    """Read a matlab.engine script (or a Builder response holding one)."""
    code = extract_code(text)
    try:
        tree = ast.parse(code)
    except SyntaxError as exc:
        raise ScriptSyntaxError(f"line {exc.lineno}: {exc.msg}") from None
    reader = _Reader()
    for node in tree.body:
        reader.statement(node)
    if not reader.commands:
        raise ScriptSyntaxError("no build commands found")
    return BuildScript(reader.model or reader.env.get("model_name", ""), tuple(reader.commands))


_CALL_RE = re.compile(r"([A-Za-z_][\w.]*)\s*\(")
# Single-quoted literals in either dialect: backslash escapes or doubled quotes.
_STRING_RE = re.compile(r"'(?:[^'\\\n]|\\.|'')*'|\"(?:[^\"\\\n]|\\.)*\"")


def called_names(text: str) -> set[str]:
    """Every dotted name called in ``text`` outside string literals, minus any ``eng.`` prefix."""
    names = set()
    for line in text.splitlines():
        if line.lstrip().startswith(("#", "%")):
            continue
        for m in _CALL_RE.finditer(_STRING_RE.sub("''", line)):
            name = m.group(1)
            names.add(name[4:] if name.startswith("eng.") else name)
    return names
