"""Parser and printer for the block-list / connection description DSL.

A netlist file holds block lines ``Name (Type)`` followed by connection lines
``A (TypeA) PortX [(params)] <-> B (TypeB) PortY [(params)]``. The left side
of ``<->`` is the source (output) side. Parameter groups are backtick pairs,
e.g. ``(`Inputs` = `++-`)``, and bind to the endpoint they follow.

Block types may themselves contain parentheses, so the type is always the
balanced parenthesized group that closes the text (``Line 1 (Transmission
Line (Three-Phase))`` has type ``Transmission Line (Three-Phase)``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    BadBlockLine,
    BadConnectionLine,
    DuplicateBlockName,
    NetlistSyntaxError,
    SlashInName,
    TypeMismatch,
    UnknownBlockName,
)
from .kb import normalize_key

ARROW = "<->"

_PAIR_RE = re.compile(r"`(?P<k>[^`]+)`\s*=\s*`(?P<v>[^`]*)`")
_PAIR = r"`[^`]+`\s*=\s*`[^`]*`"
_PARAMS_RE = re.compile(rf"\s*{_PAIR}(?:\s*,\s*{_PAIR})*\s*")


@dataclass(frozen=True)
class ParamSetting:
    key: str
    value: str

    def __post_init__(self) -> None:
        if not self.key.strip() or not self.value.strip():
            raise ValueError(f"empty parameter setting {self.key!r} = {self.value!r}")

    def render(self) -> str:
        return f"`{self.key}` = `{self.value}`"


@dataclass(frozen=True)
class BlockInstance:
    name: str
    block_type: str

    @property
    def key(self) -> str:
        return normalize_key(self.name)

    def render(self) -> str:
        return f"{self.name} ({self.block_type})"


@dataclass(frozen=True)
class Endpoint:
    """One side of a connection, exactly as written.

    ``block_name`` and ``block_type`` keep the author's spelling; use
    :meth:`Netlist.resolve` to find the declared instance.
    """

    block_name: str
    block_type: str
    port: str
    params: tuple[ParamSetting, ...] = ()

    def render(self) -> str:
        text = f"{self.block_name} ({self.block_type}) {self.port}"
        if self.params:
            text += " (" + ", ".join(p.render() for p in self.params) + ")"
        return text


@dataclass(frozen=True)
class Connection:
    src: Endpoint
    dst: Endpoint

    def render(self) -> str:
        return f"{self.src.render()} {ARROW} {self.dst.render()}"

    @property
    def endpoints(self) -> tuple[Endpoint, Endpoint]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class Netlist:
    blocks: tuple[BlockInstance, ...] = ()
    connections: tuple[Connection, ...] = ()
    # Located problems kept by a lenient parse; not part of equality.
    errors: tuple[NetlistSyntaxError, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "connections", tuple(self.connections))
        object.__setattr__(self, "errors", tuple(self.errors))

    def block(self, name: str) -> BlockInstance | None:
        key = normalize_key(name)
        for b in self.blocks:
            if b.key == key:
                return b
        return None

    def resolve(self, endpoint: Endpoint) -> BlockInstance | None:
        return self.block(endpoint.block_name)

    def endpoints_of(self, block: BlockInstance):
        """Yield ``(index, side, endpoint)`` for every mention of ``block``."""
        for i, conn in enumerate(self.connections):
            if normalize_key(conn.src.block_name) == block.key:
                yield i, "src", conn.src
            if normalize_key(conn.dst.block_name) == block.key:
                yield i, "dst", conn.dst

    def param_mentions(self, block: BlockInstance) -> dict[str, list[str]]:
        """All values written for each parameter of ``block``, in order."""
        out: dict[str, list[str]] = {}
        for _, _, ep in self.endpoints_of(block):
            for p in ep.params:
                out.setdefault(p.key, []).append(p.value)
        return out

    def block_params(self, block: BlockInstance) -> dict[str, str]:
        """First written value per parameter; conformance judges consistency."""
        return {k: v[0] for k, v in self.param_mentions(block).items()}

    def with_connections(self, connections) -> Netlist:
        return Netlist(self.blocks, tuple(connections))


# -- parsing ------------------------------------------------------------------


def split_trailing_group(text: str) -> tuple[str, str] | None:
    """Split ``head (inner)`` where the balanced group closes ``text``.

    Returns ``None`` when ``text`` does not end with a balanced group.
    """
    text = text.rstrip()
    if not text.endswith(")"):
        return None
    depth = 0
    for i in range(len(text) - 1, -1, -1):
        c = text[i]
        if c == ")":
            depth += 1
        elif c == "(":
            depth -= 1
            if depth == 0:
                return text[:i].rstrip(), text[i + 1 : -1]
    return None


def parse_block_line(line: str, line_no: int = 1) -> BlockInstance:
    text = line.strip()
    parts = split_trailing_group(text)
    if parts is None:
        raise BadBlockLine(line_no, line, "expected 'Name (Type)'")
    name, block_type = parts[0].strip(), " ".join(parts[1].split())
    if not name or not block_type:
        raise BadBlockLine(line_no, line, "empty block name or type")
    if "/" in name:
        raise SlashInName(line_no, line, "block names must not contain '/'")
    return BlockInstance(name, block_type)


def parse_block_list(text: str) -> list[BlockInstance]:
    blocks: list[BlockInstance] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        block = parse_block_line(line, line_no)
        if block.key in seen:
            raise DuplicateBlockName(line_no, line, f"block name {block.name!r} used twice")
        seen.add(block.key)
        blocks.append(block)
    return blocks


def _parse_params(inner: str, line_no: int, line: str) -> tuple[ParamSetting, ...]:
    if not _PARAMS_RE.fullmatch(inner):
        raise BadConnectionLine(line_no, line, f"bad parameter group ({inner})")
    try:
        return tuple(
            ParamSetting(m.group("k").strip(), m.group("v").strip())
            for m in _PAIR_RE.finditer(inner)
        )
    except ValueError as exc:
        raise BadConnectionLine(line_no, line, str(exc)) from None


def _looks_like_params(inner: str) -> bool:
    return "`" in inner and "=" in inner


def parse_endpoint(text: str, line_no: int = 1, line: str | None = None) -> Endpoint:
    line = text if line is None else line
    body = text.strip()
    params: tuple[ParamSetting, ...] = ()
    group = split_trailing_group(body)
    if group is not None and _looks_like_params(group[1]):
        params = _parse_params(group[1], line_no, line)
        body = group[0]
    pieces = body.rsplit(None, 1)
    head, port = (pieces[0], pieces[1]) if len(pieces) == 2 else ("", body)
    if not head or not port or "(" in port or ")" in port:
        raise BadConnectionLine(line_no, line, "expected 'Name (Type) Port'")
    typed = split_trailing_group(head)
    if typed is None:
        raise BadConnectionLine(line_no, line, "missing '(Type)' before the port")
    name, block_type = typed[0].strip(), " ".join(typed[1].split())
    if not name or not block_type:
        raise BadConnectionLine(line_no, line, "empty block name or type")
    return Endpoint(name, block_type, port, params)


def parse_connection_line(line: str, line_no: int = 1) -> Connection:
    if line.count(ARROW) != 1:
        raise BadConnectionLine(line_no, line, f"expected exactly one '{ARROW}'")
    left, right = line.split(ARROW)
    return Connection(parse_endpoint(left, line_no, line), parse_endpoint(right, line_no, line))


def _check_against(conn: Connection, blocks: dict[str, BlockInstance], line_no: int, line: str):
    for ep in conn.endpoints:
        block = blocks.get(normalize_key(ep.block_name))
        if block is None:
            raise UnknownBlockName(line_no, line, f"block {ep.block_name!r} is not declared")
        if normalize_key(block.block_type) != normalize_key(ep.block_type):
            raise TypeMismatch(
                line_no,
                line,
                f"{ep.block_name!r} is declared as {block.block_type!r}, not {ep.block_type!r}",
            )


def parse_connections(text: str, blocks) -> list[Connection]:
    """Parse connection lines and resolve every endpoint against ``blocks``."""
    index = {b.key: b for b in blocks}
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        conn = parse_connection_line(line, line_no)
        _check_against(conn, index, line_no, line)
        out.append(conn)
    return out


def parse_netlist(text: str, strict: bool = True) -> Netlist:
    """Parse a whole netlist file.

    Lines containing ``<->`` are connections, every other non-blank line is a
    block declaration. With ``strict=False`` nothing is raised: unparseable
    lines are collected in ``Netlist.errors`` and unresolved or mistyped
    endpoints are kept for the conformance checks to report.
    """
    blocks: list[BlockInstance] = []
    connections: list[Connection] = []
    errors: list[NetlistSyntaxError] = []
    pending: list[tuple[int, str, Connection]] = []
    seen: set[str] = set()

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            if ARROW in line:
                pending.append((line_no, line, parse_connection_line(line, line_no)))
                continue
            try:
                block = parse_block_line(line, line_no)
            except SlashInName:
                if strict:
                    raise
                parts = split_trailing_group(line.strip())
                block = BlockInstance(parts[0].strip(), " ".join(parts[1].split()))
            if block.key in seen and strict:
                raise DuplicateBlockName(line_no, line, f"block name {block.name!r} used twice")
            seen.add(block.key)
            blocks.append(block)
        except NetlistSyntaxError as exc:
            if strict:
                raise
            errors.append(exc)

    index = {}
    for b in blocks:
        index.setdefault(b.key, b)
    for line_no, line, conn in pending:
        if strict:
            _check_against(conn, index, line_no, line)
        connections.append(conn)
    return Netlist(tuple(blocks), tuple(connections), tuple(errors))


def load_netlist(path, strict: bool = True) -> Netlist:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read(), strict=strict)


# -- printing -----------------------------------------------------------------


def render_block_list(blocks) -> str:
    return "".join(b.render() + "\n" for b in blocks)


def render_connections(connections) -> str:
    return "".join(c.render() + "\n" for c in connections)


def render(netlist: Netlist) -> str:
    parts = []
    if netlist.blocks:
        parts.append(render_block_list(netlist.blocks))
    if netlist.connections:
        parts.append(render_connections(netlist.connections))
    return "\n".join(parts)


# -- agent text ---------------------------------------------------------------

_ROLE_PREFIX = re.compile(r"^\s*\[[A-Za-z_ ]+\]\s*")


def scan_agent_text(text: str) -> tuple[list[str], list[str]]:
    """Pick block lines and connection lines out of free-form agent output.

    Fence markers, headings and brace-delimited JSON objects are skipped, but
    fenced lines are kept since agents often fence their netlist. A block
    line is any remaining line that ends in a parenthesized type.
    """
    blocks: list[str] = []
    connections: list[str] = []
    depth = 0
    for raw in text.splitlines():
        line = _ROLE_PREFIX.sub("", raw).strip()
        if depth or line.startswith("{"):
            depth += line.count("{") - line.count("}")
            depth = max(depth, 0)
            continue
        if not line or line.startswith(("```", "'''", "#")):
            continue
        if ARROW in line:
            connections.append(line)
        elif split_trailing_group(line) is not None and not line.endswith(":"):
            head = split_trailing_group(line)[0]
            if head and len(head) < 120:
                blocks.append(line)
    return blocks, connections
