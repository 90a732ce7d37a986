"""Block knowledge base: ingest, lookup and port exposure.

The KB document is markdown. Each record looks like::

    ## Busbar

    **Path:** `'ee_lib/Connectors & References/Busbar'`

    **Ports:**

    - When **`n_nodes`** is set to **1**, the exposed port is:
      - **LConn1**
    ...
    ---

Bold markers are decorative and ignored. Ports listed under an ``Input Port``
or ``Output Port`` heading are dedicated signal ports; every other port is a
conserving (physical network) port. ``When `p` is set to v`` groups declare
ports whose presence depends on a parameter, and a heading of the form
``Input Ports: 1 to N, where N is given by `Inputs` (..., at most 8)``
declares a count-driven port range (``Inputs`` may be a count or a sign string
such as ``++-``).
"""

from __future__ import annotations

import difflib
import enum
import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field

from .errors import (
    DuplicateBlockType,
    MalformedRecord,
    UnknownBlockType,
    UnknownParameterValue,
)

MULTI_INPUT_EXEMPT = frozenset({"electrical reference", "solver configuration"})

_SIGN_CHARS = "+-"
_SPACER = "|"


class PortRole(str, enum.Enum):
    INPUT = "dedicated-input"
    OUTPUT = "dedicated-output"
    CONSERVING = "conserving"

    @property
    def is_dedicated(self) -> bool:
        return self is not PortRole.CONSERVING


_ROLE_ORDER = {PortRole.CONSERVING: 0, PortRole.INPUT: 1, PortRole.OUTPUT: 2}


def normalize_key(text: str) -> str:
    """Case-insensitive, whitespace-collapsed key used for types and names."""
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class TableRule:
    """Explicit mapping from parameter values to exposed port names."""

    parameter: str
    role: PortRole
    table: tuple[tuple[str, tuple[str, ...]], ...]

    @property
    def domain(self) -> tuple[str, ...]:
        return tuple(value for value, _ in self.table)

    @property
    def governed(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for _, ports in self.table:
            seen.update(dict.fromkeys(ports))
        return tuple(seen)

    def exposed(self, value: str, block_type: str = "?") -> frozenset[str]:
        value = _clean_value(value)
        for candidate, ports in self.table:
            if candidate == value:
                return frozenset(ports)
        raise UnknownParameterValue(block_type, self.parameter, value)


@dataclass(frozen=True)
class CountRule:
    """Port range ``start .. start+n-1`` where ``n`` comes from the parameter.

    The value is either a decimal count or a sign string; each ``+``/``-``
    adds one port and ``|`` is a spacer.
    """

    parameter: str
    role: PortRole
    start: int
    maximum: int

    @property
    def governed(self) -> tuple[str, ...]:
        return tuple(str(self.start + i) for i in range(self.maximum))

    def count(self, value: str, block_type: str = "?") -> int:
        value = _clean_value(value)
        if value.isdigit():
            n = int(value)
        elif value and all(c in _SIGN_CHARS + _SPACER for c in value):
            n = sum(c in _SIGN_CHARS for c in value)
        else:
            raise UnknownParameterValue(block_type, self.parameter, value)
        if not 1 <= n <= self.maximum:
            raise UnknownParameterValue(block_type, self.parameter, value)
        return n

    def exposed(self, value: str, block_type: str = "?") -> frozenset[str]:
        n = self.count(value, block_type)
        return frozenset(str(self.start + i) for i in range(n))


ExposureRule = TableRule | CountRule


def _clean_value(value: str) -> str:
    return str(value).strip().strip("`'\"").strip()


@dataclass(frozen=True)
class PortSpec:
    name: str
    role: PortRole
    visual_label: str | None = None
    description: str = ""
    exposure: ExposureRule | None = None

    def __post_init__(self) -> None:
        if not self.name or any(c.isspace() for c in self.name) or "/" in self.name:
            raise ValueError(f"invalid port name {self.name!r}")


@dataclass(frozen=True)
class BlockDescriptor:
    block_type: str
    library_path: str
    ports: tuple[PortSpec, ...]
    exposure_rules: tuple[ExposureRule, ...] = ()
    summary: str = ""
    notes: str = ""

    def __post_init__(self) -> None:
        if not self.library_path:
            raise MalformedRecord(self.block_type, "empty library path")
        seen = set()
        for port in self.ports:
            # Input 1 and output 1 may share a name; a conserving port may not.
            keys = (
                [(port.name, PortRole.INPUT), (port.name, PortRole.OUTPUT)]
                if port.role is PortRole.CONSERVING
                else [(port.name, port.role)]
            )
            if any(k in seen for k in keys) or (port.name, PortRole.CONSERVING) in seen:
                raise MalformedRecord(self.block_type, f"port {port.name!r} declared twice")
            seen.add((port.name, port.role))

    @property
    def key(self) -> str:
        return normalize_key(self.block_type)

    @property
    def multi_input_exempt(self) -> bool:
        return self.key in MULTI_INPUT_EXEMPT

    @property
    def parameters(self) -> tuple[str, ...]:
        return tuple(rule.parameter for rule in self.exposure_rules)

    def rule_for(self, parameter: str) -> ExposureRule | None:
        for rule in self.exposure_rules:
            if rule.parameter == parameter:
                return rule
        return None

    def ports_named(self, name: str) -> list[PortSpec]:
        return [p for p in self.ports if p.name == name]

    def resolve_port(self, name: str, side: str) -> PortSpec | None:
        """Find the port an endpoint refers to.

        ``side`` is ``"src"`` (left of ``<->``) or ``"dst"``. The role-correct
        port wins when a name exists with several roles (Gain's in/out ``1``);
        otherwise any port carrying the name is returned so callers can report
        a role violation.
        """
        candidates = self.ports_named(name)
        if not candidates:
            return None
        preferred = PortRole.OUTPUT if side == "src" else PortRole.INPUT
        for role in (preferred, PortRole.CONSERVING):
            for port in candidates:
                if port.role is role:
                    return port
        return candidates[0]

    @property
    def has_only_outputs(self) -> bool:
        return bool(self.ports) and all(p.role is PortRole.OUTPUT for p in self.ports)

    @property
    def has_only_inputs(self) -> bool:
        return bool(self.ports) and all(p.role is PortRole.INPUT for p in self.ports)


class KnowledgeBase:
    """Immutable set of descriptors indexed by normalized type and by path."""

    def __init__(self, descriptors: Iterable[BlockDescriptor] = ()) -> None:
        by_type: dict[str, BlockDescriptor] = {}
        by_path: dict[str, str] = {}
        for desc in descriptors:
            if desc.key in by_type:
                raise DuplicateBlockType(desc.block_type)
            if desc.library_path in by_path:
                raise MalformedRecord(
                    desc.block_type, f"library path {desc.library_path!r} already used"
                )
            by_type[desc.key] = desc
            by_path[desc.library_path] = desc.key
        self._by_type = by_type
        self._by_path = by_path

    def __len__(self) -> int:
        return len(self._by_type)

    def __iter__(self) -> Iterator[BlockDescriptor]:
        return iter(self._by_type.values())

    def __contains__(self, block_type: object) -> bool:
        return isinstance(block_type, str) and normalize_key(block_type) in self._by_type

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KnowledgeBase) and list(self) == list(other)

    @property
    def block_types(self) -> list[str]:
        return [d.block_type for d in self]

    def get(self, block_type: str) -> BlockDescriptor | None:
        return self._by_type.get(normalize_key(block_type))

    def by_library_path(self, path: str) -> BlockDescriptor | None:
        key = self._by_path.get(path)
        return self._by_type[key] if key is not None else None

    def suggestions(self, block_type: str, n: int = 3) -> list[str]:
        keys = difflib.get_close_matches(normalize_key(block_type), list(self._by_type), n=n)
        return [self._by_type[k].block_type for k in keys]

    def subset(self, block_types: Iterable[str]) -> KnowledgeBase:
        wanted = []
        seen = set()
        for t in block_types:
            desc = self.get(t)
            if desc is not None and desc.key not in seen:
                seen.add(desc.key)
                wanted.append(desc)
        return KnowledgeBase(wanted)


def lookup(kb: KnowledgeBase, block_type: str) -> BlockDescriptor:
    desc = kb.get(block_type)
    if desc is None:
        raise UnknownBlockType(block_type, kb.suggestions(block_type))
    return desc


def _params_dict(params) -> dict[str, str]:
    if params is None:
        return {}
    if isinstance(params, Mapping):
        return {str(k): str(v) for k, v in params.items()}
    return {p.key: p.value for p in params}


def exposed_ports(desc: BlockDescriptor, params=()) -> list[PortSpec]:
    """Ports present on ``desc`` under the given parameter settings.

    Fixed ports are always present; rule-governed ports only appear when the
    governing parameter is set. Settings for parameters the block does not
    have are ignored.
    """
    settings = _params_dict(params)
    enabled: dict[ExposureRule, frozenset[str]] = {}
    for rule in desc.exposure_rules:
        if rule.parameter in settings:
            enabled[rule] = rule.exposed(settings[rule.parameter], desc.block_type)
    out = []
    for port in desc.ports:
        if port.exposure is None:
            out.append(port)
        elif port.exposure in enabled and port.name in enabled[port.exposure]:
            out.append(port)
    return out


# -- ingest -------------------------------------------------------------------

_HEADING = re.compile(r"^##\s+(?P<type>\S.*?)\s*$")
_PATH = re.compile(r"^Path:\s*`?'?(?P<path>[^`']+?)'?`?\s*$")
_DESCRIPTION = re.compile(r"^Description:\s*(?P<text>.*?)\s*$")
_ROLE_HEADING = re.compile(r"^(?P<role>Input|Output|Conserving)\s+Ports?:\s*(?P<rest>.*)$", re.I)
_COUNT_RULE = re.compile(
    r"^(?P<start>\d+)\s+to\s+N,\s*where\s+N\s+is\s+given\s+by\s+`?(?P<param>\w+)`?.*?"
    r"at\s+most\s+(?P<max>\d+)",
    re.I,
)
_WHEN = re.compile(
    r"^When\s+`?(?P<param>\w+)`?\s+is\s+set\s+to\s+`?(?P<value>[^,`]+?)`?\s*,\s*"
    r"(?:the\s+exposed\s+ports?\s+(?:is|are):|(?P<none>no\s+ports?\s+(?:is|are)\s+exposed\.?))$",
    re.I,
)
_PORT_NAME_LINE = re.compile(r"^Port\s+name:\s*(?P<name>[^\s:]+)(?::\s*(?P<desc>.*))?$", re.I)
_PORT_BULLET = re.compile(r"^(?P<name>[A-Za-z0-9_+\-~]+)(?::\s+(?P<desc>.*))?$")
_LABEL = re.compile(r"^(?P<name>\S+)\s+appears\s+as\s+(?P<label>\S+?)\.?$")
_LABEL_HEADER = "port labels correspond"


def _plain(line: str) -> tuple[bool, str]:
    """Strip bold markers and a leading bullet; return (is_bullet, text)."""
    text = line.strip().replace("**", "").strip()
    if text[:2] in ("- ", "* "):
        return True, text[2:].strip()
    return False, text


@dataclass
class _RecordBuilder:
    block_type: str
    path: str | None = None
    summary: str = ""
    has_ports: bool = False
    ports: list[dict] = field(default_factory=list)
    tables: dict[str, dict] = field(default_factory=dict)
    counts: list[CountRule] = field(default_factory=list)
    labels: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add_port(self, name, role, desc="", rule_param=None):
        for p in self.ports:
            if p["name"] == name and p["role"] is role:
                if rule_param is not None and p["rule"] == rule_param:
                    return
                raise MalformedRecord(self.block_type, f"port {name!r} declared twice")
        self.ports.append({"name": name, "role": role, "desc": desc or "", "rule": rule_param})

    def build(self) -> BlockDescriptor:
        if not self.path:
            raise MalformedRecord(self.block_type, "missing **Path:** line")
        if not self.has_ports:
            raise MalformedRecord(self.block_type, "missing **Ports:** section")
        rules: dict[str, ExposureRule] = {}
        for param, spec in self.tables.items():
            rules[param] = TableRule(
                param, spec["role"], tuple((v, tuple(ps)) for v, ps in spec["values"].items())
            )
        for rule in self.counts:
            if rule.parameter in rules:
                raise MalformedRecord(self.block_type, f"parameter {rule.parameter!r} ruled twice")
            rules[rule.parameter] = rule
        unknown_labels = set(self.labels) - {p["name"] for p in self.ports}
        if unknown_labels:
            raise MalformedRecord(
                self.block_type, f"labels for undeclared ports {sorted(unknown_labels)}"
            )
        ports = []
        for p in self.ports:
            ports.append(
                PortSpec(
                    p["name"],
                    p["role"],
                    visual_label=self.labels.get(p["name"]),
                    description=p["desc"],
                    exposure=rules[p["rule"]] if p["rule"] else None,
                )
            )
        rule_order = list(rules.values())
        ports.sort(key=lambda p: _port_sort_key(p, rule_order))
        return BlockDescriptor(
            block_type=self.block_type,
            library_path=self.path,
            ports=tuple(ports),
            exposure_rules=tuple(rule_order),
            summary=self.summary,
            notes="\n".join(self.notes),
        )


def _port_sort_key(port: PortSpec, rules: list) -> tuple:
    rule_index = -1 if port.exposure is None else rules.index(port.exposure)
    return (_ROLE_ORDER[port.role], rule_index)


def _split_records(text: str) -> Iterator[tuple[int, str, list[str]]]:
    current: tuple[int, str, list[str]] | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        m = _HEADING.match(raw)
        if m:
            if current is not None:
                yield current
            current = (line_no, m.group("type"), [])
            continue
        if current is None:
            continue
        if raw.strip() == "---":
            yield current
            current = None
            continue
        current[2].append(raw)
    if current is not None:
        yield current


def _parse_record(block_type: str, lines: list[str]) -> BlockDescriptor:
    rec = _RecordBuilder(block_type)
    in_ports = False
    role: PortRole | None = None
    role_indent = -1
    group: tuple[str, str, PortRole] | None = None
    group_indent = -1
    label_mode = False

    for raw in lines:
        line = raw.rstrip()
        if not line.strip():
            continue
        is_bullet, text = _plain(line)
        if not in_ports:
            if m := _PATH.match(text):
                rec.path = m.group("path").strip()
            elif m := _DESCRIPTION.match(text):
                rec.summary = m.group("text")
            elif text.rstrip(":").strip().lower() == "ports":
                in_ports = True
                rec.has_ports = True
            else:
                rec.notes.append(line)
            continue

        indent = len(line) - len(line.lstrip())
        plain = text.replace("`", "")

        if label_mode:
            m = _LABEL.match(plain) if is_bullet else None
            if m:
                rec.labels[m.group("name")] = m.group("label")
                continue
            label_mode = False
        if _LABEL_HEADER in plain:
            label_mode = True
            group = role = None
            continue

        if group is not None and indent <= group_indent:
            group = None
        if role is not None and indent <= role_indent:
            role = None

        if is_bullet and (m := _ROLE_HEADING.match(text)):
            role = {
                "input": PortRole.INPUT,
                "output": PortRole.OUTPUT,
                "conserving": PortRole.CONSERVING,
            }[m.group("role").lower()]
            role_indent = indent
            rest = m.group("rest").strip()
            if rest:
                cm = _COUNT_RULE.match(rest)
                if not cm:
                    raise MalformedRecord(block_type, f"unrecognized port range: {rest!r}")
                rule = CountRule(
                    cm.group("param"), role, int(cm.group("start")), int(cm.group("max"))
                )
                rec.counts.append(rule)
                for name in rule.governed:
                    rec.add_port(name, role, rule_param=rule.parameter)
            continue

        if is_bullet and (m := _WHEN.match(text)):
            param, value = m.group("param"), m.group("value").strip()
            g_role = role or PortRole.CONSERVING
            spec = rec.tables.setdefault(param, {"role": g_role, "values": {}})
            if spec["role"] is not g_role:
                raise MalformedRecord(block_type, f"parameter {param!r} spans several port roles")
            if value in spec["values"]:
                raise MalformedRecord(block_type, f"{param} = {value} listed twice")
            spec["values"][value] = []
            group = (param, value, g_role)
            group_indent = indent
            continue

        if is_bullet:
            m = _PORT_NAME_LINE.match(plain) or _PORT_BULLET.match(plain)
            if m:
                name, desc = m.group("name"), (m.group("desc") or "").strip()
                if group is not None:
                    param, value, g_role = group
                    rec.tables[param]["values"][value].append(name)
                    rec.add_port(name, g_role, desc, rule_param=param)
                else:
                    rec.add_port(name, role or PortRole.CONSERVING, desc)
                continue
        rec.notes.append(line)

    return rec.build()


def ingest(text: str) -> KnowledgeBase:
    """Parse a KB markdown document into a :class:`KnowledgeBase`."""
    descriptors = []
    seen: set[str] = set()
    for _line_no, block_type, lines in _split_records(text):
        key = normalize_key(block_type)
        if key in seen:
            raise DuplicateBlockType(block_type)
        seen.add(key)
        descriptors.append(_parse_record(block_type, lines))
    return KnowledgeBase(descriptors)


def load_kb(path) -> KnowledgeBase:
    with open(path, encoding="utf-8") as fh:
        return ingest(fh.read())


# -- render -------------------------------------------------------------------


def _bullet_list(lines: list[str]) -> list[str]:
    # Markdown hard breaks on every line of a list except the last.
    return [ln + "  " for ln in lines[:-1]] + lines[-1:]


def _port_line(port: PortSpec) -> str:
    return f"**{port.name}**" + (f": {port.description}" if port.description else "")


def _render_table(rule: TableRule, indent: str) -> list[list[str]]:
    chunks = []
    for value, ports in rule.table:
        head = f"{indent}- When **`{rule.parameter}`** is set to **{value}**, "
        if not ports:
            chunks.append([head + "no port is exposed."])
            continue
        noun = "the exposed port is:" if len(ports) == 1 else "the exposed ports are:"
        items = _bullet_list([f"{indent}  - **{name}**" for name in ports])
        chunks.append([head + noun + "  "] + items)
    return chunks


def render_descriptor(desc: BlockDescriptor) -> str:
    out = [f"## {desc.block_type}", "", f"**Path:** `'{desc.library_path}'`", ""]
    if desc.summary:
        out += [f"**Description:** {desc.summary}", ""]
    out += ["**Ports:**", ""]

    chunks: list[list[str]] = []
    fixed_cons = [p for p in desc.ports if p.role is PortRole.CONSERVING and p.exposure is None]
    if fixed_cons:
        chunks.append([f"- {_port_line(p)}" for p in fixed_cons])
    for rule in desc.exposure_rules:
        if rule.role is PortRole.CONSERVING and isinstance(rule, TableRule):
            chunks.extend(_render_table(rule, ""))

    for role, title in ((PortRole.INPUT, "Input"), (PortRole.OUTPUT, "Output")):
        fixed = [p for p in desc.ports if p.role is role and p.exposure is None]
        rules = [r for r in desc.exposure_rules if r.role is role]
        counts = [r for r in rules if isinstance(r, CountRule)]
        tables = [r for r in rules if isinstance(r, TableRule)]
        if counts:
            rule = counts[0]
            chunks.append(
                [
                    f"- **{title} Ports:** **{rule.start}** to **N**, where N is given by "
                    f"**`{rule.parameter}`** (a count or one sign character per port, "
                    f"at most **{rule.maximum}**)."
                ]
            )
        if fixed or tables:
            plural = "Ports" if len(fixed) + len(tables) > 1 else "Port"
            section = [f"- **{title} {plural}:**"]
            section += [f"  - **Port name:** {_port_line(p)}" for p in fixed]
            for chunk in (c for t in tables for c in _render_table(t, "  ")):
                section += chunk
            chunks.append(section)

    labelled = [p for p in desc.ports if p.visual_label]
    if labelled:
        header = "*In the visual simulation blocks, the port labels correspond as follows:*  "
        chunks.append(
            [header]
            + _bullet_list([f"- **{p.name}** appears as **{p.visual_label}**." for p in labelled])
        )
    if desc.notes:
        chunks.append(desc.notes.splitlines())

    for i, chunk in enumerate(chunks):
        if i:
            out.append("")
        out.extend(chunk)
    out.append("---")
    return "\n".join(out) + "\n"


def render_kb(kb: KnowledgeBase | Iterable[BlockDescriptor]) -> str:
    return "\n".join(render_descriptor(d) for d in kb)


def describe_ports(desc: BlockDescriptor) -> list[dict]:
    """JSON-friendly port listing used by the CLI."""
    rows = []
    for p in desc.ports:
        row = {"name": p.name, "role": p.role.value}
        if p.visual_label:
            row["label"] = p.visual_label
        if p.exposure is not None:
            row["governed_by"] = p.exposure.parameter
        rows.append(row)
    return rows
