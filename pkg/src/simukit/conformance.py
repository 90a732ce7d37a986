"""Deterministic reviewer: eight structural checks over a netlist and the KB."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import BadBlockLine, BadConnectionLine, NetlistSyntaxError, UnknownParameterValue
from .kb import BlockDescriptor, KnowledgeBase, PortRole, exposed_ports, normalize_key
from .netlist import BlockInstance, Endpoint, Netlist

ERROR = "error"
WARNING = "warning"

CHECK_TITLES = {
    1: "Block List Existence",
    2: "Extra Blocks",
    3: "Formatting of Block Name",
    4: "Formatting of Connection Description",
    5: "Parameter Settings in Connections",
    6: "Duplicate Connections",
    7: "Block Connection Types",
    8: "Complete Port Connections",
}


@dataclass(frozen=True)
class Finding:
    check_id: int
    severity: str
    message: str
    location: str = ""

    def __post_init__(self) -> None:
        if self.check_id not in CHECK_TITLES:
            raise ValueError(f"check id {self.check_id} out of range")
        if self.severity not in (ERROR, WARNING):
            raise ValueError(f"bad severity {self.severity!r}")
        if not self.message:
            raise ValueError("empty finding message")

    def to_dict(self) -> dict:
        return {
            "check": self.check_id,
            "severity": self.severity,
            "message": self.message,
            "location": self.location,
        }


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return not any(f.severity == ERROR for f in self.findings)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == ERROR]

    def by_check(self, check_id: int) -> list[Finding]:
        return [f for f in self.findings if f.check_id == check_id]

    def to_dict(self) -> dict:
        return {"findings": [f.to_dict() for f in self.findings], "pass": self.passed}


def _conn_loc(index: int) -> str:
    return f"connection {index + 1}"


def _descriptor_for(netlist: Netlist, kb: KnowledgeBase, ep: Endpoint) -> BlockDescriptor | None:
    block = netlist.resolve(ep)
    return kb.get(block.block_type if block is not None else ep.block_type)


def _valid_settings(netlist: Netlist, block: BlockInstance, desc: BlockDescriptor) -> dict:
    """Parameter values usable for exposure: first mention, if in domain."""
    settings = {}
    for key, value in netlist.block_params(block).items():
        rule = desc.rule_for(key)
        if rule is None:
            continue
        try:
            rule.exposed(value, desc.block_type)
        except UnknownParameterValue:
            continue
        settings[key] = value
    return settings


def check1_block_list_presence(netlist: Netlist) -> list[Finding]:
    out = []
    if not netlist.blocks:
        out.append(Finding(1, ERROR, "the block list is missing; blocks must be listed first"))
    for err in netlist.errors:
        if isinstance(err, BadBlockLine):
            out.append(Finding(1, ERROR, f"unreadable block list entry: {err.reason}", f"line {err.line_no}"))
    for i, conn in enumerate(netlist.connections):
        for ep in conn.endpoints:
            if netlist.resolve(ep) is None:
                out.append(
                    Finding(
                        1,
                        ERROR,
                        f"block {ep.block_name!r} is used in a connection but not in the block list",
                        _conn_loc(i),
                    )
                )
    return out


def check2_extra_blocks(netlist: Netlist) -> list[Finding]:
    out = []
    for block in netlist.blocks:
        if next(netlist.endpoints_of(block), None) is None:
            out.append(
                Finding(2, ERROR, f"block {block.render()} does not appear in any connection", block.name)
            )
    return out


def check3_name_format(netlist: Netlist) -> list[Finding]:
    out = []
    counts = Counter(b.key for b in netlist.blocks)
    reported = set()
    for block in netlist.blocks:
        if "/" in block.name:
            out.append(Finding(3, ERROR, f"block name {block.name!r} contains '/'", block.name))
        if counts[block.key] > 1 and block.key not in reported:
            reported.add(block.key)
            out.append(
                Finding(3, ERROR, f"block name {block.name!r} is used by {counts[block.key]} blocks", block.name)
            )
    return out


def check4_connection_format(netlist: Netlist, kb: KnowledgeBase) -> list[Finding]:
    out = []
    for err in netlist.errors:
        if isinstance(err, NetlistSyntaxError) and not isinstance(err, BadBlockLine):
            reason = err.reason if isinstance(err, BadConnectionLine) else str(err)
            out.append(Finding(4, ERROR, f"malformed connection: {reason}", f"line {err.line_no}"))
    for i, conn in enumerate(netlist.connections):
        loc = _conn_loc(i)
        for side, ep in (("src", conn.src), ("dst", conn.dst)):
            if "(" in ep.block_name or ")" in ep.block_name:
                out.append(
                    Finding(
                        4,
                        ERROR,
                        f"nested name form {ep.block_name!r}; write the diagram name once, "
                        f"followed by the block type",
                        loc,
                    )
                )
            desc = kb.get(ep.block_type)
            if desc is None:
                hint = kb.suggestions(ep.block_type)
                msg = f"block type {ep.block_type!r} is not in the block descriptions"
                if hint:
                    msg += f" (closest: {', '.join(hint)})"
                out.append(Finding(4, ERROR, msg, loc))
                continue
            block = netlist.resolve(ep)
            if block is not None and normalize_key(block.block_type) != desc.key:
                out.append(
                    Finding(
                        4,
                        ERROR,
                        f"{ep.block_name!r} is declared as {block.block_type!r} but written as {ep.block_type!r}",
                        loc,
                    )
                )
            if not desc.ports_named(ep.port):
                labelled = [p.name for p in desc.ports if p.visual_label == ep.port]
                msg = f"{desc.block_type} has no port named {ep.port!r}"
                if labelled:
                    msg += f" ({ep.port!r} is a visual label; use {labelled[0]!r})"
                out.append(Finding(4, ERROR, msg, loc))
            for p in ep.params:
                if not desc.exposure_rules:
                    out.append(
                        Finding(
                            4,
                            WARNING,
                            f"{desc.block_type} has a fixed port count; drop the setting `{p.key}`",
                            loc,
                        )
                    )
                elif desc.rule_for(p.key) is None:
                    out.append(
                        Finding(
                            4,
                            WARNING,
                            f"`{p.key}` does not affect the ports of {desc.block_type}",
                            loc,
                        )
                    )
    return out


def check5_param_settings(netlist: Netlist, kb: KnowledgeBase) -> list[Finding]:
    out = []
    for block in netlist.blocks:
        desc = kb.get(block.block_type)
        if desc is None or not desc.exposure_rules:
            continue
        mentions = list(netlist.endpoints_of(block))
        if not mentions:
            continue
        written = netlist.param_mentions(block)
        enabled = {}
        for rule in desc.exposure_rules:
            values = written.get(rule.parameter)
            if not values:
                out.append(
                    Finding(
                        5,
                        ERROR,
                        f"{block.render()} needs a `{rule.parameter}` setting to fix its port count",
                        block.name,
                    )
                )
                continue
            if len({v.strip() for v in values}) > 1:
                out.append(
                    Finding(
                        5,
                        ERROR,
                        f"{block.render()} has conflicting `{rule.parameter}` settings: "
                        + ", ".join(sorted(set(values))),
                        block.name,
                    )
                )
                continue
            try:
                enabled[rule] = rule.exposed(values[0], desc.block_type)
            except UnknownParameterValue:
                out.append(
                    Finding(
                        5,
                        ERROR,
                        f"`{rule.parameter}` = `{values[0]}` is not a valid setting for {desc.block_type}",
                        block.name,
                    )
                )
        for i, side, ep in mentions:
            port = desc.resolve_port(ep.port, side)
            if port is None or port.exposure is None or port.exposure not in enabled:
                continue
            if port.name not in enabled[port.exposure]:
                out.append(
                    Finding(
                        5,
                        ERROR,
                        f"port {ep.port} of {block.name!r} is not exposed when "
                        f"`{port.exposure.parameter}` = `{written[port.exposure.parameter][0]}`",
                        _conn_loc(i),
                    )
                )
    return out


def check6_duplicate_inputs(netlist: Netlist, kb: KnowledgeBase) -> list[Finding]:
    hits: dict[tuple[str, str], list[int]] = {}
    for i, conn in enumerate(netlist.connections):
        ep = conn.dst
        desc = _descriptor_for(netlist, kb, ep)
        if desc is None or desc.multi_input_exempt:
            continue
        port = desc.resolve_port(ep.port, "dst")
        if port is None or port.role is not PortRole.INPUT:
            continue
        block = netlist.resolve(ep)
        name = block.name if block is not None else ep.block_name
        hits.setdefault((name, port.name), []).append(i)
    out = []
    for (name, port), indices in hits.items():
        if len(indices) > 1:
            where = ", ".join(str(i + 1) for i in indices)
            out.append(
                Finding(
                    6,
                    ERROR,
                    f"input port {port} of {name!r} is driven {len(indices)} times (connections {where})",
                    f"{name}/{port}",
                )
            )
    return out


def check7_connection_roles(netlist: Netlist, kb: KnowledgeBase) -> list[Finding]:
    out = []
    for i, conn in enumerate(netlist.connections):
        sdesc = _descriptor_for(netlist, kb, conn.src)
        ddesc = _descriptor_for(netlist, kb, conn.dst)
        sport = sdesc.resolve_port(conn.src.port, "src") if sdesc else None
        dport = ddesc.resolve_port(conn.dst.port, "dst") if ddesc else None
        if sport is not None and sport.role is PortRole.INPUT:
            out.append(
                Finding(
                    7,
                    ERROR,
                    f"{conn.src.block_name!r} port {sport.name} is a dedicated input and cannot "
                    f"drive a connection (left of '<->')",
                    _conn_loc(i),
                )
            )
        if dport is not None and dport.role is PortRole.OUTPUT:
            out.append(
                Finding(
                    7,
                    ERROR,
                    f"{conn.dst.block_name!r} port {dport.name} is a dedicated output and cannot "
                    f"receive a connection (right of '<->')",
                    _conn_loc(i),
                )
            )
        if sport is not None and dport is not None:
            if (sport.role is PortRole.CONSERVING) != (dport.role is PortRole.CONSERVING):
                out.append(
                    Finding(
                        7,
                        ERROR,
                        "a signal port cannot be wired to a conserving (physical) port",
                        _conn_loc(i),
                    )
                )
    return out


def check8_port_completeness(netlist: Netlist, kb: KnowledgeBase) -> list[Finding]:
    out = []
    for block in netlist.blocks:
        desc = kb.get(block.block_type)
        if desc is None:
            continue
        used: set[tuple[str, PortRole]] = set()
        for _, side, ep in netlist.endpoints_of(block):
            port = desc.resolve_port(ep.port, side)
            if port is None:
                continue
            if port.role is PortRole.CONSERVING:
                used.add((port.name, port.role))
            elif (port.role is PortRole.INPUT) == (side == "dst"):
                used.add((port.name, port.role))
        for port in exposed_ports(desc, _valid_settings(netlist, block, desc)):
            if (port.name, port.role) in used:
                continue
            kind = {
                PortRole.INPUT: "input port",
                PortRole.OUTPUT: "output port",
                PortRole.CONSERVING: "port",
            }[port.role]
            out.append(
                Finding(
                    8,
                    ERROR,
                    f"{kind} {port.name} of {block.render()} is not connected",
                    f"{block.name}/{port.name}",
                )
            )
    return out


CHECKS = (
    lambda n, kb: check1_block_list_presence(n),
    lambda n, kb: check2_extra_blocks(n),
    lambda n, kb: check3_name_format(n),
    check4_connection_format,
    check5_param_settings,
    check6_duplicate_inputs,
    check7_connection_roles,
    check8_port_completeness,
)


def validate(netlist: Netlist, kb: KnowledgeBase) -> ValidationReport:
    findings: list[Finding] = []
    for check in CHECKS:
        findings.extend(check(netlist, kb))
    return ValidationReport(tuple(findings))


def render_review(report: ValidationReport) -> str:
    """Reviewer-style prose report with the eight numbered headings."""
    lines = ["Below is the review of the Investigator's simulation:", ""]
    for check_id, title in CHECK_TITLES.items():
        lines.append(f"{check_id}. {title}:")
        found = report.by_check(check_id)
        if not found:
            lines.append("- No issues found.")
        for f in found:
            tag = "" if f.severity == ERROR else " (warning)"
            loc = f" [{f.location}]" if f.location else ""
            lines.append(f"- {f.message}{loc}{tag}")
        lines.append("")
    errors = report.errors
    if errors:
        lines.append(f"Summary of Findings: {len(errors)} error(s) must be fixed before building.")
    else:
        lines.append("Summary of Findings: the connection description follows the modeling rules.")
    lines += ["", json.dumps({"Investigator_unit_test_pass": report.passed}, indent=2)]
    return "\n".join(lines) + "\n"
