"""Deterministic four-section simulation report."""

from __future__ import annotations

from ..codegen import AddBlock, AddLine, BuildScript, SetParam, engine_statement
from ..kb import KnowledgeBase, PortRole, normalize_key
from ..netlist import Netlist

SECTION_TITLES = (
    "1. What is the simulation about?",
    "2. What are the main simulation steps?",
    "3. What theoretical knowledge and mathematical modeling are involved in each step?",
    "4. How is each step implemented in code?",
)


def _kind(desc) -> str:
    if desc is None:
        return "block"
    roles = {p.role for p in desc.ports}
    if roles == {PortRole.OUTPUT}:
        return "signal source"
    if roles == {PortRole.INPUT}:
        return "signal sink"
    if PortRole.CONSERVING in roles and len(roles) > 1:
        return "signal/physical interface"
    if PortRole.CONSERVING in roles:
        return "physical element"
    return "signal processing block"


def _block_code(script: BuildScript | None, name: str) -> list[str]:
    if script is None:
        return []
    model = script.model_name
    path = f"{model}/{name}"
    out = []
    for cmd in script.commands:
        if isinstance(cmd, AddBlock) and cmd.dest_path == path:
            out.append(engine_statement(cmd, model, False))
        elif isinstance(cmd, SetParam) and cmd.block_path == path:
            out.append(engine_statement(cmd, model, False))
        elif isinstance(cmd, AddLine) and cmd.src.rsplit("/", 1)[0] == name:
            out.append(engine_statement(cmd, model, False))
    return out


def write_report(
    netlist: Netlist,
    kb: KnowledgeBase,
    script: BuildScript | None,
    descriptions: dict | None = None,
    explanation: str = "",
) -> str:
    """Markdown report built only from its inputs.

    ``descriptions`` maps block type to descriptive text; when omitted, KB
    summaries are used.
    """
    if descriptions is None:
        descriptions = {d.block_type: d.summary for d in kb if d.summary}
    lookup_desc = {normalize_key(k): v for k, v in descriptions.items()}
    lines = ["# Simulation report", ""]

    lines += [f"## {SECTION_TITLES[0]}", ""]
    lines.append(explanation.strip() or "_No simulation explanation was provided._")
    lines += [
        "",
        f"The model has {len(netlist.blocks)} blocks and {len(netlist.connections)} connections.",
        "",
    ]

    lines += [f"## {SECTION_TITLES[1]}", ""]
    if not netlist.blocks:
        lines.append("_The model has no blocks._")
    for i, block in enumerate(netlist.blocks, start=1):
        lines.append(f"{i}. **{block.name}** ({block.block_type}): {_kind(kb.get(block.block_type))}.")
    lines.append("")

    lines += [f"## {SECTION_TITLES[2]}", ""]
    if not netlist.blocks:
        lines.append("_Nothing to describe._")
    for i, block in enumerate(netlist.blocks, start=1):
        text = lookup_desc.get(normalize_key(block.block_type))
        lines.append(f"### Step {i}: {block.name}")
        lines.append("")
        lines.append(text.strip() if text else f"_No description is available for {block.block_type}._")
        links = [
            c.render()
            for c in netlist.connections
            if block.key in (normalize_key(c.src.block_name), normalize_key(c.dst.block_name))
        ]
        if links:
            lines += ["", "Connections:"] + [f"- `{ln}`" for ln in links]
        lines.append("")

    lines += [f"## {SECTION_TITLES[3]}", ""]
    if script is None:
        lines += ["_No build script is available._", ""]
    for i, block in enumerate(netlist.blocks if script is not None else (), start=1):
        code = _block_code(script, block.name)
        lines += [f"### Step {i}: {block.name}", ""]
        if code:
            lines += ["```python"] + code + ["```"]
        else:
            lines.append("_No build commands reference this block._")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
