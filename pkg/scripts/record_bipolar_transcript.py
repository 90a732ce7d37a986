"""Regenerate fixtures/bipolar_transcript.jsonl from the case-study responses.

Agent replies come from fixtures/case_study where the case study shows them,
and from the reviewed/final netlists otherwise. Timestamps come from a fixed
counter so the output is byte-stable.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys

from simukit.codegen import lower, render_engine_script
from simukit.conformance import render_review, validate
from simukit.kb import load_kb
from simukit.netlist import load_netlist
from simukit.orchestrator import (
    AgentRole,
    Limits,
    PipelineOptions,
    ScriptedTransport,
    load_task,
    run_pipeline,
    write_report,
)

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "fixtures")
OPTIONS = PipelineOptions(reviewer="both", builder="agent", locator="agent", report="agent")
MODEL = "ElectricalModel"


def fixture(*parts: str) -> str:
    with open(os.path.join(ROOT, *parts), encoding="utf-8") as fh:
        return fh.read()


RECHECK = """Below is the re-examination after the build failure:

1. Block List Existence: no issues.
2. Extra Blocks: no issues.
3. Formatting of Block Name: no issues.
4. Formatting of Connection Description: no issues.
5. Parameter Settings in Connections: no issues.
6. Duplicate Connections: no issues.
7. Block Connection Types: no issues.
8. Complete Port Connections: no issues.

Build failure analysis:
- RLoad LConn1 is wired to both Voltage-Controlled Voltage source LConn2 and
  Current-Controlled Current source LConn2, while R2 LConn1 is also wired to both
  LConn2 ports. The collector node is therefore described twice, and the line
  RLoad LConn1 <-> Current-Controlled Current source LConn2 joins two ports that
  are already on the same node.
- Describe the collector node as a tree: Current-Controlled Current source LConn2
  feeds R2 LConn1 and RLoad LConn1, R2 LConn1 feeds Voltage-Controlled Voltage
  source LConn2, and RLoad LConn1 feeds the Voltage sensor LConn1.

{
  "Investigator_unit_test_pass": False
}
"""


def build(out_path: str) -> None:
    kb = load_kb(os.path.join(ROOT, "kb.md"))
    task = load_task(os.path.join(ROOT, "tasks", "bipolar_transistor"))
    reviewed = load_netlist(os.path.join(ROOT, "bipolar_reviewed.net"))
    final = load_netlist(os.path.join(ROOT, "bipolar_final.net"))
    final_script = render_engine_script(lower(final, kb, MODEL))
    replies = {
        AgentRole.INVESTIGATOR: [
            fixture("case_study", "investigator_round1.txt"),
            fixture("case_study", "investigator_round2.txt"),
            "[Investigator] Revised description:\n\n" + fixture("bipolar_reviewed.net"),
            "[Investigator] Revised description:\n\n" + fixture("bipolar_final.net"),
        ],
        AgentRole.REVIEWER: [
            fixture("case_study", "reviewer_report.txt"),
            render_review(validate(reviewed, kb)),
            RECHECK,
            render_review(validate(final, kb)),
        ],
        AgentRole.BUILDER: [
            fixture("case_study", "builder_response.txt"),
            "[Block_builder] " + final_script,
        ],
        AgentRole.DEBUG_LOCATOR: [fixture("case_study", "debug_report.txt")],
        AgentRole.REPORT_WRITER: [
            write_report(final, kb, lower(final, kb, MODEL), None, task.explanation),
        ],
    }
    ticks = itertools.count()
    record, transcript = run_pipeline(
        task,
        ScriptedTransport(replies),
        kb,
        Limits(),
        "dryrun",
        OPTIONS,
        model_ids={role: "fixture" for role in AgentRole if role is not AgentRole.EXECUTOR},
        clock=lambda: 1_760_000_000.0 + next(ticks),
    )
    if not record.done:
        sys.exit(f"recording did not finish: {record.final_state} {record.failure}")
    transcript.metadata.update(
        {
            "task_dir": "tasks/bipolar_transistor",
            "kb": "kb.md",
            "limits": {"max_review": 3, "max_build": 5},
            "model_ids": {role.value: "fixture" for role in AgentRole if role is not AgentRole.EXECUTOR},
        }
    )
    transcript.write(out_path)
    print(f"{out_path}: {len(transcript.messages)} messages, {record.review_rounds} review rounds, "
          f"{record.build_cycles} build cycles, accuracy {record.accuracy}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=os.path.join(ROOT, "bipolar_transcript.jsonl"))
    build(ap.parse_args().out)


if __name__ == "__main__":
    main()
