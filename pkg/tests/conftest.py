from __future__ import annotations

import json
from pathlib import Path

import pytest

from simukit.kb import load_kb
from simukit.netlist import load_netlist

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GT_DIR = FIXTURES / "netlists"
KB_PATH = FIXTURES / "kb.md"


@pytest.fixture(scope="session")
def kb():
    return load_kb(KB_PATH)


@pytest.fixture(scope="session")
def gt_sizes():
    return json.loads((FIXTURES / "gt_sizes.json").read_text())


@pytest.fixture
def bipolar():
    return load_netlist(FIXTURES / "bipolar.net")


@pytest.fixture
def bipolar_reviewed():
    return load_netlist(FIXTURES / "bipolar_reviewed.net")


@pytest.fixture
def bipolar_final():
    return load_netlist(FIXTURES / "bipolar_final.net")


def gt_paths():
    return sorted(GT_DIR.glob("*.net"))


def degrade(gt, drop_blocks: int, keep_connections: int):
    """A generated netlist matching all but ``drop_blocks`` blocks of ``gt``
    and exactly ``keep_connections`` of its connections.

    Dropped blocks are taken from the end of the block list and their
    connections go first, so the result stays self-consistent when possible.
    """
    from simukit.kb import normalize_key
    from simukit.netlist import Netlist

    blocks = gt.blocks[: len(gt.blocks) - drop_blocks]
    gone = {b.key for b in gt.blocks[len(blocks) :]}

    def touches(c):
        return any(normalize_key(e.block_name) in gone for e in c.endpoints)

    ordered = [c for c in gt.connections if not touches(c)] + [c for c in gt.connections if touches(c)]
    return Netlist(blocks, tuple(ordered[:keep_connections]))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
