"""Reproduction accuracy between a generated netlist and a ground-truth netlist.

Blocks are compared as a multiset of types and connections as a multiset of
typed port pairs, so display names never matter. A conserving-to-conserving
connection has no direction; every other connection keeps src -> dst order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import EmptyGroundTruth
from .kb import KnowledgeBase, PortRole
from .netlist import Endpoint, Netlist

UNDIRECTED = "<->"
DIRECTED = "->"


@dataclass(frozen=True)
class Canonical:
    blocks: Counter
    connections: Counter


@dataclass(frozen=True)
class DiffResult:
    b_match: int
    b_gt: int
    c_match: int
    c_gt: int

    def __post_init__(self) -> None:
        if not (0 <= self.b_match <= self.b_gt) or not (0 <= self.c_match <= self.c_gt):
            raise ValueError(f"inconsistent match counts {self}")
        if self.b_gt < 1 or self.c_gt < 1:
            raise EmptyGroundTruth("ground truth needs at least one block and one connection")

    @property
    def accuracy(self) -> float:
        return 0.5 * (self.b_match / self.b_gt + self.c_match / self.c_gt)

    @property
    def accuracy_percent(self) -> float:
        return round(100.0 * self.accuracy, 2)

    def to_dict(self) -> dict:
        return {
            "b_match": self.b_match,
            "b_gt": self.b_gt,
            "c_match": self.c_match,
            "c_gt": self.c_gt,
            "accuracy_percent": self.accuracy_percent,
        }


def _type_key(kb: KnowledgeBase, block_type: str) -> str:
    desc = kb.get(block_type)
    return desc.block_type if desc is not None else " ".join(block_type.split())


def _end_key(netlist: Netlist, kb: KnowledgeBase, ep: Endpoint, side: str):
    block = netlist.resolve(ep)
    block_type = block.block_type if block is not None else ep.block_type
    desc = kb.get(block_type)
    port = desc.resolve_port(ep.port, side) if desc is not None else None
    name = port.name if port is not None else ep.port
    role = port.role if port is not None else None
    return (_type_key(kb, block_type), name), role


def connection_key(netlist: Netlist, kb: KnowledgeBase, conn) -> tuple:
    src, src_role = _end_key(netlist, kb, conn.src, "src")
    dst, dst_role = _end_key(netlist, kb, conn.dst, "dst")
    if src_role is PortRole.CONSERVING and dst_role is PortRole.CONSERVING:
        return (UNDIRECTED,) + tuple(sorted((src, dst)))
    return (DIRECTED, src, dst)


def canonicalize(netlist: Netlist, kb: KnowledgeBase) -> Canonical:
    blocks = Counter(_type_key(kb, b.block_type) for b in netlist.blocks)
    conns = Counter(connection_key(netlist, kb, c) for c in netlist.connections)
    return Canonical(blocks, conns)


def accuracy(gt: Netlist, gen: Netlist, kb: KnowledgeBase) -> DiffResult:
    """Average of block and connection recall over type-keyed multisets."""
    g = canonicalize(gt, kb)
    h = canonicalize(gen, kb)
    b_gt = sum(g.blocks.values())
    c_gt = sum(g.connections.values())
    if b_gt < 1 or c_gt < 1:
        raise EmptyGroundTruth("ground truth needs at least one block and one connection")
    return DiffResult(
        sum((g.blocks & h.blocks).values()),
        b_gt,
        sum((g.connections & h.connections).values()),
        c_gt,
    )
