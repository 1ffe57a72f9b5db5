"""Communication cost of the over-the-air protocol and two baselines.

Two counts are kept apart on purpose: orthogonal *slots* (time or frequency
resources needed per round) and *individual* transmissions.

====================  ==============================  ===========================
protocol              slots per round                 individual per round
====================  ==============================  ===========================
ota                   3                               3n
orthogonal_broadcast  2n                              2n
node_to_node          one per message                 non-self arcs x messages/arc
====================  ==============================  ===========================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import as_points
from .topology import CommTopology

PROTOCOL_NAMES = ("ota", "node_to_node", "orthogonal_broadcast")


def per_step_cost(protocol: str, n: int, arcs: int = 0,
                  messages_per_arc: int = 1) -> tuple[int, int]:
    if protocol == "ota":
        return 3, 3 * n
    if protocol == "orthogonal_broadcast":
        return 2 * n, 2 * n
    if protocol == "node_to_node":
        individual = arcs * messages_per_arc
        return individual, individual
    raise ValueError(f"unknown protocol {protocol!r}")


def count_costs(protocol: str, steps: int, n: int,
                arcs_per_step: Optional[Sequence[int]] = None,
                messages_per_arc: int = 1) -> tuple[int, int]:
    """Total ``(slots, individual)`` over ``steps`` communication rounds."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if protocol == "node_to_node":
        if arcs_per_step is None or len(arcs_per_step) != steps:
            raise ValueError("node_to_node needs one arc count per step")
        if messages_per_arc not in (1, 2):
            raise ValueError("messages_per_arc must be 1 or 2")
        total = sum(int(a) for a in arcs_per_step) * messages_per_arc
        return total, total
    slots, individual = per_step_cost(protocol, n)
    return slots * steps, individual * steps


def node_to_node_consensus_step(values, g: CommTopology) -> np.ndarray:
    """Every agent takes the plain mean of its in-neighbours' exact values."""
    x = as_points(values, "values")
    if len(x) != g.n:
        raise ValueError(f"expected {g.n} values, got {len(x)}")
    mask = g.in_mask().astype(float)
    return (mask @ x) / mask.sum(axis=1, keepdims=True)


@dataclass
class ProtocolMetrics:
    protocol: str
    agreement_step: Optional[int]
    slots: Optional[int]
    individual: Optional[int]

    @classmethod
    def from_run(cls, protocol: str, agreement: Optional[int], n: int,
                 arc_counts: Sequence[int] = (), messages_per_arc: int = 1) -> "ProtocolMetrics":
        if agreement is None:
            return cls(protocol, None, None, None)
        arcs = list(arc_counts[:agreement]) if protocol == "node_to_node" else None
        slots, individual = count_costs(protocol, agreement, n, arcs, messages_per_arc)
        return cls(protocol, agreement, slots, individual)


@dataclass
class MetricsReport:
    n: int
    outcome: str
    formation_error: float
    min_distance: float
    max_final_speed: float
    protocols: list[ProtocolMetrics] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def protocol(self, name: str) -> ProtocolMetrics:
        for p in self.protocols:
            if p.protocol == name:
                return p
        raise KeyError(name)

    def to_mapping(self) -> dict:
        """Nested plain-Python view; missing counts are written as ``"none"``."""
        def val(x):
            return "none" if x is None else x

        out = {
            "n": self.n,
            "outcome": self.outcome,
            "formation_error": float(self.formation_error),
            "min_distance": "inf" if np.isinf(self.min_distance) else float(self.min_distance),
            "max_final_speed": float(self.max_final_speed),
        }
        if self.notes:
            out["notes"] = list(self.notes)
        for p in self.protocols:
            out[p.protocol] = {
                "agreement_step": val(p.agreement_step),
                "slots": val(p.slots),
                "individual": val(p.individual),
            }
        return out
