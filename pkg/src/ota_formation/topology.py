"""Directed communication graphs with explicit self-loops.

An arc ``(j, i)`` means agent ``j``'s signal reaches agent ``i``; the
in-neighbourhood ``N_i`` of ``i`` is therefore ``{j : (j, i) in arcs}``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class CommTopology:
    """Digraph on agents ``0..n-1``.

    Self-loops are always present; they are added on construction if missing.
    Strong connectivity is *not* enforced here so that candidate graphs can be
    represented; see :func:`is_strongly_connected` and :func:`validate`.
    """

    n: int
    arcs: frozenset[tuple[int, int]]

    def __init__(self, n: int, arcs: Iterable[tuple[int, int]] = ()):
        if n < 1:
            raise ValueError("a topology needs at least one node")
        clean = set()
        for j, i in arcs:
            j, i = int(j), int(i)
            if not (0 <= j < n and 0 <= i < n):
                raise ValueError(f"arc ({j}, {i}) out of range for n={n}")
            clean.add((j, i))
        clean.update((i, i) for i in range(n))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "arcs", frozenset(clean))

    @classmethod
    def complete(cls, n: int) -> "CommTopology":
        return cls(n, ((j, i) for j in range(n) for i in range(n)))

    @classmethod
    def cycle(cls, order: Sequence[int]) -> "CommTopology":
        """Directed cycle visiting ``order`` (a permutation of ``0..n-1``)."""
        n = len(order)
        return cls(n, ((order[k], order[(k + 1) % n]) for k in range(n)))

    @classmethod
    def from_adjacency(cls, out_lists: Sequence[Sequence[int]]) -> "CommTopology":
        """Build from adjacency lists: ``out_lists[j]`` are the agents that hear ``j``."""
        n = len(out_lists)
        return cls(n, ((j, i) for j, targets in enumerate(out_lists) for i in targets))

    def to_adjacency(self) -> list[list[int]]:
        out = [[] for _ in range(self.n)]
        for j, i in sorted(self.arcs):
            if i != j:
                out[j].append(i)
        return out

    def in_mask(self) -> np.ndarray:
        """``mask[i, j]`` is True iff ``j`` is an in-neighbour of ``i``."""
        mask = np.zeros((self.n, self.n), dtype=bool)
        for j, i in self.arcs:
            mask[i, j] = True
        return mask

    @property
    def non_self_arc_count(self) -> int:
        return sum(1 for j, i in self.arcs if i != j)


@dataclass(frozen=True)
class TopologyPool:
    topologies: tuple[CommTopology, ...]

    def __post_init__(self):
        if not self.topologies:
            raise ValueError("topology pool is empty")
        sizes = {g.n for g in self.topologies}
        if len(sizes) != 1:
            raise ValueError(f"pool mixes agent counts {sorted(sizes)}")
        for g in self.topologies:
            validate(g)

    @property
    def n(self) -> int:
        return self.topologies[0].n

    def __len__(self) -> int:
        return len(self.topologies)


def _reach_all(n: int, succ: list[list[int]]) -> bool:
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == n


def is_strongly_connected(g: CommTopology) -> bool:
    """Forward and backward BFS from node 0 must both reach every node."""
    if g.n == 1:
        return True
    fwd = [[] for _ in range(g.n)]
    bwd = [[] for _ in range(g.n)]
    for j, i in g.arcs:
        if i != j:
            fwd[j].append(i)
            bwd[i].append(j)
    return _reach_all(g.n, fwd) and _reach_all(g.n, bwd)


def validate(g: CommTopology) -> CommTopology:
    if not is_strongly_connected(g):
        raise ValueError(f"topology on {g.n} agents is not strongly connected")
    return g


def neighbors_in(g: CommTopology, i: int) -> frozenset[int]:
    if not 0 <= i < g.n:
        raise IndexError(f"agent index {i} out of range for n={g.n}")
    return frozenset(j for j, k in g.arcs if k == i)


def generate_pool(n: int, pool_size: int, density: float,
                  rng: np.random.Generator) -> TopologyPool:
    """Random strongly connected topologies.

    Each member is a random Hamiltonian directed cycle plus every other
    ordered pair kept independently with probability ``density``.
    """
    if n < 2:
        raise ValueError("generate_pool needs n >= 2")
    if pool_size < 1:
        raise ValueError("pool_size must be at least 1")
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    members = []
    for _ in range(pool_size):
        order = [int(v) for v in rng.permutation(n)]
        arcs = {(order[k], order[(k + 1) % n]) for k in range(n)}
        extra = rng.random((n, n))
        for j in range(n):
            for i in range(n):
                if i != j and (j, i) not in arcs and extra[j, i] < density:
                    arcs.add((j, i))
        members.append(CommTopology(n, arcs))
    return TopologyPool(tuple(members))


def sample_topology(pool: TopologyPool, rng: np.random.Generator) -> CommTopology:
    return pool.topologies[int(rng.integers(len(pool)))]
