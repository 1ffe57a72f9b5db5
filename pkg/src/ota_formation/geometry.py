"""Planar geometry shared by the rest of the package.

Positions, references and displacements are plain ``numpy`` arrays of shape
``(n, 2)``; a single planar vector is an array of shape ``(2,)``.  Agents are
indexed from 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

DangerSet = frozenset  # indices of agents that are NOT in danger


def as_points(points, name: str = "positions") -> np.ndarray:
    """Return ``points`` as a finite float array of shape ``(n, 2)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} contain non-finite coordinates")
    return arr


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix; the diagonal is set to ``inf``."""
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    return dist


@dataclass(frozen=True)
class SafetyParams:
    """Safety radius ``delta_s`` and critical (activation) radius ``delta_c``."""

    delta_s: float
    delta_c: float

    def __post_init__(self):
        if not (np.isfinite(self.delta_s) and np.isfinite(self.delta_c)):
            raise GeometryError("safety radii must be finite")
        if not 0 < self.delta_s < self.delta_c:
            raise GeometryError(
                f"need 0 < delta_s < delta_c, got delta_s={self.delta_s}, "
                f"delta_c={self.delta_c}"
            )


@dataclass(frozen=True, eq=False)
class FormationSpec:
    """Desired displacement ``d_i`` of every agent from the formation centroid."""

    displacements: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = as_points(self.displacements, "displacements")
        if len(arr) == 0:
            raise GeometryError("formation must contain at least one agent")
        arr.setflags(write=False)
        object.__setattr__(self, "displacements", arr)

    @property
    def n(self) -> int:
        return len(self.displacements)

    def targets(self, centroid) -> np.ndarray:
        return np.asarray(centroid, dtype=float)[None, :] + self.displacements

    @classmethod
    def regular_polygon(cls, n: int, side: float, phase: float = 0.0) -> "FormationSpec":
        """Vertices of a regular ``n``-gon with the given side length, centred at 0."""
        if n == 1:
            return cls(np.zeros((1, 2)))
        radius = side / (2.0 * np.sin(np.pi / n))
        ang = phase + 2.0 * np.pi * np.arange(n) / n
        return cls(radius * np.column_stack([np.cos(ang), np.sin(ang)]))


def is_well_posed(formation: FormationSpec, safety: SafetyParams) -> bool:
    """True iff every pair of displacements is strictly farther apart than delta_c."""
    if formation.n < 2:
        return True
    return bool(np.all(pairwise_distances(formation.displacements) > safety.delta_c))


def safe_mask(positions: np.ndarray, safety: SafetyParams) -> np.ndarray:
    """Boolean array, True for agents farther than delta_c from everyone else."""
    positions = as_points(positions)
    if len(positions) < 2:
        return np.ones(len(positions), dtype=bool)
    return np.all(pairwise_distances(positions) > safety.delta_c, axis=1)


def safe_set(positions, safety: SafetyParams) -> frozenset[int]:
    """Indices of agents not in danger of colliding.

    The boundary is strict: an agent exactly ``delta_c`` away from another one
    is in danger.
    """
    return frozenset(int(i) for i in np.flatnonzero(safe_mask(positions, safety)))


def min_pairwise_distance(positions) -> float:
    positions = as_points(positions)
    if len(positions) < 2:
        raise GeometryError("min_pairwise_distance needs at least two agents")
    return float(pairwise_distances(positions).min())
