"""Repulsive pair potential and its closed-form gradient.

For a pair at distance ``d`` the potential is

    dc*(dc-ds)**2/(d-ds) + d**2/2 - 3*dc**2/2 + dc*ds    for ds < d <= dc
    inf                                                  for d <= ds
    0                                                    for d > dc

which is continuous and continuously differentiable at ``dc``.  The magnitude
of the resulting repulsion along the separation direction is
``dc*(dc-ds)**2/(d-ds)**2 - d``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GeometryError, SafetyViolation
from .geometry import SafetyParams, as_points, pairwise_distances

UNBOUNDED = math.inf


def is_unbounded(value: float) -> bool:
    return math.isinf(value)


def pair_potential(dist: float, safety: SafetyParams) -> float:
    """Pair potential; ``UNBOUNDED`` (``inf``) at or inside the safety radius."""
    if not dist > 0:
        raise GeometryError(f"pair distance must be positive, got {dist}")
    ds, dc = safety.delta_s, safety.delta_c
    if dist <= ds:
        return UNBOUNDED
    if dist > dc:
        return 0.0
    return dc * (dc - ds) ** 2 / (dist - ds) + dist**2 / 2 - 1.5 * dc**2 + dc * ds


def repulsion_magnitude(dist, safety: SafetyParams):
    """Signed push along the separation direction, zero beyond ``delta_c``."""
    ds, dc = safety.delta_s, safety.delta_c
    dist = np.asarray(dist, dtype=float)
    active = (dist > ds) & (dist <= dc)
    safe_gap = np.where(active, dist - ds, 1.0)
    return np.where(active, dc * (dc - ds) ** 2 / safe_gap**2 - dist, 0.0)


def _check_clear(dist: np.ndarray, rows, safety: SafetyParams, time=None):
    sub = dist[rows]
    if np.any(sub <= safety.delta_s):
        r, j = np.unravel_index(int(np.argmin(sub)), sub.shape)
        i = int(np.arange(len(dist))[rows][r])
        raise SafetyViolation(i, int(j), float(sub[r, j]), time)


def repulsion(positions, i: int, safety: SafetyParams) -> np.ndarray:
    """Collision-avoidance term for agent ``i`` (minus the gradient of the total potential)."""
    positions = as_points(positions)
    n = len(positions)
    if not 0 <= i < n:
        raise IndexError(f"agent index {i} out of range for n={n}")
    sep = positions[i] - np.delete(positions, i, axis=0)
    dist = np.hypot(sep[:, 0], sep[:, 1])
    if np.any(dist <= safety.delta_s):
        k = int(np.argmin(dist))
        raise SafetyViolation(i, k if k < i else k + 1, float(dist[k]))
    coef = repulsion_magnitude(dist, safety) / dist
    return coef @ sep


def repulsion_field(positions: np.ndarray, safety: SafetyParams,
                    rows: np.ndarray | None = None, time: float | None = None) -> np.ndarray:
    """Repulsion on every agent at once, shape ``(n, 2)``.

    Only pairs involving an agent selected by the boolean mask ``rows`` are
    checked against the safety radius; other rows are still computed.
    """
    n = len(positions)
    if rows is None:
        rows = np.ones(n, dtype=bool)
    sep = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", sep, sep))
    np.fill_diagonal(dist, np.inf)
    _check_clear(dist, rows, safety, time)
    coef = repulsion_magnitude(dist, safety) / dist
    return np.einsum("ij,ijk->ik", coef, sep)


def total_potential(positions, safety: SafetyParams) -> float:
    """Half the double sum of pair potentials; ``UNBOUNDED`` if any pair is too close."""
    positions = as_points(positions)
    if len(positions) < 2:
        return 0.0
    dist = pairwise_distances(positions)
    iu = np.triu_indices(len(positions), k=1)
    d = dist[iu]
    if np.any(d <= safety.delta_s):
        return UNBOUNDED
    total = 0.0
    for value in d[d <= safety.delta_c]:
        total += pair_potential(float(value), safety)
    return total
