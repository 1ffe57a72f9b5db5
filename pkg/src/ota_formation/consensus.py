"""Nonnegative-matrix and Lyapunov checks for the consensus on references."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .geometry import SafetyParams, as_points
from .potential import total_potential
from .topology import CommTopology, is_strongly_connected

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class MatrixClass:
    row_stochastic: bool
    irreducible: bool
    primitive: bool


@dataclass(frozen=True, eq=False)
class ConsensusLimit:
    """Limit ``1 v^T`` of a product of stochastic matrices.

    ``centroid`` is ``v^T x0`` when initial values were supplied.
    """

    v: np.ndarray
    steps: int
    centroid: Optional[np.ndarray] = None


def _square(m) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def is_row_stochastic(m, tol: float = STOCHASTIC_TOL) -> bool:
    arr = _square(m)
    return bool(np.all(arr >= 0) and np.all(np.abs(arr.sum(axis=1) - 1.0) <= tol))


def is_irreducible(m) -> bool:
    arr = _square(m)
    n = len(arr)
    pattern = CommTopology(n, ((i, j) for i in range(n) for j in range(n) if arr[i, j] != 0))
    return is_strongly_connected(pattern)


def wielandt_bound(n: int) -> int:
    return (n - 1) ** 2 + 1


def is_primitive(m) -> bool:
    """Irreducible with positive trace is sufficient; otherwise power the
    zero pattern up to the Wielandt exponent."""
    arr = _square(m)
    if not is_irreducible(arr):
        return False
    if np.trace(np.abs(arr)) > 0:
        return True
    pattern = (arr != 0).astype(np.int64)
    power = pattern.copy()
    for _ in range(wielandt_bound(len(arr))):
        if power.all():
            return True
        power = ((power @ pattern) > 0).astype(np.int64)
    return bool(power.all())


def classify(m) -> MatrixClass:
    arr = _square(m)
    irreducible = is_irreducible(arr)
    return MatrixClass(
        row_stochastic=is_row_stochastic(arr),
        irreducible=irreducible,
        primitive=irreducible and is_primitive(arr),
    )


def effective_update_matrix(lam, h_prev) -> np.ndarray:
    """``Lambda + (I - Lambda) H``: one round of the payload recursion."""
    lam = np.asarray(lam, dtype=float)
    h = _square(h_prev)
    if lam.shape != (len(h),):
        raise ValueError(f"lambda has shape {lam.shape}, expected ({len(h)},)")
    if np.any(lam < 0) or np.any(lam >= 1):
        raise ValueError("every lambda must lie in [0, 1)")
    return np.diag(lam) + (1.0 - lam)[:, None] * h


def product_limit(matrices: Iterable, max_steps: int = 1000, tol: float = 1e-9,
                  initial=None) -> Optional[ConsensusLimit]:
    """Left-multiply ``matrices`` in order until all rows of the product agree.

    Returns ``None`` if the rows still differ by ``tol`` or more after
    ``max_steps`` factors (or when the stream runs out).
    """
    product = None
    for step, m in enumerate(matrices, start=1):
        if step > max_steps:
            break
        m = _square(m)
        product = m.copy() if product is None else m @ product
        spread = np.max(product.max(axis=0) - product.min(axis=0))
        if spread < tol:
            v = product[0] / product[0].sum()
            centroid = None if initial is None else v @ np.asarray(initial, dtype=float)
            return ConsensusLimit(v=v, steps=step, centroid=centroid)
    return None


def convex_weights(safe_through_interval, gain_a: float, interval: float) -> np.ndarray:
    """Per-agent ``lambda``: ``exp(-a * interval)`` for agents that stayed safe
    over the whole previous interval, 0 otherwise."""
    mask = np.asarray(safe_through_interval, dtype=bool)
    return np.where(mask, np.exp(-gain_a * interval), 0.0)


def lyapunov_value(positions, targets, gain_a: float, safety: SafetyParams) -> float:
    """``a/2 * sum |p_i - p_i*|^2`` plus the total repulsive potential."""
    p = as_points(positions)
    q = as_points(targets, "targets")
    return 0.5 * gain_a * float(np.sum((p - q) ** 2)) + total_potential(p, safety)


def reference_variance(history) -> np.ndarray:
    """Population variance of the agents' values per round, summed over x and y."""
    h = np.asarray(history, dtype=float)
    if h.ndim != 3 or h.shape[2] != 2:
        raise ValueError(f"history must have shape (K, n, 2), got {h.shape}")
    return h.var(axis=1).sum(axis=1)


def agreement_step(history, threshold: float = 0.01) -> Optional[int]:
    """Smallest round ``k`` after which the variance stays below ``threshold``
    for the rest of the recorded horizon, or ``None``."""
    var = reference_variance(history)
    if len(var) == 0:
        raise ValueError("history is empty")
    above = np.flatnonzero(var >= threshold)
    if len(above) == 0:
        return 0
    k = int(above[-1]) + 1
    return k if k < len(var) else None
