"""Wireless multiple access channel with a known-value side channel.

Every agent broadcasts the two coordinates of its payload and the constant 1
on three orthogonal resources.  A receiver only ever sees the fading-weighted
sums over its in-neighbours; dividing the payload sum by the sum received for
the constant removes the unknown gains and yields a convex combination of the
neighbours' payloads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelError
from .geometry import as_points
from .topology import CommTopology


@dataclass(frozen=True, eq=False)
class FadingRealization:
    """Positive channel gains on the arcs of one topology.

    ``xi[i, j]`` is the gain of ``j``'s signal at receiver ``i``; entries off the
    arc set are exactly zero.
    """

    topology: CommTopology
    xi: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        mask = self.topology.in_mask()
        if xi.shape != mask.shape:
            raise ValueError(f"fading matrix shape {xi.shape} does not match topology")
        if np.any(xi[~mask] != 0.0):
            raise ValueError("fading coefficient given for a non-arc")
        if not np.all(xi[mask] > 0.0):
            raise ValueError("fading coefficients must be strictly positive on every arc")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    def coefficients(self) -> dict[tuple[int, int], float]:
        """Mapping ``(j, i) -> xi_ij`` over the arc set."""
        return {(j, i): float(self.xi[i, j]) for j, i in sorted(self.topology.arcs)}


@dataclass(frozen=True, eq=False)
class ReceivedAggregate:
    nu: np.ndarray        # (n, 2) superimposed payloads
    nu_prime: np.ndarray  # (n,) superimposed known value
    zeta: np.ndarray      # (n, 2) over-the-air variables


def sample_fading(g: CommTopology, rng: np.random.Generator,
                  lower: float = 0.0, upper: float = 1.0) -> FadingRealization:
    """Independent uniform gains on every arc, redrawn until strictly positive."""
    if lower < 0 or not upper > lower:
        raise ValueError(f"need 0 <= lower < upper, got ({lower}, {upper})")
    arcs = sorted(g.arcs)
    draws = rng.uniform(lower, upper, size=len(arcs))
    bad = draws <= 0.0
    while np.any(bad):
        draws[bad] = rng.uniform(lower, upper, size=int(bad.sum()))
        bad = draws <= 0.0
    xi = np.zeros((g.n, g.n))
    for (j, i), value in zip(arcs, draws):
        xi[i, j] = value
    return FadingRealization(g, xi)


def superimpose(g: CommTopology, fading: FadingRealization, payloads) -> ReceivedAggregate:
    if fading.topology != g:
        raise ValueError("fading realization belongs to a different topology")
    mu = as_points(payloads, "payloads")
    if len(mu) != g.n:
        raise ValueError(f"expected {g.n} payloads, got {len(mu)}")
    nu = fading.xi @ mu
    nu_prime = fading.xi.sum(axis=1)
    if np.any(nu_prime <= 0.0):
        raise ChannelError(f"nonpositive known-value sum at receivers "
                           f"{np.flatnonzero(nu_prime <= 0).tolist()}")
    return ReceivedAggregate(nu=nu, nu_prime=nu_prime, zeta=nu / nu_prime[:, None])


def weight_matrix(g: CommTopology, fading: FadingRealization) -> np.ndarray:
    """Row-normalised gains ``h_ij``; zero off the arc set, rows sum to one."""
    if fading.topology != g:
        raise ValueError("fading realization belongs to a different topology")
    return fading.xi / fading.xi.sum(axis=1, keepdims=True)
