import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ota_formation.channel import FadingRealization, sample_fading, superimpose, weight_matrix
from ota_formation.consensus import classify
from ota_formation.topology import CommTopology, generate_pool


def fading(g, entries):
    xi = np.zeros((g.n, g.n))
    for (j, i), v in entries.items():
        xi[i, j] = v
    return FadingRealization(g, xi)


def test_single_transmitter_recovers_payload():
    g = CommTopology(1)
    agg = superimpose(g, fading(g, {(0, 0): 0.5}), [(2.0, 4.0)])
    assert np.allclose(agg.nu, [[1.0, 2.0]])
    assert np.allclose(agg.nu_prime, [0.5])
    assert np.allclose(agg.zeta, [[2.0, 4.0]])


def test_equal_gains_give_arithmetic_mean():
    g = CommTopology(2, [(0, 1), (1, 0)])
    f = fading(g, {(0, 0): 0.7, (1, 0): 0.7, (0, 1): 0.7, (1, 1): 0.7})
    agg = superimpose(g, f, [(0.0, 0.0), (2.0, 2.0)])
    assert np.allclose(agg.zeta, [[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(weight_matrix(g, f), 0.5)


def test_self_loop_only_row_is_unit_vector():
    g = CommTopology(3, [(0, 1), (1, 2), (2, 1)])
    f = sample_fading(g, np.random.default_rng(0))
    h = weight_matrix(g, f)
    assert np.array_equal(h[0], [1.0, 0.0, 0.0])


def test_fading_values_in_open_unit_interval():
    g = CommTopology.complete(6)
    for seed in range(20):
        xi = np.array(list(sample_fading(g, np.random.default_rng(seed)).coefficients().values()))
        assert len(xi) == 36
        assert np.all((xi > 0) & (xi < 1))


def test_fading_is_deterministic_and_degenerate_interval_is_near_constant():
    g = CommTopology.complete(4)
    a = sample_fading(g, np.random.default_rng(5))
    b = sample_fading(g, np.random.default_rng(5))
    assert np.array_equal(a.xi, b.xi)
    c = sample_fading(g, np.random.default_rng(5), 1.0 - 1e-9, 1.0)
    vals = np.array(list(c.coefficients().values()))
    assert np.ptp(vals) < 1e-9


def test_zero_draws_are_redrawn():
    class ZeroFirst:
        def __init__(self):
            self.inner = np.random.default_rng(0)
            self.first = True

        def uniform(self, lo, hi, size):
            out = self.inner.uniform(lo, hi, size)
            if self.first:
                out[0] = 0.0
                self.first = False
            return out

    g = CommTopology(2, [(0, 1), (1, 0)])
    f = sample_fading(g, ZeroFirst())
    assert np.all(f.xi > 0)


def test_fading_rejects_bad_shapes_and_values():
    g = CommTopology(2, [(0, 1)])
    with pytest.raises(ValueError):
        FadingRealization(g, np.ones((2, 2)))  # gain on a non-arc
    with pytest.raises(ValueError):
        FadingRealization(g, np.array([[1.0, 0.0], [0.0, 1.0]]))  # missing arc gain
    with pytest.raises(ValueError):
        sample_fading(g, np.random.default_rng(0), 1.0, 1.0)


def test_random_instance_matches_explicit_matrix():
    rng = np.random.default_rng(11)
    g = generate_pool(6, 1, 0.4, rng).topologies[0]
    f = sample_fading(g, rng)
    mu = rng.normal(size=(6, 2)) * 10
    h = weight_matrix(g, f)
    assert np.allclose(superimpose(g, f, mu).zeta, h @ mu, atol=1e-12, rtol=0)
    assert np.all(np.abs(h.sum(axis=1) - 1.0) <= 1e-12)
    assert np.array_equal(h > 0, g.in_mask())


def test_weight_matrix_is_primitive_on_strongly_connected_topologies():
    rng = np.random.default_rng(3)
    for g in generate_pool(6, 20, 0.2, rng).topologies:
        c = classify(weight_matrix(g, sample_fading(g, rng)))
        assert c.row_stochastic and c.irreducible and c.primitive


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.integers(0, 4))
def test_zeta_is_invariant_to_receiver_gain_scaling(seed, scale, receiver):
    rng = np.random.default_rng(seed)
    g = generate_pool(5, 1, 0.5, rng).topologies[0]
    f = sample_fading(g, rng)
    mu = rng.normal(size=(5, 2))
    xi = f.xi.copy()
    xi[receiver] *= scale
    scaled = FadingRealization(g, xi)
    assert np.allclose(superimpose(g, f, mu).zeta[receiver],
                       superimpose(g, scaled, mu).zeta[receiver], atol=1e-12, rtol=1e-12)
