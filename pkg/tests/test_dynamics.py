import math

import numpy as np
import pytest

from ota_formation.dynamics import (
    IN_DANGER,
    RELEASED,
    SAFE_SINCE_UPDATE,
    AgentState,
    SwarmState,
    broadcast_payload,
    flow_velocities,
    flow_velocity,
    jump,
    regimes,
    simulate,
    step_interval,
    steps_per_interval,
    update_danger,
)
from ota_formation.errors import InitialConditionError, SafetyViolation
from ota_formation.geometry import FormationSpec, safe_mask, safe_set
from ota_formation.scenario import ScenarioConfig


def test_broadcast_payload_safe_and_unsafe():
    state = SwarmState.initial([(5.0, 5.0), (20.0, 0.0)], [(9.0, 9.0), (3.0, 0.0)])
    f = FormationSpec([(1.0, 1.0), (1.0, 0.0)])
    mu = broadcast_payload(state, frozenset({0}), f)
    assert np.array_equal(mu, [[4.0, 4.0], [2.0, 0.0]])


def test_jump_sets_references_and_keeps_positions():
    state = SwarmState.initial([(3.0, 4.0)], [(0.0, 0.0)])
    state.endangered[0] = True
    state.last_danger_time[0] = 0.05
    after = jump(state, [(0.0, 0.0)], FormationSpec([(1.0, 2.0)]))
    assert np.array_equal(after.references, [[1.0, 2.0]])
    assert np.array_equal(after.positions, state.positions)
    assert not after.endangered[0] and math.isnan(after.last_danger_time[0])


def test_jump_with_equal_gains_on_complete_graph_gives_mean():
    from ota_formation.channel import FadingRealization, superimpose
    from ota_formation.topology import CommTopology

    p = np.array([(0.0, 0.0), (30.0, 0.0), (0.0, 40.0)])
    f = FormationSpec([(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)])
    state = SwarmState.initial(p)
    g = CommTopology.complete(3)
    mu = broadcast_payload(state, frozenset(range(3)), f)
    zeta = superimpose(g, FadingRealization(g, np.full((3, 3), 0.3)), mu).zeta
    after = jump(state, zeta, f)
    expected = (p - f.displacements).mean(axis=0)
    assert np.allclose(after.references - f.displacements, expected, atol=1e-12)


def test_regime_one_fixed_point(safety):
    state = SwarmState.initial([(1.0, 2.0)], [(1.0, 2.0)])
    assert np.array_equal(flow_velocity(state, 0, 0.1, safety, 1.0), [0.0, 0.0])


def test_regime_two_constant_velocity(safety):
    state = SwarmState.from_agents([AgentState(
        position=np.array([0.5, 0.0]), reference=np.array([0.0, 0.0]),
        in_danger_since_update=True, last_danger_time=0.05,
        last_danger_position=np.array([1.0, 0.0]))])
    assert regimes(state, np.array([True]))[0] == RELEASED
    assert np.allclose(flow_velocity(state, 0, 0.1, safety, 1.0), [-20.0, 0.0])


def test_regime_three_pure_repulsion(safety):
    p = [(0.0, 0.0), (6.0, 0.0)]
    state = SwarmState.initial(p, p)
    reg = regimes(state, safe_mask(state.positions, safety))
    assert list(reg) == [IN_DANGER, IN_DANGER]
    assert np.allclose(flow_velocities(state, 0.1, safety, 1.0), [[-26.0, 0.0], [26.0, 0.0]])


def test_regimes_labels():
    state = SwarmState.initial(np.zeros((3, 2)) + [[0, 0], [50, 0], [100, 0]])
    state.endangered[:] = [False, True, True]
    reg = regimes(state, np.array([True, True, False]))
    assert list(reg) == [SAFE_SINCE_UPDATE, RELEASED, IN_DANGER]


def test_update_danger_records_tau_and_raises(safety):
    state = SwarmState.initial([(0.0, 0.0), (6.0, 0.0), (50.0, 0.0)])
    safe, dmin = update_danger(state, 0.03, safety)
    assert list(safe) == [False, False, True]
    assert dmin == 6.0
    assert list(state.endangered) == [True, True, False]
    assert state.last_danger_time[0] == 0.03
    with pytest.raises(SafetyViolation) as exc:
        update_danger(SwarmState.initial([(0.0, 0.0), (3.0, 0.0)]), 1.0, safety)
    assert {exc.value.i, exc.value.j} == {0, 1} and exc.value.time == 1.0


def test_single_safe_agent_matches_exponential(safety):
    state = SwarmState.initial([(1.0, 0.0)], [(0.0, 0.0)])
    out = step_interval(state, 0.0, 0.1, safety=safety, gain_a=1.0, integrator_step=1e-3)
    assert abs(out.positions[0, 0] - math.exp(-0.1)) < 1e-9
    assert out.positions[0, 1] == 0.0


def test_zero_duration_interval_is_identity(safety):
    state = SwarmState.initial([(1.0, 0.0), (30.0, 0.0)], [(0.0, 0.0), (31.0, 1.0)])
    out = step_interval(state, 0.2, 0.2, safety=safety, gain_a=1.0, integrator_step=1e-3)
    assert np.array_equal(out.positions, state.positions)
    assert np.array_equal(out.references, state.references)


def test_steps_per_interval():
    assert steps_per_interval(0.1, 1e-3) == 100
    assert steps_per_interval(0.1, 0.03) == 4
    assert steps_per_interval(0.0, 1e-3) == 0


def passing_pair():
    """Agent 0 drives along the x-axis past agent 1, briefly entering its
    critical disc, and leaves it again well before the interval ends."""
    return SwarmState.initial([(0.0, 0.0), (1.5, 7.95)], [(40.0, 0.0), (1.5, 7.95)])


def run_passing(safety):
    speeds = []
    flags = []

    def hook(t, st, safe, dmin):
        flags.append(~safe)

    state = passing_pair()
    prev = state.positions.copy()
    out = state
    # step one integrator step at a time to measure the speed profile
    positions = [prev]
    out = step_interval(state, 0.0, 0.1, safety=safety, gain_a=1.0, integrator_step=1e-3,
                        on_step=hook)
    return out, np.array(flags)


def test_released_agents_land_on_reference(safety):
    out, flags = run_passing(safety)
    assert flags[:, 0].any() and not flags[-1, 0]
    assert np.linalg.norm(out.positions - out.references, axis=1).max() < 1e-6


def test_released_agent_broadcasts_reference(safety):
    out, _ = run_passing(safety)
    f = FormationSpec([(0.0, 0.0), (20.0, 0.0)])
    safe = safe_set(out.positions, safety)
    assert safe == {0, 1}
    mu = broadcast_payload(out, safe, f)
    assert np.allclose(mu, out.references - f.displacements, atol=1e-6)


def small_config(**kw):
    base = dict(n=3, displacements=((0.0, 0.0), (10.0, 0.0), (0.0, 10.0)),
                initial_positions=((0.0, 0.0), (30.0, 0.0), (0.0, 30.0)),
                duration=2.0, topology_mode="pool")
    base.update(kw)
    return ScenarioConfig(**base)


def test_simulate_single_agent():
    cfg = ScenarioConfig(n=1, displacements=((0.0, 0.0),), initial_positions=((3.0, 4.0),),
                         initial_references=((9.0, 9.0),), duration=2.0)
    rec = simulate(cfg)
    assert np.linalg.norm(rec.positions[-1] - rec.references[-1]) < 1e-6
    assert math.isinf(rec.min_distance)


def test_simulate_rejects_unsafe_start():
    cfg = small_config(initial_positions=((0.0, 0.0), (5.0, 0.0), (0.0, 30.0)))
    with pytest.raises(InitialConditionError):
        simulate(cfg)


def test_simulate_is_deterministic():
    a, b = simulate(small_config(seed=3)), simulate(small_config(seed=3))
    for name in ("times", "positions", "references", "in_danger", "weights", "update_references"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_simulate_record_structure():
    cfg = small_config()
    rec = simulate(cfg)
    K = cfg.n_updates
    assert np.all(np.diff(rec.times) > 0)
    assert rec.times[0] == 0.0 and rec.times[-1] == pytest.approx(cfg.duration)
    assert rec.update_references.shape == (K + 1, 3, 2)
    assert rec.weights.shape == (K, 3, 3)
    assert len(rec.safe_sets) == K and len(rec.arc_counts) == K
    assert np.allclose(rec.weights.sum(axis=2), 1.0, atol=1e-12)


def test_references_only_change_at_updates():
    rec = simulate(small_config(decimation=1))
    per_interval = 100
    refs = rec.references[:-1].reshape(-1, per_interval, 3, 2)
    assert np.all(refs == refs[:, :1])


def test_exact_mean_protocol_uses_uniform_weights():
    rec = simulate(small_config(), protocol="exact_mean")
    for h in rec.weights:
        for row in h:
            nz = row[row > 0]
            assert np.allclose(nz, 1.0 / len(nz))


def test_unknown_protocol():
    with pytest.raises(ValueError):
        simulate(small_config(), protocol="psk")


def test_hexagon_keeps_agents_apart(hexagon_run):
    assert hexagon_run.min_distance > 4.0
    from ota_formation.geometry import min_pairwise_distance
    assert min(min_pairwise_distance(p) for p in hexagon_run.positions) >= hexagon_run.min_distance
