"""Jump-flow formation dynamics.

Between update times every agent flows under one of three laws:

1. safe since the last update: ``-a (p - theta)``;
2. safe now but in danger earlier in the interval: a constant velocity that
   carries the position it had at the last danger time ``tau`` onto the
   reference exactly at the next update time;
3. currently in danger: repulsion plus ``-a (p - theta)``.

At an update time agents broadcast over the air, and each reference jumps to
the received over-the-air variable shifted by the agent's displacement.
Danger is tracked at integrator-step granularity and the law of each agent is
frozen for the duration of a single RK4 step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .channel import sample_fading, superimpose, weight_matrix
from .errors import InitialConditionError, SafetyViolation
from .geometry import FormationSpec, SafetyParams, as_points, pairwise_distances, safe_mask
from .metrics import node_to_node_consensus_step
from .potential import repulsion_field
from .scenario import ScenarioConfig, build_pool, initial_positions, stream, topology_of
from .topology import CommTopology, sample_topology

SAFE_SINCE_UPDATE, RELEASED, IN_DANGER = 1, 2, 3

PROTOCOLS = ("ota", "exact_mean")


@dataclass
class AgentState:
    position: np.ndarray
    reference: np.ndarray
    in_danger_since_update: bool = False
    last_danger_time: Optional[float] = None
    last_danger_position: Optional[np.ndarray] = None


@dataclass
class SwarmState:
    """Array-backed state of all agents.

    ``last_danger_time`` is NaN (and ``last_danger_position`` NaN rows) for
    agents that have not been in danger since the last update.
    """

    positions: np.ndarray
    references: np.ndarray
    endangered: np.ndarray
    last_danger_time: np.ndarray
    last_danger_position: np.ndarray

    @classmethod
    def initial(cls, positions, references=None) -> "SwarmState":
        p = as_points(positions).copy()
        ref = p.copy() if references is None else as_points(references, "references").copy()
        n = len(p)
        return cls(p, ref, np.zeros(n, dtype=bool), np.full(n, np.nan), np.full((n, 2), np.nan))

    @classmethod
    def from_agents(cls, agents: list[AgentState]) -> "SwarmState":
        state = cls.initial([a.position for a in agents], [a.reference for a in agents])
        for i, a in enumerate(agents):
            state.endangered[i] = a.in_danger_since_update
            if a.last_danger_time is not None:
                state.last_danger_time[i] = a.last_danger_time
                state.last_danger_position[i] = a.last_danger_position
        return state

    @property
    def n(self) -> int:
        return len(self.positions)

    def agent(self, i: int) -> AgentState:
        tau = self.last_danger_time[i]
        has_tau = not math.isnan(tau)
        return AgentState(
            self.positions[i].copy(),
            self.references[i].copy(),
            bool(self.endangered[i]),
            float(tau) if has_tau else None,
            self.last_danger_position[i].copy() if has_tau else None,
        )

    def copy(self) -> "SwarmState":
        return SwarmState(self.positions.copy(), self.references.copy(),
                          self.endangered.copy(), self.last_danger_time.copy(),
                          self.last_danger_position.copy())


def broadcast_payload(state: SwarmState, safe: frozenset[int],
                      formation: FormationSpec) -> np.ndarray:
    """Safe agents send ``p - d``; agents in danger send ``theta - d``."""
    mask = np.zeros(state.n, dtype=bool)
    mask[list(safe)] = True
    source = np.where(mask[:, None], state.positions, state.references)
    return source - formation.displacements


def jump(state: SwarmState, zeta, formation: FormationSpec) -> SwarmState:
    """Reference update at an update time; positions are left untouched."""
    return SwarmState.initial(state.positions,
                              np.asarray(zeta, dtype=float) + formation.displacements)


def update_danger(state: SwarmState, t: float, safety: SafetyParams) -> tuple[np.ndarray, float]:
    """Refresh danger bookkeeping at time ``t``.

    Returns the safe mask and the minimum pair distance; raises
    :class:`SafetyViolation` if any pair is within ``delta_s``.
    """
    if state.n < 2:
        return np.ones(state.n, dtype=bool), math.inf
    dist = pairwise_distances(state.positions)
    dmin = float(dist.min())
    if dmin <= safety.delta_s:
        i, j = np.unravel_index(int(np.argmin(dist)), dist.shape)
        raise SafetyViolation(int(i), int(j), dmin, t)
    safe = np.all(dist > safety.delta_c, axis=1)
    unsafe = ~safe
    state.endangered |= unsafe
    state.last_danger_time[unsafe] = t
    state.last_danger_position[unsafe] = state.positions[unsafe]
    return safe, dmin


def regimes(state: SwarmState, safe: np.ndarray) -> np.ndarray:
    reg = np.full(state.n, SAFE_SINCE_UPDATE)
    reg[safe & state.endangered] = RELEASED
    reg[~safe] = IN_DANGER
    return reg


def _released_velocity(state: SwarmState, t_next: float, rows: np.ndarray) -> np.ndarray:
    left = t_next - state.last_danger_time[rows]
    return -(state.last_danger_position[rows] - state.references[rows]) / left[:, None]


def flow_velocities(state: SwarmState, t_next: float, safety: SafetyParams,
                    gain_a: float, reg: Optional[np.ndarray] = None) -> np.ndarray:
    """Velocity of every agent under its current law, shape ``(n, 2)``.

    Danger bookkeeping in ``state`` must already be current.
    """
    if reg is None:
        reg = regimes(state, safe_mask(state.positions, safety))
    vel = -gain_a * (state.positions - state.references)
    rel = reg == RELEASED
    if rel.any():
        vel[rel] = _released_velocity(state, t_next, rel)
    danger = reg == IN_DANGER
    if danger.any():
        vel[danger] += repulsion_field(state.positions, safety, rows=danger)[danger]
    return vel


def flow_velocity(state: SwarmState, i: int, t_next: float, safety: SafetyParams,
                  gain_a: float) -> np.ndarray:
    return flow_velocities(state, t_next, safety, gain_a)[i]


def _rk4_step(state: SwarmState, reg: np.ndarray, v_rel: Optional[np.ndarray], dt: float,
              safety: SafetyParams, gain_a: float, t: float) -> np.ndarray:
    theta = state.references
    rel = reg == RELEASED
    danger = reg == IN_DANGER
    any_danger = bool(danger.any())

    def rhs(p):
        v = -gain_a * (p - theta)
        if v_rel is not None:
            v[rel] = v_rel
        if any_danger:
            v[danger] += repulsion_field(p, safety, rows=danger, time=t)[danger]
        return v

    p = state.positions
    k1 = rhs(p)
    k2 = rhs(p + 0.5 * dt * k1)
    k3 = rhs(p + 0.5 * dt * k2)
    k4 = rhs(p + dt * k3)
    return p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


StepHook = Callable[[float, SwarmState, np.ndarray, float], None]


def steps_per_interval(length: float, integrator_step: float) -> int:
    """Smallest step count whose uniform step does not exceed ``integrator_step``."""
    if length <= 0:
        return 0
    return max(1, math.ceil(length / integrator_step - 1e-9))


def _entry_fraction(start: np.ndarray, move: np.ndarray, others: np.ndarray,
                    radius: float) -> float:
    """Fraction of the segment ``start -> start + move`` covered before it first
    enters a disc of ``radius`` around any point of ``others`` (1.0 if never)."""
    ww = float(move @ move)
    if ww == 0.0 or len(others) == 0:
        return 1.0
    c = start[None, :] - others
    cw = c @ move
    cc = np.einsum("ij,ij->i", c, c) - radius**2
    if np.any(cc <= 0.0):
        return 0.0
    disc = cw**2 - ww * cc
    hit = (cw < 0.0) & (disc >= 0.0)
    if not hit.any():
        return 1.0
    first = float(np.min((-cw[hit] - np.sqrt(disc[hit])) / ww))
    return min(1.0, first)


def _cut_moves(origin: np.ndarray, moves: np.ndarray, rows: np.ndarray,
               radius: float) -> np.ndarray:
    """Shorten the straight moves of released agents where they re-enter danger.

    A released agent ignores repulsion and may be very fast, so its planned
    move is checked against the critical discs around the other agents; on
    entry it stops just inside the boundary, and the next step boundary
    finds it in danger.  Agents already processed are seen at their new
    positions.
    """
    moves = moves.copy()
    where = origin.copy()
    for i in np.flatnonzero(rows):
        move = moves[i]
        others = np.delete(where, i, axis=0)
        frac = _entry_fraction(origin[i], move, others, radius)
        if frac < 1.0:
            length = math.sqrt(float(move @ move))
            moves[i] = min(1.0, frac + 1e-9 / length) * move
        where[i] = origin[i] + moves[i]
    return moves


def step_interval(state: SwarmState, t_k: float, t_next: float, *, safety: SafetyParams,
                  gain_a: float, integrator_step: float,
                  on_step: Optional[StepHook] = None) -> SwarmState:
    """Integrate the flow from ``t_k`` (just after a jump) to ``t_next``.

    ``on_step(t, state, safe_mask, min_distance)`` is called at every step
    boundary before the step is taken.

    Danger exit is only seen at step boundaries, so the exit time lies
    between the last unsafe boundary and the first safe one.  The released
    law is anchored at the first safe boundary (``tau`` and ``p(tau)`` are
    moved there), which makes the constant velocity land the agent on its
    reference at ``t_next``.  Agents that first show up safe at ``t_next``
    itself never got a released step; they are moved onto their reference
    directly.  Both moves are subject to the re-entry cut.
    """
    state = state.copy()
    m = steps_per_interval(t_next - t_k, integrator_step)
    if m == 0:
        return state
    dt = (t_next - t_k) / m
    anchored = np.zeros(state.n, dtype=bool)
    for s in range(m):
        t = t_k + s * dt
        safe, dmin = update_danger(state, t, safety)
        anchored &= safe
        reg = regimes(state, safe)
        rel = reg == RELEASED
        fresh = rel & ~anchored
        if fresh.any():
            state.last_danger_time[fresh] = t
            state.last_danger_position[fresh] = state.positions[fresh]
            anchored |= fresh
        if on_step is not None:
            on_step(t, state, safe, dmin)
        v_rel = None
        if rel.any():
            v_full = np.zeros_like(state.positions)
            v_full[rel] = _released_velocity(state, t_next, rel)
            v_rel = _cut_moves(state.positions, dt * v_full, rel, safety.delta_c)[rel] / dt
        state.positions = _rk4_step(state, reg, v_rel, dt, safety, gain_a, t)

    safe, _ = update_danger(state, t_next, safety)
    late = safe & state.endangered & ~anchored
    if late.any():
        landing = np.zeros_like(state.positions)
        landing[late] = state.references[late] - state.positions[late]
        state.positions = state.positions + _cut_moves(state.positions, landing, late,
                                                       safety.delta_c)
        update_danger(state, t_next, safety)
    return state


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Sampled output of :func:`simulate`.

    ``update_references[k]`` holds the references in force at update time
    ``t_k`` before the jump there, i.e. after ``k`` communication rounds;
    entry 0 is the initial reference.  Per-jump data (``weights``,
    ``safe_sets``, ``arc_counts``) has one entry per round.
    """

    config: ScenarioConfig
    protocol: str
    times: np.ndarray
    positions: np.ndarray
    references: np.ndarray
    in_danger: np.ndarray
    update_times: np.ndarray
    update_references: np.ndarray
    weights: np.ndarray
    safe_sets: tuple
    arc_counts: np.ndarray
    final_velocity: np.ndarray
    min_distance: float

    @property
    def formation(self) -> FormationSpec:
        return self.config.formation

    @property
    def reference_offsets(self) -> np.ndarray:
        """``theta_i - d_i`` at every update time, shape ``(K + 1, n, 2)``."""
        return self.update_references - self.formation.displacements[None]

    def centroid(self) -> np.ndarray:
        """Consensus value of the shifted references at the end of the run."""
        return self.reference_offsets[-1].mean(axis=0)

    def targets(self) -> np.ndarray:
        return self.formation.targets(self.centroid())

    def formation_error(self) -> float:
        return float(np.max(np.linalg.norm(self.positions[-1] - self.targets(), axis=1)))

    def max_final_speed(self) -> float:
        return float(np.max(np.linalg.norm(self.final_velocity, axis=1)))


def _uniform_mean(g: CommTopology) -> np.ndarray:
    mask = g.in_mask().astype(float)
    return mask / mask.sum(axis=1, keepdims=True)


def simulate(cfg: ScenarioConfig, protocol: str = "ota") -> TrajectoryRecord:
    """Run the jump-flow system for ``cfg.duration`` seconds.

    ``protocol="ota"`` mixes with fading-weighted over-the-air sums (or the
    fixed weight matrix); ``"exact_mean"`` is the interference-free baseline
    where every agent averages the exact payloads of its in-neighbours.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    safety = cfg.safety
    formation = cfg.formation
    n = cfg.n

    p0 = initial_positions(cfg)
    if n > 1 and not np.all(safe_mask(p0, safety)):
        raise InitialConditionError("initial positions must all be farther than "
                                    f"delta_c={cfg.delta_c} from each other")
    state = SwarmState.initial(p0, cfg.initial_references)

    pool = build_pool(cfg)
    topo_rng = stream(cfg.seed, "topology")
    fade_rng = stream(cfg.seed, "fading")
    fixed = np.array(cfg.weights, dtype=float) if cfg.topology_mode == "fixed" else None

    K = cfg.n_updates
    delta = cfg.update_interval
    times, pos_s, ref_s, dang_s = [], [], [], []
    upd_refs = []
    weights = np.empty((K, n, n))
    safe_sets = []
    arc_counts = np.empty(K, dtype=int)
    tracker = {"dmin": math.inf}
    step_index = [0]

    def record(t, st, safe):
        times.append(t)
        pos_s.append(st.positions.copy())
        ref_s.append(st.references.copy())
        dang_s.append(~safe)

    def hook(t, st, safe, dmin):
        tracker["dmin"] = min(tracker["dmin"], dmin)
        if step_index[0] % cfg.decimation == 0:
            record(t, st, safe)
        step_index[0] += 1

    for k in range(K):
        t_k = k * delta
        upd_refs.append(state.references.copy())
        safe = safe_mask(state.positions, safety)
        safe_now = frozenset(int(i) for i in np.flatnonzero(safe))
        mu = broadcast_payload(state, safe_now, formation)

        if fixed is not None:
            g = topology_of(fixed)
            if protocol == "ota":
                h = fixed
                zeta = h @ mu
            else:
                h = _uniform_mean(g)
                zeta = node_to_node_consensus_step(mu, g)
        else:
            g = sample_topology(pool, topo_rng)
            if protocol == "ota":
                fading = sample_fading(g, fade_rng, cfg.fading_lower, cfg.fading_upper)
                zeta = superimpose(g, fading, mu).zeta
                h = weight_matrix(g, fading)
            else:
                h = _uniform_mean(g)
                zeta = node_to_node_consensus_step(mu, g)
        weights[k] = h
        safe_sets.append(safe_now)
        arc_counts[k] = g.non_self_arc_count

        state = jump(state, zeta, formation)
        state = step_interval(state, t_k, t_k + delta, safety=safety, gain_a=cfg.gain_a,
                              integrator_step=cfg.integrator_step, on_step=hook)

    T = K * delta
    upd_refs.append(state.references.copy())
    final_safe, dmin = update_danger(state, T, safety)
    tracker["dmin"] = min(tracker["dmin"], dmin)
    record(T, state, final_safe)

    # velocity just past the horizon with bookkeeping as after an update
    fresh = SwarmState.initial(state.positions, state.references)
    final_velocity = flow_velocities(fresh, T + delta, safety, cfg.gain_a,
                                     regimes(fresh, final_safe))

    if n == 1:
        tracker["dmin"] = math.inf
    return TrajectoryRecord(
        config=cfg,
        protocol=protocol,
        times=np.array(times),
        positions=np.array(pos_s),
        references=np.array(ref_s),
        in_danger=np.array(dang_s),
        update_times=np.arange(K + 1) * delta,
        update_references=np.array(upd_refs),
        weights=weights,
        safe_sets=tuple(safe_sets),
        arc_counts=arc_counts,
        final_velocity=final_velocity,
        min_distance=tracker["dmin"],
    )

