"""Scenario parameters, their validation, and seeded random streams."""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .geometry import FormationSpec, SafetyParams, is_well_posed, pairwise_distances
from .topology import CommTopology, TopologyPool, generate_pool, is_strongly_connected

TOPOLOGY_MODES = ("pool", "list", "fixed")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named randomness source.

    Each source gets its own spawn key, so e.g. changing how many fading draws
    are consumed never shifts the topology sequence.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one run.

    Field names double as the keys of the config file format.
    """

    n: int
    displacements: tuple[tuple[float, float], ...]
    gain_a: float = 1.0
    delta_s: float = 4.0
    delta_c: float = 8.0
    update_interval: float = 0.1
    integrator_step: float = 1e-3
    duration: float = 20.0
    update_interval_min: Optional[float] = None
    update_interval_max: Optional[float] = None
    seed: int = 0
    decimation: int = 10
    topology_mode: str = "pool"
    pool_size: int = 5
    density: float = 0.3
    topologies: Optional[tuple] = None   # adjacency lists, for topology_mode="list"
    weights: Optional[tuple] = None      # row-stochastic matrix, for topology_mode="fixed"
    fading_lower: float = 0.0
    fading_upper: float = 1.0
    initial_positions: Optional[tuple] = None
    initial_box: float = 60.0
    initial_references: Optional[tuple] = None
    agreement_threshold: float = 0.01
    formation_tolerance: float = 0.1
    velocity_tolerance: float = 1e-3
    messages_per_arc: int = 1

    @property
    def safety(self) -> SafetyParams:
        return SafetyParams(self.delta_s, self.delta_c)

    @property
    def formation(self) -> FormationSpec:
        return FormationSpec(np.array(self.displacements, dtype=float))

    @property
    def n_updates(self) -> int:
        return int(round(self.duration / self.update_interval))

    def to_mapping(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ScenarioConfig":
        unknown = set(data) - set(cls.field_names())
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown key '{key}'", key=key)
        clean = dict(data)
        for key in ("displacements", "topologies", "weights", "initial_positions",
                    "initial_references"):
            if clean.get(key) is not None:
                clean[key] = _freeze(clean[key])
        return cls(**clean)

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_mapping()
        data.update(changes)
        return ScenarioConfig.from_mapping(data)


def _freeze(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in value)
    return value


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _matrix(value, rows: int, cols: int) -> Optional[np.ndarray]:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        return None
    if arr.shape != (rows, cols) or not np.all(np.isfinite(arr)):
        return None
    return arr


def validate(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending key."""
    for key, problem in problems(cfg):
        raise ConfigError(problem, key=key)


def problems(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    """All invariant violations as ``(key, message)`` pairs, in field order."""
    out: list[tuple[str, str]] = []

    def bad(key, msg):
        out.append((key, f"{key}: {msg}"))

    if not isinstance(cfg.n, int) or isinstance(cfg.n, bool) or cfg.n < 1:
        bad("n", "must be a positive integer")
        return out
    n = cfg.n
    disp = _matrix(cfg.displacements, n, 2)
    if disp is None:
        bad("displacements", f"must be {n} finite [x, y] pairs")
    for key in ("gain_a", "update_interval", "integrator_step", "duration", "initial_box"):
        value = getattr(cfg, key)
        if not _is_number(value) or value <= 0:
            bad(key, "must be a positive finite number")
    if not (_is_number(cfg.delta_s) and _is_number(cfg.delta_c)
            and 0 < cfg.delta_s < cfg.delta_c):
        bad("delta_c", f"need 0 < delta_s < delta_c, got delta_s={cfg.delta_s}, "
                       f"delta_c={cfg.delta_c}")
    if out:
        return out

    if cfg.integrator_step > cfg.update_interval:
        bad("integrator_step", "must not exceed update_interval")
    k = cfg.duration / cfg.update_interval
    if abs(k - round(k)) > 1e-9 * max(1.0, k) or round(k) < 1:
        bad("duration", f"must be a whole number of update intervals "
                        f"({cfg.update_interval}s)")
    if cfg.update_interval_min is not None and not cfg.update_interval >= cfg.update_interval_min:
        bad("update_interval", f"below update_interval_min={cfg.update_interval_min}")
    if cfg.update_interval_max is not None and not cfg.update_interval <= cfg.update_interval_max:
        bad("update_interval", f"above update_interval_max={cfg.update_interval_max}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        bad("seed", "must be a nonnegative integer")
    if not isinstance(cfg.decimation, int) or cfg.decimation < 1:
        bad("decimation", "must be a positive integer")
    if cfg.messages_per_arc not in (1, 2):
        bad("messages_per_arc", "must be 1 or 2")
    for key in ("agreement_threshold", "formation_tolerance", "velocity_tolerance"):
        if not _is_number(getattr(cfg, key)) or getattr(cfg, key) <= 0:
            bad(key, "must be a positive finite number")
    if not (_is_number(cfg.fading_lower) and _is_number(cfg.fading_upper)
            and 0 <= cfg.fading_lower < cfg.fading_upper):
        bad("fading_upper", "need 0 <= fading_lower < fading_upper")

    if disp is not None and not is_well_posed(FormationSpec(disp), cfg.safety):
        bad("displacements", f"formation is not well-posed: some displacements are "
                             f"within delta_c={cfg.delta_c} of each other")

    if cfg.topology_mode not in TOPOLOGY_MODES:
        bad("topology_mode", f"must be one of {', '.join(TOPOLOGY_MODES)}")
    elif cfg.topology_mode == "pool":
        if n >= 2 and (not isinstance(cfg.pool_size, int) or cfg.pool_size < 1):
            bad("pool_size", "must be a positive integer")
        if not _is_number(cfg.density) or not 0 <= cfg.density <= 1:
            bad("density", "must lie in [0, 1]")
    elif cfg.topology_mode == "list":
        try:
            graphs = [CommTopology.from_adjacency(a) for a in (cfg.topologies or ())]
        except (TypeError, ValueError) as exc:
            bad("topologies", f"malformed adjacency list ({exc})")
        else:
            if not graphs:
                bad("topologies", "must list at least one topology")
            elif any(g.n != n for g in graphs):
                bad("topologies", f"every topology must have {n} nodes")
            elif not all(is_strongly_connected(g) for g in graphs):
                bad("topologies", "every topology must be strongly connected")
    else:
        w = _matrix(cfg.weights, n, n) if cfg.weights is not None else None
        if w is None:
            bad("weights", f"must be a finite {n}x{n} matrix")
        elif (np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1) > 1e-12)
              or np.any(np.diag(w) <= 0)):
            bad("weights", "must be row-stochastic with a positive diagonal")
        elif not is_strongly_connected(topology_of(w)):
            bad("weights", "nonzero pattern must be strongly connected")

    for key in ("initial_positions", "initial_references"):
        value = getattr(cfg, key)
        if value is not None and _matrix(value, n, 2) is None:
            bad(key, f"must be {n} finite [x, y] pairs")
    if cfg.initial_positions is not None and n >= 2:
        p0 = np.array(cfg.initial_positions, dtype=float)
        if p0.shape == (n, 2) and not np.all(pairwise_distances(p0) > cfg.delta_c):
            bad("initial_positions", f"every agent must start farther than "
                                     f"delta_c={cfg.delta_c} from all others")
    return out


def topology_of(weights: np.ndarray) -> CommTopology:
    """Topology whose arcs are the nonzero entries of a weight matrix."""
    n = len(weights)
    return CommTopology(n, ((j, i) for i in range(n) for j in range(n) if weights[i, j] != 0))


def build_pool(cfg: ScenarioConfig) -> TopologyPool:
    if cfg.topology_mode == "list":
        return TopologyPool(tuple(CommTopology.from_adjacency(a) for a in cfg.topologies))
    if cfg.topology_mode == "fixed":
        return TopologyPool((topology_of(np.array(cfg.weights, dtype=float)),))
    if cfg.n == 1:
        return TopologyPool((CommTopology(1),))
    return generate_pool(cfg.n, cfg.pool_size, cfg.density, stream(cfg.seed, "pool"))


def sample_initial_positions(n: int, box: float, safety: SafetyParams,
                             rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Rejection-sample ``n`` points in a centred square of side ``box``.

    Every pair ends up strictly farther apart than ``delta_c``.
    """
    placed: list[np.ndarray] = []
    tries = 0
    while len(placed) < n:
        tries += 1
        if tries > max_tries:
            raise ConfigError(f"initial_box: could not place {n} agents more than "
                              f"delta_c={safety.delta_c} apart in a box of side {box}",
                              key="initial_box")
        p = rng.uniform(-box / 2, box / 2, size=2)
        if all(np.hypot(*(p - q)) > safety.delta_c for q in placed):
            placed.append(p)
    return np.array(placed)


def initial_positions(cfg: ScenarioConfig) -> np.ndarray:
    if cfg.initial_positions is not None:
        return np.array(cfg.initial_positions, dtype=float)
    return sample_initial_positions(cfg.n, cfg.initial_box, cfg.safety,
                                    stream(cfg.seed, "initial"))
