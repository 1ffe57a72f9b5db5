"""Scenario config files: TOML with one section per concern.

Keys are the :class:`~ota_formation.scenario.ScenarioConfig` field names::

    [run]        seed, duration, decimation
    [agents]     n, displacements, gain_a, initial_positions, initial_box,
                 initial_references
    [safety]     delta_s, delta_c
    [channel]    fading_lower, fading_upper
    [topology]   topology_mode, pool_size, density, topologies, weights
    [integrator] update_interval, integrator_step, update_interval_min,
                 update_interval_max
    [metrics]    agreement_threshold, formation_tolerance, velocity_tolerance,
                 messages_per_arc

``--set key=value`` overrides accept either ``key`` or ``section.key`` and
are applied before validation.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .scenario import ScenarioConfig, problems

SECTIONS: dict[str, tuple[str, ...]] = {
    "run": ("seed", "duration", "decimation"),
    "agents": ("n", "displacements", "gain_a", "initial_positions", "initial_box",
               "initial_references"),
    "safety": ("delta_s", "delta_c"),
    "channel": ("fading_lower", "fading_upper"),
    "topology": ("topology_mode", "pool_size", "density", "topologies", "weights"),
    "integrator": ("update_interval", "integrator_step", "update_interval_min",
                   "update_interval_max"),
    "metrics": ("agreement_threshold", "formation_tolerance", "velocity_tolerance",
                "messages_per_arc"),
}
SECTION_OF = {key: sec for sec, keys in SECTIONS.items() for key in keys}

PRESETS = ("hexagon6", "square4-symmetric", "square4-random-topologies")

_LINE_RE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class LoadedConfig:
    config: ScenarioConfig
    source: str
    text: str

    @property
    def digest(self) -> str:
        return config_digest(self.config)


def config_digest(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(cfg.to_mapping(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(PRESETS)})",
                          source="<preset>")
    return resources.files("ota_formation.presets").joinpath(f"{name}.toml").read_text("utf-8")


def _key_line(text: str, section: Optional[str], key: str) -> Optional[int]:
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if re.match(rf"{re.escape(key)}\s*=", line) and (section is None or current == section):
            return lineno
    return None


def _flatten(doc: dict, text: str, source: str) -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for section, body in doc.items():
        if section not in SECTIONS or not isinstance(body, dict):
            line = _key_line(text, None, section)
            if line is None:
                line = next((i for i, raw in enumerate(text.splitlines(), 1)
                             if raw.strip() == f"[{section}]"), None)
            raise ConfigError(f"unknown section '{section}'", source, line)
        for key, value in body.items():
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]", source,
                                  _key_line(text, section, key), key)
            flat[key] = value
    return flat


def _parse_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value", "<override>")
        key, raw = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, key = key.split(".", 1)
            if SECTION_OF.get(key) != section:
                raise ConfigError(f"unknown key '{section}.{key}'", "<override>", key=key)
        if key not in SECTION_OF:
            raise ConfigError(f"unknown key '{key}'", "<override>", key=key)
        out[key] = _parse_value(raw)
    return out


def parse_config(text: str, source: str = "<config>", overrides: Iterable[str] = (),
                 seed: Optional[int] = None) -> LoadedConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LINE_RE.search(str(exc))
        raise ConfigError(f"syntax error: {exc}", source, int(m.group(1)) if m else None) from None
    data = _flatten(doc, text, source)
    file_data = dict(data)
    over = parse_overrides(overrides)
    if seed is not None:
        over["seed"] = seed
    data.update(over)
    missing = [k for k in ("n", "displacements") if k not in data]
    if missing:
        raise ConfigError(f"missing required key '{missing[0]}' in section "
                          f"[{SECTION_OF[missing[0]]}]", source, key=missing[0])
    cfg = ScenarioConfig.from_mapping(data)
    found = problems(cfg)
    if found:
        key, problem = found[0]
        if over and (key in over or not _file_has_problem(file_data, problem)):
            raise ConfigError(problem, "<override>", key=key)
        raise ConfigError(problem, source, _key_line(text, SECTION_OF.get(key), key), key)
    return LoadedConfig(cfg, source, text)


def _file_has_problem(file_data: dict[str, Any], problem: str) -> bool:
    if "n" not in file_data or "displacements" not in file_data:
        return False
    return any(p == problem for _, p in problems(ScenarioConfig.from_mapping(file_data)))


def load_config(path: Optional[str | Path] = None, preset: Optional[str] = None,
                overrides: Iterable[str] = (), seed: Optional[int] = None) -> LoadedConfig:
    """Read a config file or a bundled preset, apply overrides, validate."""
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config path or a preset name", "<cli>")
    if preset is not None:
        return parse_config(preset_text(preset), f"<preset {preset}>", overrides, seed)
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, str(path), overrides, seed)


def dump_config(cfg: ScenarioConfig) -> dict[str, dict[str, Any]]:
    """Sectioned mapping suitable for writing back as TOML (``None`` omitted)."""
    data = cfg.to_mapping()
    out: dict[str, dict[str, Any]] = {}
    for section, keys in SECTIONS.items():
        body = {k: _plain(data[k]) for k in keys if data[k] is not None}
        if body:
            out[section] = body
    return out


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value
