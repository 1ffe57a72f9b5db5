"""Command-line front end.

Exit codes: 0 formation reached, 1 invalid input, 2 safety violation,
3 converged to a local minimum, 4 IO error, 5 neither reached nor settled.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .artifacts import (
    EXIT_CODES,
    INVALID_INPUT,
    IO_ERROR,
    MANIFEST_FILE,
    METRICS_FILE,
    PLOT_FILE,
    SAFETY_VIOLATION,
    TRAJECTORY_FILE,
    TrajectoryFormatError,
    build_report,
    manifest,
    read_trajectory,
    write_toml,
    write_trajectory,
    write_weights,
)
from .config import PRESETS, LoadedConfig, config_digest, load_config
from .dynamics import TrajectoryRecord, simulate
from .errors import ConfigError, InitialConditionError, SafetyViolation
from .plot import plot_trajectory, targets_from_table
from .scenario import ScenarioConfig


def _add_config_args(p: argparse.ArgumentParser, seed: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario TOML file")
    src.add_argument("--preset", choices=PRESETS, help="bundled scenario")
    if seed:
        p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ota-formation", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write its artifacts")
    _add_config_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--no-plot", action="store_true", help="skip the SVG plot")
    p.add_argument("--log-weights", action="store_true", help="also write weights.csv")

    p = sub.add_parser("compare", help="run over-the-air and exact-mean baselines side by side")
    _add_config_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("plot", help="render a trajectory CSV as SVG")
    p.add_argument("trajectory", type=Path)
    p.add_argument("--out", type=Path, required=True, help="SVG file to write")
    p.add_argument("--no-danger", action="store_true", help="uniform stroke width")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="config whose formation gives target diamonds")
    src.add_argument("--preset", choices=PRESETS)

    p = sub.add_parser("batch", help="run one scenario over several seeds in parallel")
    _add_config_args(p, seed=False)
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("validate", help="check a config and print its digest")
    _add_config_args(p)
    return parser


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(args) -> LoadedConfig:
    return load_config(args.config, args.preset, args.overrides, getattr(args, "seed", None))


def _write_run(record: TrajectoryRecord, out: Path, digest: str, plot: bool,
               log_weights: bool, baseline: Optional[TrajectoryRecord] = None) -> str:
    out.mkdir(parents=True, exist_ok=True)
    report = build_report(record, baseline)
    artifacts = {"trajectory": TRAJECTORY_FILE, "metrics": METRICS_FILE}
    write_trajectory(record, out / TRAJECTORY_FILE)
    if baseline is not None:
        artifacts["baseline_trajectory"] = "baseline_trajectory.csv"
        write_trajectory(baseline, out / "baseline_trajectory.csv")
    write_toml(report.to_mapping(), out / METRICS_FILE)
    if plot:
        table = read_trajectory(out / TRAJECTORY_FILE)
        plot_trajectory(table, out / PLOT_FILE, record.targets())
        artifacts["plot"] = PLOT_FILE
    if log_weights:
        write_weights(record, out / "weights.csv")
        artifacts["weights"] = "weights.csv"
    write_toml(manifest(digest, record.config.seed, report.outcome, artifacts),
               out / MANIFEST_FILE)
    return report.outcome


def _simulate_to(cfg: ScenarioConfig, out: Path, plot: bool = True, log_weights: bool = False,
                 compare: bool = False) -> tuple[str, str]:
    """Run and write artifacts; returns ``(outcome, message)``."""
    digest = config_digest(cfg)
    try:
        record = simulate(cfg, "ota")
        baseline = simulate(cfg, "exact_mean") if compare else None
    except SafetyViolation as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_toml(manifest(digest, cfg.seed, SAFETY_VIOLATION, {}), out / MANIFEST_FILE)
        return SAFETY_VIOLATION, str(exc)
    except InitialConditionError as exc:
        return INVALID_INPUT, str(exc)
    outcome = _write_run(record, out, digest, plot, log_weights, baseline)
    return outcome, f"{outcome}: formation error {record.formation_error():.3g}, " \
                    f"min distance {record.min_distance:.4g}"


def _batch_job(cfg: ScenarioConfig, out: str) -> tuple[int, str, str]:
    try:
        outcome, msg = _simulate_to(cfg, Path(out), plot=False)
    except OSError as exc:
        return cfg.seed, IO_ERROR, str(exc)
    return cfg.seed, outcome, msg


def cmd_run(args) -> int:
    loaded = _load(args)
    outcome, msg = _simulate_to(loaded.config, args.out, not args.no_plot, args.log_weights)
    (print if EXIT_CODES[outcome] in (0, 3, 5) else _err)(msg)
    return EXIT_CODES[outcome]


def cmd_compare(args) -> int:
    loaded = _load(args)
    outcome, msg = _simulate_to(loaded.config, args.out, compare=True)
    if outcome == SAFETY_VIOLATION or outcome == INVALID_INPUT:
        _err(msg)
        return EXIT_CODES[outcome]
    print(msg)
    print((args.out / METRICS_FILE).read_text(encoding="utf-8"), end="")
    return EXIT_CODES[outcome]


def cmd_plot(args) -> int:
    try:
        table = read_trajectory(args.trajectory)
    except TrajectoryFormatError as exc:
        _err(str(exc))
        return EXIT_CODES[INVALID_INPUT]
    targets = None
    if args.config is not None or args.preset is not None:
        cfg = load_config(args.config, args.preset).config
        try:
            targets = targets_from_table(table, cfg.displacements)
        except ValueError as exc:
            _err(str(exc))
            return EXIT_CODES[INVALID_INPUT]
    plot_trajectory(table, args.out, targets, mark_danger=not args.no_danger)
    return 0


def cmd_batch(args) -> int:
    base = _load(args).config
    jobs = [(base.replace(seed=s), str(args.out / f"seed-{s}")) for s in args.seeds]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(_batch_job, *zip(*jobs)))
    worst = 0
    for seed, outcome, msg in results:
        print(f"seed {seed}: {msg}")
        worst = max(worst, EXIT_CODES[outcome])
    return worst


def cmd_validate(args) -> int:
    loaded = _load(args)
    print(f"{loaded.source}: ok (n={loaded.config.n}, digest {loaded.digest})")
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "plot": cmd_plot, "batch": cmd_batch,
            "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which is taken by safety violations
        return EXIT_CODES[INVALID_INPUT] if exc.code == 2 else int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CODES[INVALID_INPUT]
    except OSError as exc:
        _err(str(exc))
        return EXIT_CODES[IO_ERROR]


if __name__ == "__main__":
    sys.exit(main())
