"""Command-line front end: design, replay, sweep, and ensemble runs.

Every subcommand reads one config file, optionally patched by
--section.key=value overrides; results land in the output directory as CSV
files with the full normalized config echoed in their comment header, plus a
rendered PNG next to each CSV unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import (RunConfig, build_bundle, normalized_dump, parse_config,
                     scaled_grid, scaled_offsets)
from .control import design_schedule
from .dynamics import propagate_target
from .errors import (EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PHYSICS, ConfigError,
                     PhysicalityError, ValidationError)
from .reporting import (fmt17, read_schedule_csv, write_design_csv,
                        write_ensemble_csv, write_replay_csv,
                        write_schedule_csv, write_sweep_csv)
from .robustness import noise_ensemble, replay_open_loop, sweep_uncertainty

OVERRIDE_RE = re.compile(r"--([a-z][a-z0-9_-]*)\.([a-z][a-z0-9_]*)=(.*)$")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="run configuration file")
    common.add_argument("--out", metavar="DIR",
                        help="output directory (default: config output key)")
    common.add_argument("--seed", type=lambda s: int(s, 0), metavar="U64",
                        help="override the run seed")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        metavar="N", help="worker processes for sweep/ensemble")
    common.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp comment from outputs")
    common.add_argument("--no-plot", action="store_true",
                        help="skip PNG rendering")
    parser = argparse.ArgumentParser(
        prog="qlyap",
        description="Lyapunov-control schedule design and robustness runs; "
                    "unknown flags of the form --section.key=value override "
                    "config entries")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (("design", "simulate the feedback loop, emit a schedule"),
                      ("replay", "drive a stored schedule open loop"),
                      ("sweep", "final fidelity over a perturbation grid"),
                      ("ensemble", "Monte Carlo of noisy replays")):
        sub.add_parser(name, parents=[common], help=doc)
    return parser


def _parse_args(argv):
    args, extra = _build_parser().parse_known_args(argv)
    overrides = []
    for item in extra:
        m = OVERRIDE_RE.match(item)
        if m is None:
            raise ConfigError(f"unrecognized argument: {item}")
        overrides.append((m.group(1), m.group(2), m.group(3)))
    if args.seed is not None:
        overrides.append(("run", "seed", str(args.seed)))
    if args.out is not None:
        overrides.append(("run", "output", args.out))
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return args, overrides


def _comment_block(config: RunConfig, subcommand: str,
                   with_timestamp: bool) -> list[str]:
    lines = [f"qlyap {subcommand}", f"seed: {config.seed}",
             f"dt: {fmt17(config.integrator.dt)}",
             f"t_final: {fmt17(config.integrator.t_final)}"]
    if with_timestamp:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        lines.append(f"timestamp: {stamp}")
    lines.append("config:")
    lines += [f"  {line}" if line else ""
              for line in normalized_dump(config).splitlines()]
    return lines


def _load_schedule(config: RunConfig):
    # schedule and output paths are working-directory relative; only the raw
    # matrix files of [model] travel with the config file itself
    if config.schedule_path is None:
        raise ConfigError("[run] schedule: required for this subcommand")
    path = Path(config.schedule_path)
    if not path.is_file():
        raise ConfigError(f"[run] schedule: file not found: {path}")
    return read_schedule_csv(path)


def _check_grid_match(config: RunConfig, schedule) -> None:
    if abs(config.integrator.dt - schedule.dt) > 1e-12:
        raise ValidationError(
            f"replay needs the schedule step size: config dt "
            f"{config.integrator.dt} vs schedule dt {schedule.dt}")
    if abs(config.integrator.t_final - schedule.t_final) > 1e-9:
        raise ValidationError(
            f"config t_final {config.integrator.t_final} vs schedule "
            f"t_final {schedule.t_final}")


def _run(args, config: RunConfig, cfg_dir: Path) -> int:
    from . import plots

    out = Path(config.output_path)
    os.makedirs(out, exist_ok=True)
    comments = _comment_block(config, args.command, not args.no_timestamp)
    bundle = build_bundle(config, base_dir=cfg_dir)

    if args.command == "design":
        report = design_schedule(
            bundle.model, bundle.rho0, bundle.rho_d, config.integrator,
            gains=config.gains, guard_eps=config.guard_eps,
            field_cap=config.field_cap)
        write_schedule_csv(out / "schedule.csv", report.schedule, comments)
        write_design_csv(out / "design.csv", report, comments)
        if not args.no_plot:
            plots.render_design(out / "design.png", report)
        print(f"design: final fidelity {report.fidelity_trace[-1]:.6f}, "
              f"final V {report.lyapunov_trace[-1]:.3e}, "
              f"{report.drift_cancel_clamps} drift-cancel clamps")
        print(f"wrote {out / 'schedule.csv'} and {out / 'design.csv'}")
        return EXIT_OK

    schedule = _load_schedule(config)
    _check_grid_match(config, schedule)
    stride = config.integrator.record_stride

    if args.command == "replay":
        plant = bundle.perturbed_model(scaled_offsets(config))
        target = propagate_target(bundle.model.h0, bundle.rho_d,
                                  config.integrator)
        series, final = replay_open_loop(plant, bundle.rho0, schedule,
                                         target, config.noise)
        write_replay_csv(out / "replay.csv", target[0], series, comments)
        if not args.no_plot:
            plots.render_replay(out / "replay.png", target[0], series)
        print(f"replay: final fidelity {final:.6f}")
        print(f"wrote {out / 'replay.csv'}")
        return EXIT_OK

    if args.command == "sweep":
        grid = scaled_grid(config)
        if grid is None:
            raise ConfigError("[sweep]: required for the sweep subcommand")
        result = sweep_uncertainty(schedule, bundle, grid,
                                   record_stride=stride, jobs=args.jobs,
                                   seed=config.seed)
        write_sweep_csv(out / "sweep.csv", result, comments)
        if not args.no_plot:
            plots.render_sweep(out / "sweep.png", result)
        print(f"sweep: {result.values.size} points, min fidelity "
              f"{result.values.min():.6f}, mean {result.values.mean():.6f} "
              f"({result.wall_time:.1f}s)")
        print(f"wrote {out / 'sweep.csv'}")
        return EXIT_OK

    plant = bundle.perturbed_model(scaled_offsets(config))
    result = noise_ensemble(schedule, plant, bundle.rho0, bundle.rho_d,
                            config.noise, trials=config.trials,
                            record_stride=stride, jobs=args.jobs)
    write_ensemble_csv(out / "ensemble.csv", result, comments)
    if not args.no_plot:
        plots.render_ensemble(out / "ensemble.png", result)
    print(f"ensemble: {result.trials} trials, mean final fidelity "
          f"{result.final_fidelities.mean():.6f}, min "
          f"{result.final_fidelities.min():.6f}")
    print(f"wrote {out / 'ensemble.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args, overrides = _parse_args(argv)
        cfg_path = Path(args.config)
        try:
            text = cfg_path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {cfg_path}") from None
        config = parse_config(text, overrides)
        return _run(args, config, cfg_path.parent)
    except (ConfigError, ValidationError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicalityError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_PHYSICS
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
