"""Command-line entry points.

Verbs: tune (one study), sweep (full budget/seed/sampler grid), select
(re-rank an existing log with new weights/constraints), report, figures,
validate (re-run the chosen gains on the held-out validation profile).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .drive import PlantModel, SimulatedDrive, run_trial
from .metrics import OBJECTIVE_NAMES
from .optimizers import DEFAULT_N_STARTUP, SearchSpace, TpeConfig
from .records import PHASE_MODEL
from .runner import (
    SWEEP_BUDGETS,
    SWEEP_SAMPLERS,
    SWEEP_SEED_COUNT,
    StudyConfig,
    aggregate,
    apply_config,
    emit_figures,
    format_report,
    load_config,
    replay_log,
    run_study,
    sweep,
    write_report_csv,
)
from .selection import SelectionConstraints, SelectionWeights
from .signals import load_profile, validation_profile


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key-value config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sampler", choices=("tpe", "gp", "random"), default="tpe")
    parser.add_argument("--budget", type=int, default=30)
    parser.add_argument(
        "--strategy", choices=("balanced", "fast", "smooth"), default="balanced"
    )
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def _selection_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-overshoot", type=float, default=None)
    parser.add_argument("--max-oscillation", type=float, default=None)
    parser.add_argument(
        "--weights", type=float, nargs=4, metavar=("W_IAE", "W_ITAE", "W_OS", "W_OSC"),
        default=None, help="explicit weights overriding --strategy",
    )


def _settings(args) -> dict:
    if args.config:
        return apply_config(load_config(args.config))
    return {}


def _constraints(args) -> SelectionConstraints | None:
    if args.max_overshoot is None and args.max_oscillation is None:
        return None
    return SelectionConstraints(
        max_overshoot=args.max_overshoot, max_oscillation=args.max_oscillation
    )


def _weights(args) -> SelectionWeights | None:
    if args.weights is None:
        return None
    return SelectionWeights(*args.weights)


def _print_selection(tag: str, record) -> None:
    o = record.objectives
    print(
        f"{tag}: kp={record.point.kp} ki={record.point.ki} "
        f"iae={o.iae:.5g} itae={o.itae:.5g} os={o.os:.5g} osc={o.osc:.5g} "
        f"(trial {record.trial_index})"
    )


def cmd_tune(args) -> int:
    settings = _settings(args)
    config = StudyConfig(
        sampler=args.sampler,
        budget=args.budget,
        seed=args.seed,
        strategy=args.strategy,
        out_dir=args.out,
        n_startup=settings.get("n_startup", DEFAULT_N_STARTUP),
        plant=settings.get("plant", PlantModel()),
        space=settings.get("space", SearchSpace()),
        tpe=settings.get("tpe", TpeConfig()),
        profile=settings.get("profile.tuning", "tuning"),
    )
    result = run_study(config)
    print(f"study {result.study_id}: {len(result.records)} trials, "
          f"front size {len(result.front)}  log: {result.log_path}")
    _print_selection(f"selected ({args.strategy})", result.selected)
    _append_selection(args.out, result.study_id, args.strategy, result.selected)
    return 0


def _append_selection(out_dir: Path, study_id: str, strategy: str, record) -> None:
    path = Path(out_dir) / "selections.csv"
    fresh = not path.exists()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        if fresh:
            fh.write("study_id,strategy,kp,ki," + ",".join(OBJECTIVE_NAMES) + "\n")
        o = record.objectives
        fh.write(
            f"{study_id},{strategy},{record.point.kp},{record.point.ki},"
            f"{o.iae!r},{o.itae!r},{o.os!r},{o.osc!r}\n"
        )


def cmd_sweep(args) -> int:
    settings = _settings(args)
    t0 = time.perf_counter()
    results = sweep(
        out_dir=args.out,
        master_seed=args.seed,
        budgets=tuple(args.budgets),
        n_seeds=args.n_seeds,
        samplers=tuple(args.samplers),
        plant=settings.get("plant"),
        space=settings.get("space"),
        tpe=settings.get("tpe"),
        n_startup=settings.get("n_startup", DEFAULT_N_STARTUP),
    )
    print(f"{len(results)} studies in {time.perf_counter() - t0:.1f} s -> {args.out}/logs")
    return 0


def cmd_select(args) -> int:
    replay = replay_log(
        args.log,
        strategy=args.strategy,
        constraints=_constraints(args),
        weights=_weights(args),
    )
    print(f"study {replay.study_id}: front size {len(replay.front)}")
    _print_selection(f"selected ({args.strategy})", replay.selected)
    return 0


def cmd_report(args) -> int:
    logs = sorted((args.out / "logs").glob("*.csv"))
    if not logs:
        print(f"no logs under {args.out}/logs", file=sys.stderr)
        return 1
    report = aggregate(logs)
    out_csv = args.out / "report.csv"
    write_report_csv(report, out_csv)
    print(format_report(report))
    print(f"report written to {out_csv}")
    return 0


def cmd_figures(args) -> int:
    logs = sorted((args.out / "logs").glob("*.csv"))
    if not logs:
        print(f"no logs under {args.out}/logs", file=sys.stderr)
        return 1
    report = aggregate(logs)
    written = emit_figures(report, args.out)
    print(f"{len(written)} figure-data files under {args.out}/figures")
    return 0


def cmd_validate(args) -> int:
    settings = _settings(args)
    replay = replay_log(
        args.log,
        strategy=args.strategy,
        constraints=_constraints(args),
        weights=_weights(args),
    )
    _print_selection(f"selected ({args.strategy})", replay.selected)
    plant = settings.get("plant", PlantModel())
    if "profile.validation" in settings:
        profile = load_profile(settings["profile.validation"])
    else:
        profile = validation_profile(plant.sample_period)
    drive = SimulatedDrive(plant, rng=np.random.SeedSequence(args.seed))
    record = run_trial(drive, replay.selected.point, profile, phase=PHASE_MODEL)
    o = record.objectives
    print(
        f"validation run: stable={record.stable} "
        f"iae={o.iae:.5g} itae={o.itae:.5g} os={o.os:.5g} osc={o.osc:.5g}"
    )
    return 0 if record.stable else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="drivetune",
        description="Multi-objective auto-tuning of drive current-loop PI gains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="run one tuning study on the simulated drive")
    _common_flags(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("sweep", help="run the full budget x seed x sampler grid")
    _common_flags(p)
    p.add_argument("--budgets", type=int, nargs="+", default=list(SWEEP_BUDGETS))
    p.add_argument("--n-seeds", type=int, default=SWEEP_SEED_COUNT)
    p.add_argument("--samplers", nargs="+", default=list(SWEEP_SAMPLERS),
                   choices=("tpe", "gp", "random"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("select", help="re-run controller selection on an existing log")
    _common_flags(p)
    _selection_flags(p)
    p.add_argument("--log", type=Path, required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("report", help="aggregate sweep logs into the results table")
    _common_flags(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("figures", help="emit plot-data CSVs from sweep logs")
    _common_flags(p)
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("validate", help="re-run the selected gains on the validation profile")
    _common_flags(p)
    _selection_flags(p)
    p.add_argument("--log", type=Path, required=True)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
