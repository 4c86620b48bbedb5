"""Experiment orchestration: single studies, budget/seed sweeps, trial logs,
report tables and plot-data emission.

Trial logs are append-only CSV with a fixed header; every float field is
written with ``repr`` so a parsed log reproduces the run bit for bit (only
``duration_ms`` is wall-clock and excluded from reproducibility claims).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .drive import DriveInterface, PlantModel, SimulatedDrive, run_trial
from .metrics import NUM_OBJECTIVES, OBJECTIVE_NAMES, ObjectiveVector
from .optimizers import (
    DEFAULT_N_STARTUP,
    SAMPLER_IDS,
    SearchSpace,
    Study,
    TpeConfig,
    make_sampler,
)
from .pareto import DEFAULT_REFERENCE, NormalizationBounds, ParetoFront, hypervolume_trace
from .records import PHASE_STARTUP, ParameterPoint, TrialRecord
from .selection import (
    BALANCED,
    SelectionConstraints,
    SelectionWeights,
    select_controller,
)
from .signals import ExcitationProfile, load_profile, tuning_profile, validation_profile

logger = logging.getLogger(__name__)

SWEEP_BUDGETS = (15, 20, 30, 50, 100)
SWEEP_SEED_COUNT = 5
SWEEP_SAMPLERS = ("tpe", "gp", "random")

# Expert-tuned gains' metrics, shown in reports as the practical reference.
EXPERT_REFERENCE = ObjectiveVector(iae=0.00967, itae=10.62, os=0.02143, osc=0.08123)

LOG_COLUMNS = (
    "study_id", "sampler", "budget", "seed", "trial_index", "phase",
    "kp", "ki", "iae", "itae", "os", "osc", "stable", "duration_ms",
)


@dataclass(frozen=True)
class StudyConfig:
    """Everything one study needs; plant/space/tpe carry their own defaults."""

    sampler: str = "tpe"
    budget: int = 30
    seed: int | np.random.SeedSequence = 0
    n_startup: int = DEFAULT_N_STARTUP
    profile: str = "tuning"
    strategy: str = BALANCED
    out_dir: Path | None = None
    plant: PlantModel = field(default_factory=PlantModel)
    space: SearchSpace = field(default_factory=SearchSpace)
    tpe: TpeConfig = field(default_factory=TpeConfig)
    study_id: str | None = None
    seed_label: int | None = None  # what the log's seed column shows (sweeps
    #                                log the seed index, not derived entropy)

    def __post_init__(self):
        if self.budget < self.n_startup:
            raise ValueError(
                f"budget {self.budget} must be >= n_startup {self.n_startup}"
            )
        if self.sampler not in SAMPLER_IDS:
            raise ValueError(f"unknown sampler {self.sampler!r}")

    def resolve_profile(self) -> ExcitationProfile:
        if self.profile == "tuning":
            return tuning_profile(self.plant.sample_period)
        if self.profile == "validation":
            return validation_profile(self.plant.sample_period)
        return load_profile(self.profile)

    def resolved_study_id(self) -> str:
        if self.study_id:
            return self.study_id
        label = self.seed_label if self.seed_label is not None else self.seed
        return f"{self.sampler}-b{self.budget}-s{label}"


@dataclass
class StudyResult:
    study_id: str
    config: StudyConfig
    records: list[TrialRecord]
    front: ParetoFront
    selected: TrialRecord
    log_path: Path | None = None

    def hypervolume_trace(self, bounds: NormalizationBounds | None = None) -> np.ndarray:
        return hypervolume_trace(self.records, bounds, DEFAULT_REFERENCE)


def _format_row(study_id: str, config: StudyConfig, record: TrialRecord) -> list:
    label = config.seed_label if config.seed_label is not None else config.seed
    return [
        study_id, config.sampler, config.budget, label,
        record.trial_index, record.phase,
        record.point.kp, record.point.ki,
        repr(float(record.objectives.iae)), repr(float(record.objectives.itae)),
        repr(float(record.objectives.os)), repr(float(record.objectives.osc)),
        int(record.stable), repr(float(record.duration_ms)),
    ]


def run_study(config: StudyConfig, drive: DriveInterface | None = None) -> StudyResult:
    """Execute one full ask -> trial -> tell loop, logging each row as it lands.

    With no explicit drive, a simulated one is built whose noise stream is
    derived from the study seed, so the whole study is a function of its
    config.  A backend failure aborts the study but keeps the partial log.
    """
    seq = (
        config.seed
        if isinstance(config.seed, np.random.SeedSequence)
        else np.random.SeedSequence(config.seed)
    )
    sampler_seq, drive_seq = seq.spawn(2)
    study = Study(
        make_sampler(config.sampler, config.tpe),
        space=config.space,
        seed=sampler_seq,
        n_startup=config.n_startup,
    )
    if drive is None:
        drive = SimulatedDrive(config.plant, rng=drive_seq)
    profile = config.resolve_profile()
    study_id = config.resolved_study_id()

    log_path = None
    writer = None
    log_file = None
    if config.out_dir is not None:
        log_dir = Path(config.out_dir) / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"{study_id}.csv"
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_COLUMNS)
        log_file.flush()

    try:
        for t in range(config.budget):
            point = study.ask()
            record = run_trial(
                drive, point, profile, trial_index=t, phase=study.next_phase
            )
            study.tell_record(record)
            if writer is not None:
                writer.writerow(_format_row(study_id, config, record))
                log_file.flush()
    finally:
        if log_file is not None:
            log_file.close()

    selected = select_controller(study.front.members, strategy=config.strategy)
    return StudyResult(
        study_id=study_id,
        config=config,
        records=study.records,
        front=study.front,
        selected=selected,
        log_path=log_path,
    )


def sweep(
    out_dir: Path,
    master_seed: int = 0,
    budgets: tuple[int, ...] = SWEEP_BUDGETS,
    n_seeds: int = SWEEP_SEED_COUNT,
    samplers: tuple[str, ...] = SWEEP_SAMPLERS,
    plant: PlantModel | None = None,
    space: SearchSpace | None = None,
    tpe: TpeConfig | None = None,
    n_startup: int = DEFAULT_N_STARTUP,
) -> list[StudyResult]:
    """Run the full budget x seed x sampler grid with derived RNG streams.

    Each study's stream derives from (master_seed, sampler, budget,
    seed_index), so any study can be rerun in isolation.
    """
    results = []
    for sampler in samplers:
        for budget in budgets:
            for seed_index in range(n_seeds):
                seq = np.random.SeedSequence(
                    (master_seed, SAMPLER_IDS[sampler], budget, seed_index)
                )
                config = StudyConfig(
                    sampler=sampler,
                    budget=budget,
                    seed=seq,
                    seed_label=seed_index,
                    n_startup=n_startup,
                    out_dir=out_dir,
                    plant=plant or PlantModel(),
                    space=space or SearchSpace(),
                    tpe=tpe or TpeConfig(),
                )
                result = run_study(config)
                results.append(result)
                logger.info(
                    "%s: front=%d selected kp=%d ki=%d",
                    result.study_id, len(result.front),
                    result.selected.point.kp, result.selected.point.ki,
                )
    return results


# --------------------------------------------------------------------------
# Log parsing and replay

@dataclass(frozen=True)
class LoggedStudy:
    study_id: str
    sampler: str
    budget: int
    seed: int
    records: tuple[TrialRecord, ...]


def read_log(path: str | Path) -> LoggedStudy:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_COLUMNS:
            raise ValueError(f"{path}: unexpected log columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty trial log")
    records = tuple(
        TrialRecord(
            trial_index=int(row["trial_index"]),
            point=ParameterPoint(int(row["kp"]), int(row["ki"])),
            objectives=ObjectiveVector(
                float(row["iae"]), float(row["itae"]), float(row["os"]), float(row["osc"])
            ),
            phase=row["phase"],
            stable=bool(int(row["stable"])),
            duration_ms=float(row["duration_ms"]),
        )
        for row in rows
    )
    head = rows[0]
    return LoggedStudy(
        study_id=head["study_id"],
        sampler=head["sampler"],
        budget=int(head["budget"]),
        seed=int(head["seed"]),
        records=records,
    )


@dataclass
class ReplayResult:
    study_id: str
    records: tuple[TrialRecord, ...]
    front: ParetoFront
    selected: TrialRecord
    hv_trace: np.ndarray


def replay_log(
    path: str | Path,
    strategy: str = BALANCED,
    constraints: SelectionConstraints | None = None,
    weights: SelectionWeights | None = None,
    bounds: NormalizationBounds | None = None,
) -> ReplayResult:
    """Rebuild front, selection and hypervolume trace from a trial log alone."""
    logged = read_log(path)
    front = ParetoFront(logged.records)
    selected = select_controller(
        front.members, strategy=strategy, constraints=constraints, weights=weights
    )
    hv = hypervolume_trace(logged.records, bounds, DEFAULT_REFERENCE)
    return ReplayResult(
        study_id=logged.study_id,
        records=logged.records,
        front=front,
        selected=selected,
        hv_trace=hv,
    )


# --------------------------------------------------------------------------
# Aggregation (report table in the shape of the results table)

@dataclass
class CellStats:
    sampler: str
    budget: int
    seeds: tuple[int, ...]
    complete: bool
    metric_mean: np.ndarray      # (4,) over seeds of the selected solution
    metric_std: np.ndarray       # (4,) sample std (0 for a single seed)
    pareto_size_mean: float
    pareto_size_std: float
    best_flags: np.ndarray = field(default_factory=lambda: np.zeros(NUM_OBJECTIVES, bool))


@dataclass
class StudyReport:
    cells: list[CellStats]
    bounds: NormalizationBounds
    hv_traces: dict[str, np.ndarray]
    studies: list[LoggedStudy]
    n_startup: int


def aggregate(log_paths, expected_seeds: set[int] | None = None) -> StudyReport:
    """Aggregate sweep logs into per-(sampler, budget) statistics.

    Normalization bounds for hypervolume traces are computed globally across
    all runs and methods; the report's selected-solution statistics use the
    Balanced strategy with no constraint filtering.
    """
    studies = [read_log(p) for p in sorted(Path(p) for p in log_paths)]
    if not studies:
        raise ValueError("aggregate needs at least one trial log")
    all_vectors = np.vstack(
        [
            r.objectives.as_array()
            for s in studies
            for r in s.records
            if r.objectives.is_finite()
        ]
    )
    bounds = NormalizationBounds.from_vectors(all_vectors)
    hv_traces = {
        s.study_id: hypervolume_trace(s.records, bounds, DEFAULT_REFERENCE)
        for s in studies
    }

    by_cell: dict[tuple[str, int], list[LoggedStudy]] = {}
    for s in studies:
        by_cell.setdefault((s.sampler, s.budget), []).append(s)
    if expected_seeds is None:
        expected_seeds = {s.seed for s in studies}

    cells = []
    for (sampler, budget), group in sorted(by_cell.items()):
        group = sorted(group, key=lambda s: s.seed)
        selected_metrics = []
        front_sizes = []
        for s in group:
            front = ParetoFront(s.records)
            choice = select_controller(front.members, strategy=BALANCED)
            selected_metrics.append(choice.objectives.as_array())
            front_sizes.append(len(front))
        metrics = np.vstack(selected_metrics)
        sizes = np.array(front_sizes, dtype=float)
        cells.append(
            CellStats(
                sampler=sampler,
                budget=budget,
                seeds=tuple(s.seed for s in group),
                complete={s.seed for s in group} == expected_seeds,
                metric_mean=metrics.mean(axis=0),
                metric_std=metrics.std(axis=0, ddof=1) if len(group) > 1 else np.zeros(NUM_OBJECTIVES),
                pareto_size_mean=float(sizes.mean()),
                pareto_size_std=float(sizes.std(ddof=1)) if len(group) > 1 else 0.0,
            )
        )

    # lowest mean per budget and metric, among complete cells only
    for budget in {c.budget for c in cells}:
        complete = [c for c in cells if c.budget == budget and c.complete]
        if not complete:
            continue
        for m in range(NUM_OBJECTIVES):
            best = min(c.metric_mean[m] for c in complete)
            for c in complete:
                c.best_flags[m] = c.metric_mean[m] == best

    n_startup = sum(1 for r in studies[0].records if r.phase == PHASE_STARTUP)
    return StudyReport(
        cells=cells, bounds=bounds, hv_traces=hv_traces, studies=studies,
        n_startup=n_startup,
    )


def write_report_csv(report: StudyReport, path: str | Path) -> None:
    header = ["sampler", "budget", "n_seeds", "complete"]
    for name in OBJECTIVE_NAMES:
        header += [f"{name}_mean", f"{name}_std", f"{name}_best"]
    header += ["pareto_size_mean", "pareto_size_std"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in sorted(report.cells, key=lambda c: (c.budget, c.sampler)):
            row = [c.sampler, c.budget, len(c.seeds), int(c.complete)]
            for m in range(NUM_OBJECTIVES):
                row += [repr(float(c.metric_mean[m])), repr(float(c.metric_std[m])),
                        int(c.best_flags[m])]
            row += [repr(float(c.pareto_size_mean)), repr(float(c.pareto_size_std))]
            writer.writerow(row)
        writer.writerow(
            ["expert", "", "", ""]
            + [v for m in range(NUM_OBJECTIVES)
               for v in (repr(float(EXPERT_REFERENCE.as_tuple()[m])), "", "")]
            + ["", ""]
        )


def format_report(report: StudyReport) -> str:
    lines = [
        f"{'sampler':<8} {'budget':>6} "
        + " ".join(f"{n + ' (mean+-std)':>24}" for n in OBJECTIVE_NAMES)
        + f" {'pareto size':>16}"
    ]
    for c in sorted(report.cells, key=lambda c: (c.budget, c.sampler)):
        cols = []
        for m in range(NUM_OBJECTIVES):
            mark = "*" if c.best_flags[m] else " "
            cols.append(f"{c.metric_mean[m]:>12.5g} +-{c.metric_std[m]:<8.3g}{mark}")
        lines.append(
            f"{c.sampler:<8} {c.budget:>6} "
            + " ".join(cols)
            + f" {c.pareto_size_mean:>9.1f} +-{c.pareto_size_std:<5.1f}"
        )
    e = EXPERT_REFERENCE
    lines.append(
        f"{'expert':<8} {'-':>6} "
        + " ".join(f"{v:>12.5g} {'':<10}" for v in e.as_tuple())
        + f" {'-':>16}"
    )
    lines.append("* lowest mean per budget and metric (complete cells only)")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Figure data

def emit_figures(report: StudyReport, out_dir: str | Path) -> list[Path]:
    """Write plot-data CSVs: hypervolume curves per sampler, scatter per study.

    Hypervolume curves are mean/std across the seeds of each sampler's
    largest budget, with a marker column flagging the first model-phase trial.
    Scatter files carry one row per trial with Pareto membership and top-5
    per-metric flags.
    """
    out = Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written = []

    samplers = sorted({s.sampler for s in report.studies})
    for sampler in samplers:
        budgets = [s.budget for s in report.studies if s.sampler == sampler]
        top = max(budgets)
        traces = [
            report.hv_traces[s.study_id]
            for s in report.studies
            if s.sampler == sampler and s.budget == top
        ]
        stack = np.vstack(traces)
        path = out / f"hypervolume_{sampler}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial_index", "hv_mean", "hv_std", "startup_end"])
            std = stack.std(axis=0, ddof=1) if len(traces) > 1 else np.zeros(top)
            for t in range(top):
                writer.writerow(
                    [t, repr(float(stack[:, t].mean())), repr(float(std[t])),
                     int(t == report.n_startup)]
                )
        written.append(path)

    for s in report.studies:
        finite = [r for r in s.records if r.objectives.is_finite()]
        front = ParetoFront(finite)
        front_keys = {
            (m.point.kp, m.point.ki) + m.objectives.as_tuple() for m in front.members
        }
        vectors = np.vstack([r.objectives.as_array() for r in s.records])
        top5 = np.zeros((len(s.records), NUM_OBJECTIVES), dtype=int)
        for m in range(NUM_OBJECTIVES):
            order = np.argsort(vectors[:, m], kind="stable")[:5]
            top5[order, m] = 1
        path = out / f"scatter_{s.study_id}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["kp", "ki", "iae", "itae", "os", "osc", "is_pareto",
                 "top5_iae", "top5_itae", "top5_os", "top5_osc"]
            )
            for i, r in enumerate(s.records):
                key = (r.point.kp, r.point.ki) + r.objectives.as_tuple()
                writer.writerow(
                    [r.point.kp, r.point.ki]
                    + [repr(float(v)) for v in r.objectives.as_tuple()]
                    + [int(key in front_keys)]
                    + top5[i].tolist()
                )
        written.append(path)
    return written


# --------------------------------------------------------------------------
# Key-value configuration files

def load_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file with '#' comments; dotted keys namespace."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def apply_config(values: dict[str, str]) -> dict:
    """Turn flat config values into constructor arguments for a StudyConfig."""
    rng = values.get("rng", "pcg64")
    if rng != "pcg64":
        raise ValueError(f"unsupported rng {rng!r}; this build pins pcg64")
    plant_kwargs = {}
    for key in ("resistance", "inductance", "v_max", "sample_period", "noise_std",
                "gain_scale"):
        if f"plant.{key}" in values:
            plant_kwargs[key] = float(values[f"plant.{key}"])
    if "plant.latency_samples" in values:
        plant_kwargs["latency_samples"] = int(values["plant.latency_samples"])
    tpe_kwargs = {}
    for key, cast in (
        ("gamma_fraction", float), ("candidate_count", int),
        ("prior_weight", float), ("bandwidth_floor", float),
    ):
        if f"tpe.{key}" in values:
            tpe_kwargs[key] = cast(values[f"tpe.{key}"])
    space_kwargs = {}
    if "bounds.kp" in values or "bounds.ki" in values:
        kp = [int(v) for v in values.get("bounds.kp", "500 10000").split()]
        ki = [int(v) for v in values.get("bounds.ki", "500 10000").split()]
        space_kwargs = {"lower": (kp[0], ki[0]), "upper": (kp[1], ki[1])}
    out = {
        "plant": PlantModel(**plant_kwargs),
        "tpe": TpeConfig(**tpe_kwargs),
        "space": SearchSpace(**space_kwargs),
    }
    if "n_startup" in values:
        out["n_startup"] = int(values["n_startup"])
    for key in ("profile.tuning", "profile.validation"):
        if key in values:
            out[key] = values[key]
    return out
