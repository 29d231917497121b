"""Experiment orchestration: grid search, amplitude sweeps, retraining arms.

A sweep trains one clean network per architecture on a plan-fixed split,
then evaluates recall under each (mode, amplitude) grid point: random noise
with a fresh stream per run, smooth shape perturbations realized from seeds
keyed by (base seed, amplitude index, run), plus an optional retrained arm
that re-optimizes the weights against the identical realized activations.

Seed plumbing is hierarchical: (base_seed, purpose tag, indices) feeds a
SeedSequence, so no two consumers ever share a stream and any plan rerun
with the same base seed reproduces its result rows byte for byte. Wall
times are kept on the in-memory rows for profiling but never written to the
result CSVs, which must be rerun-identical.

Plans are TOML files; every emitted CSV embeds the plan checksum in a
leading comment line.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .activation import PerturbMode, PerturbationConfig
from .data import Dataset, Split, make_split
from .features import ScalingParams, fit_scaling
from .network import Architecture, Network, forward, init_network, smooth_nafs_for
from .synthetic import resolve_dataset
from .trainer import (
    TrainConfig,
    TrainingDivergence,
    pearson_r,
    retrain_with_realized_nafs,
    train_lm,
)

# Purpose tags for the seed hierarchy.
SPLIT_TAG = 1
INIT_TAG = 2
NOISE_TAG = 3
TABLE_TAG = 4

ARM_CLEAN = "clean"
ARM_PERTURBED = "perturbed"
ARM_RETRAINED = "retrained"


class PlanError(ValueError):
    """An experiment plan is malformed or internally inconsistent."""


def seed_entropy(base_seed: int, tag: int, *indices: int) -> list[int]:
    return [int(base_seed), int(tag), *[int(i) for i in indices]]


def derive_seed(base_seed: int, tag: int, *indices: int) -> int:
    """Collapse a seed-hierarchy path into one 64-bit stream seed."""
    ss = np.random.SeedSequence(seed_entropy(base_seed, tag, *indices))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class GridSpec:
    architectures: list[tuple[int, ...]]
    epochs: list[int]
    mu0: list[float]
    n_runs: int = 10


@dataclass
class ExperimentPlan:
    dataset: str
    architectures: list[tuple[int, ...]]
    amplitudes: list[float]
    modes: list[PerturbMode]
    n_runs: int
    base_seed: int
    retrain: bool = False
    warm_start: bool = True
    collect_scatter: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    sigma: float = 0.2
    domain_lo: float = -10.0
    domain_hi: float = 10.0
    step: float = 0.01
    waterlines: list[float] = field(default_factory=list)
    output_dir: str = "out"
    gridsearch: GridSpec | None = None

    def __post_init__(self):
        self.architectures = [tuple(int(h) for h in a) for a in self.architectures]
        if not self.architectures:
            raise PlanError("plan needs at least one architecture")
        if not self.amplitudes:
            raise PlanError("plan needs at least one amplitude")
        if sorted(self.amplitudes) != list(self.amplitudes):
            raise PlanError("amplitudes must be sorted ascending")
        if 0.0 not in self.amplitudes:
            raise PlanError("amplitudes must include 0 (the clean reference point)")
        if self.n_runs < 1:
            raise PlanError("n_runs must be >= 1")
        if not self.modes:
            raise PlanError("plan needs at least one perturbation mode")
        if self.base_seed < 0:
            raise PlanError("base_seed must be non-negative")

    def perturbation_for(self, amplitude: float, amp_index: int, run_id: int) -> PerturbationConfig:
        return PerturbationConfig(
            mode=PerturbMode.SMOOTH_SHAPE,
            amplitude=amplitude,
            seed=derive_seed(self.base_seed, TABLE_TAG, amp_index, run_id),
            sigma=self.sigma,
            domain_lo=self.domain_lo,
            domain_hi=self.domain_hi,
            step=self.step,
        )


def plan_to_dict(plan: ExperimentPlan) -> dict:
    d = {
        "dataset": plan.dataset,
        "architectures": [list(a) for a in plan.architectures],
        "amplitudes": plan.amplitudes,
        "modes": [m.value for m in plan.modes],
        "n_runs": plan.n_runs,
        "base_seed": plan.base_seed,
        "retrain": plan.retrain,
        "warm_start": plan.warm_start,
        "collect_scatter": plan.collect_scatter,
        "train": vars(plan.train).copy(),
        "sigma": plan.sigma,
        "domain_lo": plan.domain_lo,
        "domain_hi": plan.domain_hi,
        "step": plan.step,
        "waterlines": plan.waterlines,
    }
    if plan.gridsearch is not None:
        d["gridsearch"] = {
            "architectures": [list(a) for a in plan.gridsearch.architectures],
            "epochs": plan.gridsearch.epochs,
            "mu0": plan.gridsearch.mu0,
            "n_runs": plan.gridsearch.n_runs,
        }
    return d


def plan_checksum(plan: ExperimentPlan) -> str:
    blob = json.dumps(plan_to_dict(plan), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _parse_mode(name: str) -> PerturbMode:
    for mode in PerturbMode:
        if mode.value == name:
            return mode
    raise PlanError(f"unknown perturbation mode {name!r} "
                    f"(have: {[m.value for m in PerturbMode]})")


def load_plan(path, base_seed: int | None = None, default_seed: int = 0) -> ExperimentPlan:
    """Parse a TOML plan.

    Seed precedence: ``base_seed`` (the --seed flag) overrides the file's
    ``sweep.base_seed``; ``default_seed`` (the environment fallback) applies
    only when both are absent.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from None
    try:
        dataset = raw["dataset"]["path"]
        sweep = raw.get("sweep", {})
        pert = raw.get("perturbation", {})
        train_raw = raw.get("train", {})
        report = raw.get("report", {})
        output = raw.get("output", {})
        grid_raw = raw.get("gridsearch")
        train = TrainConfig(**train_raw)
        grid = None
        if grid_raw is not None:
            grid = GridSpec(
                architectures=[tuple(a) for a in grid_raw["architectures"]],
                epochs=[int(e) for e in grid_raw["epochs"]],
                mu0=[float(m) for m in grid_raw["mu0"]],
                n_runs=int(grid_raw.get("n_runs", 10)),
            )
        domain = pert.get("domain", [-10.0, 10.0])
        file_seed = sweep.get("base_seed")
        if base_seed is not None:
            seed = base_seed
        elif file_seed is not None:
            seed = int(file_seed)
        else:
            seed = default_seed
        return ExperimentPlan(
            dataset=dataset,
            architectures=[tuple(a) for a in sweep.get("architectures", [[10]])],
            amplitudes=[float(a) for a in sweep.get("amplitudes", [0.0])],
            modes=[_parse_mode(m) for m in sweep.get("modes", ["random-noise", "smooth-shape"])],
            n_runs=int(sweep.get("n_runs", 1)),
            base_seed=seed,
            retrain=bool(sweep.get("retrain", False)),
            warm_start=bool(sweep.get("warm_start", True)),
            collect_scatter=bool(sweep.get("collect_scatter", True)),
            train=train,
            sigma=float(pert.get("sigma", 0.2)),
            domain_lo=float(domain[0]),
            domain_hi=float(domain[1]),
            step=float(pert.get("step", 0.01)),
            waterlines=[float(w) for w in report.get("waterlines", [])],
            output_dir=str(output.get("dir", "out")),
            gridsearch=grid,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PlanError):
            raise
        raise PlanError(f"bad plan {path}: {exc}") from None


@dataclass
class PreparedData:
    """One dataset after splitting and train-split scaling."""

    dataset: Dataset
    split: Split
    scaling: ScalingParams
    train_X: np.ndarray
    val_X: np.ndarray
    test_X: np.ndarray
    train_y_scaled: np.ndarray
    val_y_scaled: np.ndarray
    train_y: np.ndarray
    val_y: np.ndarray
    test_y: np.ndarray


def prepare_data(ds: Dataset, split_seed: int) -> PreparedData:
    split = make_split(ds.n_samples, split_seed)
    scaling = fit_scaling(ds.X[split.train], ds.y[split.train])
    return PreparedData(
        dataset=ds,
        split=split,
        scaling=scaling,
        train_X=scaling.apply_features(ds.X[split.train]),
        val_X=scaling.apply_features(ds.X[split.validation]),
        test_X=scaling.apply_features(ds.X[split.test]),
        train_y_scaled=scaling.apply_target(ds.y[split.train]),
        val_y_scaled=scaling.apply_target(ds.y[split.validation]),
        train_y=ds.y[split.train].copy(),
        val_y=ds.y[split.validation].copy(),
        test_y=ds.y[split.test].copy(),
    )


@dataclass
class SweepRow:
    dataset: str
    architecture: str
    mode: str
    amplitude: float
    run_id: int
    arm: str
    train_rmse: float
    test_rmse: float
    train_r: float | None
    test_r: float | None
    wall_time: float = 0.0


@dataclass
class ScatterRow:
    architecture: str
    mode: str
    amplitude: float
    arm: str
    split: str
    reference: float
    predicted: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    scatter: list[ScatterRow]
    plan_checksum: str


def _predict(net: Network, prep: PreparedData, noise=None) -> tuple[np.ndarray, np.ndarray]:
    """(train, test) predictions in original target units; train pass draws first."""
    pred_tr = prep.scaling.invert_target(forward(net, prep.train_X, noise=noise))
    pred_te = prep.scaling.invert_target(forward(net, prep.test_X, noise=noise))
    return pred_tr, pred_te


def _rmse(pred: np.ndarray, y: np.ndarray) -> float:
    diff = pred - y
    return float(np.sqrt(np.mean(diff * diff)))


def _scatter_rows(arch_label, mode, amplitude, arm, prep, pred_tr, pred_te):
    rows = []
    for split_name, ref, pred in (("train", prep.train_y, pred_tr), ("test", prep.test_y, pred_te)):
        rows.extend(
            ScatterRow(arch_label, mode, amplitude, arm, split_name, float(r), float(p))
            for r, p in zip(ref, pred)
        )
    return rows


def _sweep_architecture(args) -> tuple[list[SweepRow], list[ScatterRow]]:
    plan, prep, ai = args
    ds_name = prep.dataset.name
    arch = Architecture(input_dim=prep.dataset.dim, hidden_layers=plan.architectures[ai])
    label = arch.label()

    t0 = time.perf_counter()
    net0 = init_network(arch, derive_seed(plan.base_seed, INIT_TAG, ai))
    net, _ = train_lm(
        net0, prep.train_X, prep.train_y_scaled, prep.val_X, prep.val_y_scaled, plan.train
    )
    clean_tr, clean_te = _predict(net, prep)
    clean_wall = time.perf_counter() - t0
    clean_metrics = (
        _rmse(clean_tr, prep.train_y),
        _rmse(clean_te, prep.test_y),
        pearson_r(clean_tr, prep.train_y),
        pearson_r(clean_te, prep.test_y),
    )

    rows: list[SweepRow] = []
    scatter: list[ScatterRow] = []
    if plan.collect_scatter:
        scatter.extend(
            _scatter_rows(label, PerturbMode.NONE.value, 0.0, ARM_CLEAN, prep, clean_tr, clean_te)
        )

    for mi, mode in enumerate(plan.modes):
        for ki, amp in enumerate(plan.amplitudes):
            for run in range(plan.n_runs):
                rows.append(
                    SweepRow(ds_name, label, mode.value, amp, run, ARM_CLEAN,
                             *clean_metrics, wall_time=clean_wall)
                )
                t0 = time.perf_counter()
                pconf = None
                if mode is PerturbMode.RANDOM_NOISE:
                    rng = np.random.default_rng(
                        seed_entropy(plan.base_seed, NOISE_TAG, ai, mi, ki, run)
                    )
                    pred_tr, pred_te = _predict(net, prep, noise=(amp, rng))
                else:
                    pconf = plan.perturbation_for(amp, ki, run)
                    pnet = net.with_nafs(smooth_nafs_for(arch, pconf))
                    pred_tr, pred_te = _predict(pnet, prep)
                rows.append(
                    SweepRow(
                        ds_name, label, mode.value, amp, run, ARM_PERTURBED,
                        _rmse(pred_tr, prep.train_y), _rmse(pred_te, prep.test_y),
                        pearson_r(pred_tr, prep.train_y), pearson_r(pred_te, prep.test_y),
                        wall_time=time.perf_counter() - t0,
                    )
                )
                if plan.collect_scatter and run == 0 and amp > 0.0:
                    scatter.extend(
                        _scatter_rows(label, mode.value, amp, ARM_PERTURBED, prep, pred_tr, pred_te)
                    )
                if plan.retrain and mode is PerturbMode.SMOOTH_SHAPE:
                    t0 = time.perf_counter()
                    rnet, _ = retrain_with_realized_nafs(
                        net, pconf,
                        prep.train_X, prep.train_y_scaled, prep.val_X, prep.val_y_scaled,
                        plan.train, warm_start=plan.warm_start,
                    )
                    pred_tr, pred_te = _predict(rnet, prep)
                    rows.append(
                        SweepRow(
                            ds_name, label, mode.value, amp, run, ARM_RETRAINED,
                            _rmse(pred_tr, prep.train_y), _rmse(pred_te, prep.test_y),
                            pearson_r(pred_tr, prep.train_y), pearson_r(pred_te, prep.test_y),
                            wall_time=time.perf_counter() - t0,
                        )
                    )
                    if plan.collect_scatter and run == 0 and amp > 0.0:
                        scatter.extend(
                            _scatter_rows(label, mode.value, amp, ARM_RETRAINED, prep, pred_tr, pred_te)
                        )
    return rows, scatter


def run_sweep(plan: ExperimentPlan, jobs: int = 1) -> SweepResult:
    """Execute a plan; rows come back in canonical order regardless of ``jobs``."""
    ds = resolve_dataset(plan.dataset)
    prep = prepare_data(ds, derive_seed(plan.base_seed, SPLIT_TAG))
    tasks = [(plan, prep, ai) for ai in range(len(plan.architectures))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_architecture, tasks))
    else:
        results = [_sweep_architecture(t) for t in tasks]
    rows: list[SweepRow] = []
    scatter: list[ScatterRow] = []
    for r, s in results:
        rows.extend(r)
        scatter.extend(s)
    return SweepResult(rows=rows, scatter=scatter, plan_checksum=plan_checksum(plan))


@dataclass
class GridScore:
    architecture: str
    epochs: int
    mu0: float
    mean_test_rmse: float
    std_test_rmse: float
    n_ok: int
    n_diverged: int
    disqualified: bool


@dataclass
class GridSearchResult:
    scores: list[GridScore]
    best_architecture: tuple[int, ...] | None
    best_epochs: int | None
    best_mu0: float | None


def _grid_task(args) -> float | None:
    ds, hidden, epochs, mu0, gi, run, base_seed, base_config = args
    split_prep = prepare_data(ds, base_seed + run)
    arch = Architecture(input_dim=ds.dim, hidden_layers=hidden)
    cfg = replace(base_config, max_epochs=epochs, mu0=mu0)
    net0 = init_network(arch, derive_seed(base_seed, INIT_TAG, gi, run))
    try:
        net, _ = train_lm(
            net0,
            split_prep.train_X, split_prep.train_y_scaled,
            split_prep.val_X, split_prep.val_y_scaled,
            cfg,
        )
        _, pred_te = _predict(net, split_prep)
    except (TrainingDivergence, FloatingPointError, np.linalg.LinAlgError):
        return None
    return _rmse(pred_te, split_prep.test_y)


def grid_search(
    ds: Dataset,
    architectures: list[tuple[int, ...]],
    epochs_grid: list[int],
    mu0_grid: list[float],
    n_runs: int,
    base_seed: int,
    base_config: TrainConfig,
    jobs: int = 1,
) -> GridSearchResult:
    """Average test RMSE over ``n_runs`` random splits (seeds base_seed + run).

    Diverged runs are recorded, not fatal; a grid point loses its candidacy
    when more than 20% of its runs diverge. Ties break toward fewer total
    neurons, then fewer layers.
    """
    points = [
        (tuple(a), int(e), float(m))
        for a in architectures
        for e in epochs_grid
        for m in mu0_grid
    ]
    if not points:
        raise PlanError("grid search needs at least one grid point")
    tasks = [
        (ds, hidden, epochs, mu0, gi, run, base_seed, base_config)
        for gi, (hidden, epochs, mu0) in enumerate(points)
        for run in range(n_runs)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_grid_task, tasks))
    else:
        outcomes = [_grid_task(t) for t in tasks]

    scores: list[GridScore] = []
    best_key = None
    best: tuple | None = None
    for gi, (hidden, epochs, mu0) in enumerate(points):
        vals = [v for v in outcomes[gi * n_runs : (gi + 1) * n_runs] if v is not None]
        n_diverged = n_runs - len(vals)
        disqualified = n_diverged > 0.2 * n_runs or not vals
        mean = float(np.mean(vals)) if vals else float("nan")
        std = float(np.std(vals)) if vals else float("nan")
        label = Architecture(input_dim=ds.dim, hidden_layers=hidden).label()
        scores.append(GridScore(label, epochs, mu0, mean, std, len(vals), n_diverged, disqualified))
        if not disqualified:
            key = (mean, sum(hidden), len(hidden), gi)
            if best_key is None or key < best_key:
                best_key = key
                best = (hidden, epochs, mu0)
    if best is None:
        return GridSearchResult(scores, None, None, None)
    return GridSearchResult(scores, best[0], best[1], best[2])


@dataclass
class ThresholdRow:
    architecture: str
    mode: str
    waterline: float
    max_tolerated_amplitude: float
    bracket_lo: float | None
    bracket_hi: float | None
    crossed: bool


def tolerance_thresholds(
    rows: list[SweepRow], waterlines: list[float], arm: str = ARM_PERTURBED
) -> list[ThresholdRow]:
    """Largest amplitude whose mean test RMSE stays under each waterline.

    Linear interpolation between the bracketing swept amplitudes; a curve
    that never crosses reports the top of the swept range with
    ``crossed=False`` (to be read as ">= max amplitude").
    """
    acc: dict[tuple[str, str], dict[float, list[float]]] = {}
    for row in rows:
        if row.arm != arm:
            continue
        acc.setdefault((row.architecture, row.mode), {}).setdefault(row.amplitude, []).append(
            row.test_rmse
        )
    out: list[ThresholdRow] = []
    for (arch, mode), per_amp in acc.items():
        amps = sorted(per_amp)
        means = [float(np.mean(per_amp[a])) for a in amps]
        for w in waterlines:
            cross = next((i for i, m in enumerate(means) if m > w), None)
            if cross is None:
                out.append(ThresholdRow(arch, mode, w, amps[-1], amps[-1], None, False))
            elif cross == 0:
                out.append(ThresholdRow(arch, mode, w, amps[0], None, amps[0], True))
            else:
                a0, a1 = amps[cross - 1], amps[cross]
                m0, m1 = means[cross - 1], means[cross]
                t = a0 + (w - m0) * (a1 - a0) / (m1 - m0)
                out.append(ThresholdRow(arch, mode, w, t, a0, a1, True))
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _open_with_checksum(path, checksum):
    fh = open(path, "w", newline="")
    fh.write(f"# plan_checksum={checksum}\n")
    return fh


LONG_HEADER = [
    "dataset", "architecture", "mode", "amplitude", "run_id", "arm",
    "train_rmse", "test_rmse", "train_r", "test_r",
]


def write_long_csv(rows: list[SweepRow], path, checksum: str) -> None:
    with _open_with_checksum(path, checksum) as fh:
        writer = csv.writer(fh)
        writer.writerow(LONG_HEADER)
        for r in rows:
            writer.writerow(
                [r.dataset, r.architecture, r.mode, _fmt(r.amplitude), r.run_id, r.arm,
                 _fmt(r.train_rmse), _fmt(r.test_rmse), _fmt(r.train_r), _fmt(r.test_r)]
            )


def read_long_csv(path) -> tuple[list[SweepRow], str | None]:
    checksum = None
    rows: list[SweepRow] = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("# plan_checksum="):
            checksum = first.strip().split("=", 1)[1]
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LONG_HEADER:
            raise PlanError(f"{path}: not a sweep long-form CSV")
        for row in reader:
            rows.append(
                SweepRow(
                    dataset=row[0], architecture=row[1], mode=row[2],
                    amplitude=float(row[3]), run_id=int(row[4]), arm=row[5],
                    train_rmse=float(row[6]), test_rmse=float(row[7]),
                    train_r=float(row[8]) if row[8] else None,
                    test_r=float(row[9]) if row[9] else None,
                )
            )
    return rows, checksum


AGG_HEADER = [
    "dataset", "architecture", "mode", "amplitude", "arm", "n_runs",
    "mean_train_rmse", "std_train_rmse", "mean_test_rmse", "std_test_rmse",
    "mean_train_r", "mean_test_r",
]


@dataclass
class AggRow:
    dataset: str
    architecture: str
    mode: str
    amplitude: float
    arm: str
    n_runs: int
    mean_train_rmse: float
    std_train_rmse: float
    mean_test_rmse: float
    std_test_rmse: float
    mean_train_r: float | None
    mean_test_r: float | None


def aggregate_rows(rows: list[SweepRow]) -> list[AggRow]:
    """Mean and population std over runs, grouped per grid point and arm."""
    order: list[tuple] = []
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        key = (r.dataset, r.architecture, r.mode, r.amplitude, r.arm)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for key in order:
        rs = groups[key]
        tr = [r.train_rmse for r in rs]
        te = [r.test_rmse for r in rs]
        tr_r = [r.train_r for r in rs]
        te_r = [r.test_r for r in rs]
        out.append(
            AggRow(
                *key,
                n_runs=len(rs),
                mean_train_rmse=float(np.mean(tr)),
                std_train_rmse=float(np.std(tr)),
                mean_test_rmse=float(np.mean(te)),
                std_test_rmse=float(np.std(te)),
                mean_train_r=float(np.mean(tr_r)) if all(v is not None for v in tr_r) else None,
                mean_test_r=float(np.mean(te_r)) if all(v is not None for v in te_r) else None,
            )
        )
    return out


def write_aggregated_csv(aggs: list[AggRow], path, checksum: str) -> None:
    with _open_with_checksum(path, checksum) as fh:
        writer = csv.writer(fh)
        writer.writerow(AGG_HEADER)
        for a in aggs:
            writer.writerow(
                [a.dataset, a.architecture, a.mode, _fmt(a.amplitude), a.arm, a.n_runs,
                 _fmt(a.mean_train_rmse), _fmt(a.std_train_rmse),
                 _fmt(a.mean_test_rmse), _fmt(a.std_test_rmse),
                 _fmt(a.mean_train_r), _fmt(a.mean_test_r)]
            )


def write_thresholds_csv(thresholds: list[ThresholdRow], path, checksum: str) -> None:
    with _open_with_checksum(path, checksum) as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["architecture", "mode", "waterline", "max_tolerated_amplitude",
             "bracket_lo", "bracket_hi", "crossed"]
        )
        for t in thresholds:
            writer.writerow(
                [t.architecture, t.mode, _fmt(t.waterline), _fmt(t.max_tolerated_amplitude),
                 _fmt(t.bracket_lo), _fmt(t.bracket_hi), int(t.crossed)]
            )


def _arch_file_tag(label: str) -> str:
    return label.strip("[]").replace(" ", "-")


def emit_report(result: SweepResult, outdir) -> dict[str, Path]:
    """Write the long-form, aggregated, and correlation-scatter CSVs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    long_path = outdir / "sweep_long.csv"
    write_long_csv(result.rows, long_path, result.plan_checksum)
    paths["long"] = long_path

    agg_path = outdir / "sweep_aggregated.csv"
    write_aggregated_csv(aggregate_rows(result.rows), agg_path, result.plan_checksum)
    paths["aggregated"] = agg_path

    by_arch: dict[str, list[ScatterRow]] = {}
    for s in result.scatter:
        by_arch.setdefault(s.architecture, []).append(s)
    for label, srows in by_arch.items():
        p = outdir / f"scatter_{_arch_file_tag(label)}.csv"
        with _open_with_checksum(p, result.plan_checksum) as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "amplitude", "arm", "split", "reference", "predicted"])
            for s in srows:
                writer.writerow(
                    [s.mode, _fmt(s.amplitude), s.arm, s.split,
                     _fmt(s.reference), _fmt(s.predicted)]
                )
        paths[f"scatter {label}"] = p
    return paths


def write_gridsearch_csv(result: GridSearchResult, path, checksum: str = "unknown") -> None:
    with _open_with_checksum(path, checksum) as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["architecture", "epochs", "mu0", "mean_test_rmse", "std_test_rmse",
             "n_ok", "n_diverged", "disqualified"]
        )
        for s in result.scores:
            writer.writerow(
                [s.architecture, s.epochs, _fmt(s.mu0), _fmt(s.mean_test_rmse),
                 _fmt(s.std_test_rmse), s.n_ok, s.n_diverged, int(s.disqualified)]
            )
