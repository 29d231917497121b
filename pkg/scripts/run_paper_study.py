#!/usr/bin/env python3
"""Architecture/amplitude study on a fetched, featurized corpus.

Reproduces the benchmark protocol on one dataset: grid-search the clean
hyperparameters over candidate architectures (averaging test RMSE over many
random splits), then sweep both perturbation modes over an amplitude grid
on one fixed split, with the retraining arm enabled for the smooth mode,
and emit tolerance thresholds against the chosen RMSE waterlines.

The corpus must already be featurized, e.g.:

    nafsim featurize --kind compas3 --input geoms.xyz --energies props.csv \
        --out data/compas3.csv

Defaults are laptop-scale (20 runs); pass --grid-runs 100 to average the
grid search the way the study text describes.
"""

import argparse
from pathlib import Path

from nafsim.activation import PerturbMode
from nafsim.data import load_dataset
from nafsim.experiments import (
    ExperimentPlan,
    emit_report,
    grid_search,
    run_sweep,
    tolerance_thresholds,
    write_gridsearch_csv,
    write_thresholds_csv,
)
from nafsim.trainer import TrainConfig

CANDIDATES = {
    "compas3": [(30,), (60,), (90,), (15, 15), (20, 20, 20), (10, 10, 10, 10)],
    "perovskites": [(7,), (12,), (20,), (30,), (10, 10)],
    "qm9": [(20,), (30,), (60,), (15, 15)],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--features", required=True, help="featurized CSV from 'nafsim featurize'")
    ap.add_argument("--family", choices=sorted(CANDIDATES), default="compas3",
                    help="candidate architecture family")
    ap.add_argument("--out", default="out/study")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--grid-runs", type=int, default=20,
                    help="splits averaged per grid point")
    ap.add_argument("--sweep-runs", type=int, default=20,
                    help="perturbation realizations per amplitude")
    ap.add_argument("--amplitudes", type=float, nargs="+",
                    default=[0.0, 0.01, 0.02, 0.03, 0.045, 0.06, 0.08, 0.1, 0.15])
    ap.add_argument("--waterlines", type=float, nargs="+", default=[0.1, 0.3])
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--skip-gridsearch", action="store_true",
                    help="sweep every candidate architecture instead")
    args = ap.parse_args()

    ds = load_dataset(args.features)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    base_train = TrainConfig(max_epochs=args.epochs)
    architectures = CANDIDATES[args.family]

    if not args.skip_gridsearch:
        gs = grid_search(
            ds, architectures, epochs_grid=[args.epochs], mu0_grid=[1e-3],
            n_runs=args.grid_runs, base_seed=args.seed, base_config=base_train,
            jobs=args.jobs,
        )
        write_gridsearch_csv(gs, outdir / "gridsearch.csv")
        if gs.best_architecture is None:
            raise SystemExit("every grid point diverged; nothing to sweep")
        print(f"grid search winner: {list(gs.best_architecture)} "
              f"(table: {outdir / 'gridsearch.csv'})")
        sweep_archs = sorted({gs.best_architecture, *architectures})
    else:
        sweep_archs = architectures

    plan = ExperimentPlan(
        dataset=args.features,
        architectures=list(sweep_archs),
        amplitudes=sorted(set(args.amplitudes) | {0.0}),
        modes=[PerturbMode.RANDOM_NOISE, PerturbMode.SMOOTH_SHAPE],
        n_runs=args.sweep_runs,
        base_seed=args.seed,
        retrain=True,
        train=base_train,
        waterlines=args.waterlines,
        output_dir=str(outdir),
    )
    result = run_sweep(plan, jobs=args.jobs)
    paths = emit_report(result, outdir)
    tpath = outdir / "thresholds.csv"
    write_thresholds_csv(
        tolerance_thresholds(result.rows, plan.waterlines), tpath, result.plan_checksum
    )
    paths["thresholds"] = tpath
    print(f"{len(result.rows)} result rows on {ds.name} ({ds.unit})")
    for key, path in paths.items():
        print(f"  {key}: {path}")


if __name__ == "__main__":
    main()
