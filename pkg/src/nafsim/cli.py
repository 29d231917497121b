"""Command-line surface for batch use.

Subcommands: featurize, train, sweep, retrain, gridsearch, verify-data,
report. Exit codes: 0 success, 2 bad configuration or flags, 3 data error,
4 numeric failure. The NAFSIM_SEED environment variable is the
lowest-precedence seed source; a plan file's seed overrides it and the
--seed flag overrides both.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activation import PerturbMode, PerturbationConfig, TableError
from .data import (
    DatasetError,
    XyzParseError,
    build_compas3,
    build_perovskites,
    build_qm9_zpve,
    read_target_table,
    save_dataset,
    Dataset,
)
from .features import GeometryInconsistent, ScalingParams, ecm
from .network import (
    Architecture,
    init_network,
    network_from_dict,
    network_to_dict,
    smooth_nafs_for,
)
from .experiments import (
    INIT_TAG,
    SPLIT_TAG,
    TABLE_TAG,
    PlanError,
    aggregate_rows,
    derive_seed,
    emit_report,
    grid_search,
    load_plan,
    plan_checksum,
    prepare_data,
    read_long_csv,
    run_sweep,
    tolerance_thresholds,
    write_aggregated_csv,
    write_gridsearch_csv,
    write_thresholds_csv,
    ARM_CLEAN,
)
from .synthetic import resolve_dataset
from .trainer import TrainConfig, TrainingDivergence, evaluate, retrain_with_realized_nafs, train_lm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


@dataclass
class CommandOutcome:
    exit_code: int
    summary: str
    artifacts: list[Path] = field(default_factory=list)


def env_seed() -> int:
    raw = os.environ.get("NAFSIM_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"NAFSIM_SEED must be an integer, got {raw!r}") from None


def resolve_seed(cli_seed: int | None) -> int:
    """--seed flag, then NAFSIM_SEED, then 0."""
    if cli_seed is not None:
        return cli_seed
    return env_seed()


def parse_architecture(text: str) -> tuple[int, ...]:
    parts = text.strip().strip("[]").replace(",", " ").split()
    if not parts:
        raise ConfigError(f"empty architecture {text!r}")
    try:
        sizes = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad architecture {text!r}; want e.g. '[30]' or '[15 15]'") from None
    if any(s < 1 for s in sizes):
        raise ConfigError(f"architecture sizes must be >= 1, got {text!r}")
    return sizes


_MODEL_FORMAT = "nafsim-model-v1"


def save_model_bundle(path, net, scaling, split_seed, ds, metrics) -> None:
    payload = {
        "format": _MODEL_FORMAT,
        "dataset": {"name": ds.name, "unit": ds.unit, "n_samples": ds.n_samples},
        "split_seed": split_seed,
        "scaling": scaling.to_dict(),
        "metrics": metrics,
        "network": network_to_dict(net),
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_model_bundle(path):
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from None
    if payload.get("format") != _MODEL_FORMAT:
        raise ConfigError(f"{path} is not a {_MODEL_FORMAT} file")
    net = network_from_dict(payload["network"])
    scaling = ScalingParams.from_dict(payload["scaling"])
    return payload, net, scaling


def _write_features_only_csv(path, ids, X) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f_{j + 1}" for j in range(X.shape[1])])
        for i, mol_id in enumerate(ids):
            writer.writerow([mol_id] + [repr(float(v)) for v in X[i]])


def cmd_featurize(args) -> CommandOutcome:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []
    drops: list[dict] = []

    if args.kind == "qm9":
        ds = build_qm9_zpve(args.input, n_atoms=args.n_atoms)
        meta = json.loads(ds.provenance)
        drops = meta["dropped"]
        artifacts.append(out)
        artifacts.append(save_dataset(ds, out))
        summary = (
            f"featurize qm9: kept {ds.n_samples} of {meta['n_matching']} "
            f"{args.n_atoms}-atom molecules ({len(drops)} drops), dim {ds.dim}"
        )
    elif args.kind == "compas3":
        if not args.energies:
            raise ConfigError("--kind compas3 requires --energies")
        ds = build_compas3(args.input, args.energies, pad_to=args.pad_to or 62)
        meta = json.loads(ds.provenance)
        drops = meta["dropped"]
        artifacts.append(out)
        artifacts.append(save_dataset(ds, out))
        summary = (
            f"featurize compas3: kept {ds.n_samples} of {meta['n_parsed']} molecules "
            f"({len(drops)} drops), dim {ds.dim}"
        )
    elif args.kind == "perovskites":
        ds_gap, ds_form = build_perovskites(args.input)
        gap_path = out.with_name(out.stem + "_bandgap" + out.suffix)
        form_path = out.with_name(out.stem + "_formation" + out.suffix)
        artifacts.append(gap_path)
        artifacts.append(save_dataset(ds_gap, gap_path))
        artifacts.append(form_path)
        artifacts.append(save_dataset(ds_form, form_path))
        summary = (
            f"featurize perovskites: {ds_gap.n_samples} rows, {ds_gap.dim} features, "
            f"targets band gap (eV) and formation energy (eV/atom)"
        )
    elif args.kind == "xyz":
        from .data import parse_xyz

        molecules = parse_xyz(args.input)
        if not molecules:
            raise DatasetError(f"{args.input}: no molecules found")
        pad_to = args.pad_to or max(m.n_atoms for m in molecules)
        if args.targets:
            targets = read_target_table(args.targets, value_column=args.target_column)
            if not args.unit:
                raise ConfigError("--targets requires --unit for the target values")
            rows, ys, ids = [], [], []
            for mol in molecules:
                if mol.id not in targets:
                    raise DatasetError(f"no target value for geometry id {mol.id!r}")
                try:
                    rows.append(ecm(mol, pad_to=pad_to))
                except GeometryInconsistent as exc:
                    drops.append({"id": mol.id, "reason": str(exc)})
                    continue
                ys.append(targets[mol.id])
                ids.append(mol.id)
            ds = Dataset(
                name=Path(args.input).stem, X=np.vstack(rows), y=np.asarray(ys),
                ids=ids, unit=args.unit,
                provenance=json.dumps({"source": str(args.input), "dropped": drops}),
            )
            artifacts.append(out)
            artifacts.append(save_dataset(ds, out))
            summary = f"featurize xyz: {ds.n_samples} molecules, dim {pad_to}, {len(drops)} drops"
        else:
            rows, ids = [], []
            for mol in molecules:
                try:
                    rows.append(ecm(mol, pad_to=pad_to))
                except GeometryInconsistent as exc:
                    drops.append({"id": mol.id, "reason": str(exc)})
                    continue
                ids.append(mol.id)
            if not rows:
                raise DatasetError(f"{args.input}: no molecules survived featurization")
            _write_features_only_csv(out, ids, np.vstack(rows))
            artifacts.append(out)
            summary = f"featurize xyz: {len(ids)} molecules, dim {pad_to}, {len(drops)} drops"
    else:
        raise ConfigError(f"unknown featurize kind {args.kind!r}")

    if args.drop_log:
        Path(args.drop_log).write_text(json.dumps(drops, indent=1))
        artifacts.append(Path(args.drop_log))
    return CommandOutcome(EXIT_OK, summary, artifacts)


def cmd_train(args) -> CommandOutcome:
    seed = resolve_seed(args.seed)
    ds = resolve_dataset(args.data)
    prep = prepare_data(ds, derive_seed(seed, SPLIT_TAG))
    arch = Architecture(input_dim=ds.dim, hidden_layers=parse_architecture(args.arch))
    cfg = TrainConfig(max_epochs=args.epochs, mu0=args.mu0, seed=seed)
    net0 = init_network(arch, derive_seed(seed, INIT_TAG, 0))
    net, report = train_lm(
        net0, prep.train_X, prep.train_y_scaled, prep.val_X, prep.val_y_scaled, cfg
    )
    rmse, r = evaluate(net, prep.test_X, prep.test_y, target_scaling=prep.scaling)
    artifacts = []
    if args.out:
        metrics = {"test_rmse": rmse, "test_r": r, "epochs_run": report.epochs_run}
        save_model_bundle(args.out, net, prep.scaling, prep.split.seed, ds, metrics)
        artifacts.append(Path(args.out))
    if args.report:
        report.save_csv(args.report)
        artifacts.append(Path(args.report))
    r_text = f"{r:.4f}" if r is not None else "undefined"
    summary = (
        f"train: {ds.name} {arch.label()} seed {seed}: test RMSE {rmse:.6g} {ds.unit}, "
        f"test R {r_text} ({report.epochs_run} epochs, {report.stop_reason.value})"
    )
    return CommandOutcome(EXIT_OK, summary, artifacts)


def cmd_sweep(args) -> CommandOutcome:
    plan = load_plan(args.plan, base_seed=args.seed, default_seed=env_seed())
    outdir = Path(args.out) if args.out else Path(plan.output_dir)
    result = run_sweep(plan, jobs=args.jobs)
    paths = emit_report(result, outdir)
    if plan.waterlines:
        thresholds = tolerance_thresholds(result.rows, plan.waterlines)
        tpath = outdir / "thresholds.csv"
        write_thresholds_csv(thresholds, tpath, result.plan_checksum)
        paths["thresholds"] = tpath
    clean_rows = [r for r in result.rows if r.arm == ARM_CLEAN]
    best = min(clean_rows, key=lambda r: r.test_rmse)
    r_text = f"{best.test_r:.4f}" if best.test_r is not None else "undefined"
    summary = (
        f"sweep: {len(result.rows)} result rows; best clean test RMSE {best.test_rmse:.6g} "
        f"({best.architecture}), R {r_text}"
    )
    return CommandOutcome(EXIT_OK, summary, list(paths.values()))


def cmd_retrain(args) -> CommandOutcome:
    payload, net, scaling = load_model_bundle(args.model)
    ds = resolve_dataset(args.data) if args.data else None
    if ds is None:
        raise ConfigError("--data is required (the bundle stores only provenance, not rows)")
    if ds.n_samples != payload["dataset"]["n_samples"]:
        raise DatasetError(
            f"dataset has {ds.n_samples} rows but the model was trained on "
            f"{payload['dataset']['n_samples']}; split cannot be reproduced"
        )
    prep = prepare_data(ds, payload["split_seed"])
    seed = resolve_seed(args.seed)
    naf_seed = args.naf_seed if args.naf_seed is not None else derive_seed(seed, TABLE_TAG, 0, 0)
    pconf = PerturbationConfig(
        mode=PerturbMode.SMOOTH_SHAPE,
        amplitude=args.amplitude,
        seed=naf_seed,
        sigma=args.sigma,
        domain_lo=args.domain_lo,
        domain_hi=args.domain_hi,
        step=args.step,
    )
    pnet = net.with_nafs(smooth_nafs_for(net.architecture, pconf))
    perturbed_rmse, perturbed_r = evaluate(pnet, prep.test_X, prep.test_y, target_scaling=scaling)
    cfg = TrainConfig(max_epochs=args.epochs, seed=seed)
    retrained, report = retrain_with_realized_nafs(
        net, pconf, prep.train_X, prep.train_y_scaled, prep.val_X, prep.val_y_scaled,
        cfg, warm_start=not args.cold_start,
    )
    rmse, r = evaluate(retrained, prep.test_X, prep.test_y, target_scaling=scaling)
    artifacts = []
    if args.out:
        metrics = {
            "test_rmse": rmse, "test_r": r,
            "perturbed_test_rmse": perturbed_rmse, "perturbed_test_r": perturbed_r,
            "amplitude": args.amplitude, "naf_seed": naf_seed,
            "warm_start": not args.cold_start,
        }
        save_model_bundle(args.out, retrained, scaling, payload["split_seed"], ds, metrics)
        artifacts.append(Path(args.out))
    summary = (
        f"retrain: amplitude {args.amplitude}, naf seed {naf_seed}: perturbed-recall test RMSE "
        f"{perturbed_rmse:.6g} -> retrained {rmse:.6g} {ds.unit} "
        f"({'warm' if not args.cold_start else 'cold'} start, {report.epochs_run} epochs)"
    )
    return CommandOutcome(EXIT_OK, summary, artifacts)


def cmd_gridsearch(args) -> CommandOutcome:
    plan = load_plan(args.plan, base_seed=args.seed, default_seed=env_seed())
    if plan.gridsearch is None:
        raise ConfigError(f"{args.plan}: plan has no [gridsearch] section")
    ds = resolve_dataset(plan.dataset)
    gs = plan.gridsearch
    result = grid_search(
        ds, gs.architectures, gs.epochs, gs.mu0, gs.n_runs, plan.base_seed, plan.train,
        jobs=args.jobs,
    )
    outdir = Path(args.out) if args.out else Path(plan.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    table_path = outdir / "gridsearch.csv"
    write_gridsearch_csv(result, table_path, plan_checksum(plan))
    if result.best_architecture is None:
        return CommandOutcome(
            EXIT_NUMERIC, "gridsearch: every grid point was disqualified", [table_path]
        )
    label = Architecture(input_dim=ds.dim, hidden_layers=result.best_architecture).label()
    best_score = min(
        (s for s in result.scores if not s.disqualified), key=lambda s: s.mean_test_rmse
    )
    summary = (
        f"gridsearch: winner {label}, epochs {result.best_epochs}, mu0 {result.best_mu0}: "
        f"mean test RMSE {best_score.mean_test_rmse:.6g} {ds.unit} over {gs.n_runs} runs"
    )
    return CommandOutcome(EXIT_OK, summary, [table_path])


def cmd_verify_data(args) -> CommandOutcome:
    from .data import verify_counts

    if args.kind == "qm9":
        ds = build_qm9_zpve(args.input)
        ok, messages = verify_counts("qm9", ds)
    elif args.kind == "compas3":
        if not args.energies:
            raise ConfigError("--kind compas3 requires --energies")
        ds = build_compas3(args.input, args.energies)
        ok, messages = verify_counts("compas3", ds)
    elif args.kind == "perovskites":
        pair = build_perovskites(args.input)
        ok, messages = verify_counts("perovskites", pair)
    else:
        raise ConfigError(f"unknown dataset kind {args.kind!r}")
    summary = f"verify-data {args.kind}: " + ("all counts match" if ok else "COUNT MISMATCH")
    print("\n".join(messages))
    return CommandOutcome(EXIT_OK if ok else EXIT_DATA, summary, [])


def cmd_report(args) -> CommandOutcome:
    rows, checksum = read_long_csv(args.long)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    agg_path = outdir / "sweep_aggregated.csv"
    write_aggregated_csv(aggregate_rows(rows), agg_path, checksum or "unknown")
    artifacts = [agg_path]
    if args.waterline:
        tpath = outdir / "thresholds.csv"
        write_thresholds_csv(
            tolerance_thresholds(rows, args.waterline), tpath, checksum or "unknown"
        )
        artifacts.append(tpath)
    summary = f"report: aggregated {len(rows)} rows from {args.long}"
    return CommandOutcome(EXIT_OK, summary, artifacts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nafsim",
        description="Feed-forward regression under analog activation perturbations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="build featurized CSVs from geometry/property sources")
    p.add_argument("--kind", required=True, choices=["xyz", "qm9", "compas3", "perovskites"])
    p.add_argument("--input", required=True, help="XYZ file, QM9 directory, or CSV table")
    p.add_argument("--energies", help="property CSV (compas3)")
    p.add_argument("--targets", help="target CSV for --kind xyz")
    p.add_argument("--target-column", help="target column name in --targets")
    p.add_argument("--unit", help="target unit label for --kind xyz with --targets")
    p.add_argument("--pad-to", type=int, help="descriptor length (default: largest molecule)")
    p.add_argument("--n-atoms", type=int, default=16, help="QM9 atom-count filter")
    p.add_argument("--drop-log", help="write dropped-molecule log JSON here")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_featurize)

    p = sub.add_parser("train", help="train one clean network")
    p.add_argument("--data", required=True, help="featurized CSV or synthetic:<name>")
    p.add_argument("--arch", required=True, help="hidden layers, e.g. '[30]' or '[15 15]'")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--mu0", type=float, default=1e-3)
    p.add_argument("--out", help="model bundle JSON path")
    p.add_argument("--report", help="per-epoch training report CSV path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep", help="run an amplitude sweep plan")
    p.add_argument("--plan", required=True, help="TOML plan file")
    p.add_argument("--out", help="output directory (default: plan's output.dir)")
    p.add_argument("--seed", type=int, help="override the plan's base seed")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("retrain", help="retrain a model against realized activation shapes")
    p.add_argument("--model", required=True, help="model bundle from 'train'")
    p.add_argument("--data", required=True, help="the dataset the model was trained on")
    p.add_argument("--amplitude", type=float, required=True)
    p.add_argument("--naf-seed", type=int, help="explicit perturbation seed")
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--domain-lo", type=float, default=-10.0)
    p.add_argument("--domain-hi", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--cold-start", action="store_true", help="re-initialize instead of warm start")
    p.add_argument("--out", help="retrained model bundle path")
    p.set_defaults(fn=cmd_retrain)

    p = sub.add_parser("gridsearch", help="grid-search architectures/epochs/mu0")
    p.add_argument("--plan", required=True, help="TOML plan with a [gridsearch] section")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_gridsearch)

    p = sub.add_parser("verify-data", help="check fetched datasets against expected counts")
    p.add_argument("--kind", required=True, choices=["qm9", "compas3", "perovskites"])
    p.add_argument("--input", required=True)
    p.add_argument("--energies")
    p.set_defaults(fn=cmd_verify_data)

    p = sub.add_parser("report", help="re-aggregate a long-form sweep CSV")
    p.add_argument("--long", required=True, help="sweep_long.csv path")
    p.add_argument("--waterline", type=float, action="append", default=[])
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        outcome = args.fn(args)
    except (ConfigError, PlanError) as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, XyzParseError, GeometryInconsistent, TableError, OSError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergence, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error (numeric): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(outcome.summary)
    for path in outcome.artifacts:
        print(f"wrote: {path}")
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
