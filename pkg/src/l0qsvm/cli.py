"""Command-line harness.

Subcommands: train, predict, cv, search, sweep-k, export.  Report paths
write delimited text plus matplotlib figures (suppress with --no-figures).
Exit codes: 0 success, 2 configuration error, 3 data error, 4 convergence
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import figures, harness
from .classifier import OvRModel, deserialize, predict_multi_batch, serialize
from .errors import (
    ConfigError,
    ConvergenceFailure,
    InvalidArgument,
    InvalidData,
    L0QsvmError,
    SearchFailure,
)
from .solvers import HINGE, QUADRATIC

_LOSS_NAMES = {"hinge": HINGE, "ls": QUADRATIC, "quadratic": QUADRATIC}


def _loss(value: str) -> str:
    if value not in _LOSS_NAMES:
        raise argparse.ArgumentTypeError(f"loss must be hinge or ls, got {value!r}")
    return _LOSS_NAMES[value]


def _add_common(p: argparse.ArgumentParser, with_data: bool = True) -> None:
    if with_data:
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--label", required=True, help="name of the label column")
    p.add_argument("--loss", type=_loss, default=HINGE,
                   help="hinge or ls (least squares); default hinge")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--no-figures", action="store_true",
                   help="write only delimited data, no PNG figures")


def _add_pd_knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rho0", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=10.0)
    p.add_argument("--eps-inner", type=float, default=1e-4)
    p.add_argument("--eps-outer", type=float, default=1e-4)
    p.add_argument("--max-outer", type=int, default=30)
    p.add_argument("--max-inner", type=int, default=50)
    p.add_argument("--dual-tol", type=float, default=1e-6)


def _add_search_knobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--c-min", type=float, default=1e-2)
    p.add_argument("--c-max", type=float, default=1e2)
    p.add_argument("--k-min", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l0qsvm",
        description="Sparse quadratic-surface SVMs with exact cardinality control")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one model at a fixed (C, k)")
    _add_common(p)
    _add_pd_knobs(p)
    p.add_argument("--c", type=float, required=True, dest="C",
                   help="loss penalty weight")
    p.add_argument("--k", type=int, required=True, help="sparsity budget")
    p.add_argument("--no-standardize", action="store_true",
                   help="train on raw features (keep units)")

    p = sub.add_parser("predict", help="apply a trained model to a CSV")
    p.add_argument("--model", required=True, help="model document from `train`")
    p.add_argument("--data", required=True)
    p.add_argument("--label", default=None,
                   help="label column (optional; enables accuracy)")
    p.add_argument("--out", default=".")

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_common(p)
    _add_pd_knobs(p)
    _add_search_knobs(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1,
                   help="concurrent folds (results independent of the count)")

    p = sub.add_parser("search", help="random (C, k) search on one split")
    _add_common(p)
    _add_pd_knobs(p)
    _add_search_knobs(p)

    p = sub.add_parser("sweep-k", help="accuracy as a function of k")
    _add_common(p)
    _add_pd_knobs(p)
    _add_search_knobs(p)

    p = sub.add_parser("export", help="plot data (and figures) from artifacts")
    p.add_argument("--kind", required=True,
                   choices=["boundary", "magnitudes", "trace", "sweep"])
    p.add_argument("--model", default=None, help="model document (boundary, magnitudes)")
    p.add_argument("--trace", default=None, help="trace TSV from `train` (trace)")
    p.add_argument("--sweep", default=None, help="sweep TSV from `sweep-k` (sweep)")
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--out", default=".")
    p.add_argument("--no-figures", action="store_true")
    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _experiment_config(args, folds: int | None = None,
                       workers: int = 1) -> harness.ExperimentConfig:
    k_range = None
    if args.k_min is not None or args.k_max is not None:
        if args.k_min is None or args.k_max is None:
            raise ConfigError("--k-min and --k-max must be given together")
        k_range = (args.k_min, args.k_max)
    return harness.ExperimentConfig(
        data_path=args.data, label_column=args.label, loss=args.loss,
        folds=folds if folds is not None else 5, trials=args.trials,
        c_range=(args.c_min, args.c_max), k_range=k_range, seed=args.seed,
        out_dir=str(_outdir(args)), workers=workers, rho0=args.rho0,
        beta=args.beta, eps_inner=args.eps_inner, eps_outer=args.eps_outer,
        max_outer=args.max_outer, max_inner=args.max_inner,
        dual_tol=args.dual_tol)


def _cmd_train(args) -> int:
    out = _outdir(args)
    dataset = harness.load_csv(args.data, args.label)
    pd_cfg = harness.PDConfig(
        C=args.C, k=args.k, loss=args.loss, rho0=args.rho0, beta=args.beta,
        eps_inner=args.eps_inner, eps_outer=args.eps_outer,
        max_outer=args.max_outer, max_inner=args.max_inner,
        dual_tol=args.dual_tol)
    ovr, details = harness.train_multiclass(
        dataset.X, dataset.labels, pd_cfg,
        apply_standardization=not args.no_standardize, with_details=True)

    (out / "model.json").write_text(serialize(ovr), encoding="utf-8")
    stationarity = {}
    for cls, trace, report in details:
        safe = str(cls).replace("/", "_")
        trace.write(out / f"trace_{safe}.tsv")
        if not args.no_figures:
            figures.render_trace(trace, out / f"trace_{safe}.png")
        stationarity[str(cls)] = {
            "is_lu_zhang": report.is_lu_zhang,
            "tol": report.tol,
            "support": report.support.tolist(),
            "residuals": report.residuals,
        }
    (out / "stationarity.json").write_text(
        json.dumps(stationarity, indent=1), encoding="utf-8")

    acc = harness.ovr_accuracy(ovr, dataset.X, dataset.labels)
    print(f"trained {len(ovr.classes)} one-vs-rest models "
          f"(loss={args.loss}, C={args.C:g}, k={args.k})")
    print(f"training accuracy: {acc:.4f}")
    print(f"wrote {out / 'model.json'}")
    return 0


def _cmd_predict(args) -> int:
    out = _outdir(args)
    model = deserialize(Path(args.model).read_text(encoding="utf-8"))
    if not isinstance(model, OvRModel):
        raise ConfigError("prediction needs a one-vs-rest document from `train`")
    if args.label:
        dataset = harness.load_csv(args.data, args.label)
        X, truth = dataset.X, dataset.labels
    else:
        dataset = None
        X, truth = _load_unlabeled(args.data), None
    preds = predict_multi_batch(model, X)
    path = out / "predictions.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "prediction"])
        for i, p in enumerate(preds):
            writer.writerow([i, p])
    print(f"wrote {path} ({len(preds)} rows)")
    if truth is not None:
        acc = float(np.mean(preds == truth))
        print(f"accuracy against {args.label!r}: {acc:.4f}")
    return 0


def _load_unlabeled(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InvalidData(f"{path} is empty")
        rows = list(reader)
    if not rows:
        raise InvalidData(f"{path} has a header but no data rows")
    try:
        return np.asarray([[float(c) for c in row] for row in rows])
    except ValueError as exc:
        raise InvalidData(f"non-numeric cell in {path}: {exc}") from exc


def _cmd_cv(args) -> int:
    out = _outdir(args)
    config = _experiment_config(args, folds=args.folds, workers=args.workers)
    report = harness.cross_validate(config)
    (out / "cv_summary.json").write_text(report.summary_document(), encoding="utf-8")
    (out / "cv_report.txt").write_text(report.text_report(), encoding="utf-8")
    harness.export_trials([(f.fold, f.trials) for f in report.folds],
                          out / "trials.tsv")
    with open(out / "timing.tsv", "w", encoding="utf-8") as fh:
        fh.write("fold\tseconds\n")
        for f in report.folds:
            fh.write(f"{f.fold}\t{f.seconds:.3f}\n")
    if not args.no_figures:
        figures.render_cv(report, out / "cv_accuracy.png")
    print(report.text_report())
    print(f"wrote {out / 'cv_summary.json'}")
    return 0


def _cmd_search(args) -> int:
    out = _outdir(args)
    config = _experiment_config(args)
    dataset = harness.load_csv(args.data, args.label)
    rng = np.random.default_rng([config.seed, 5])
    tr, val = harness.stratified_split(dataset.labels, rng)
    result = harness.random_search(
        (dataset.X[tr], dataset.labels[tr]),
        (dataset.X[val], dataset.labels[val]),
        config, np.random.default_rng([config.seed, 6]))
    harness.export_trials([(0, result.trials)], out / "search_trials.tsv")
    best = {"C": result.best.C, "k": result.best.k,
            "val_accuracy": result.best.val_accuracy}
    (out / "search_best.json").write_text(json.dumps(best, indent=1),
                                          encoding="utf-8")
    print(f"best configuration: C={result.best.C:.6g} k={result.best.k} "
          f"(validation accuracy {result.best.val_accuracy:.4f})")
    return 0


def _cmd_sweep_k(args) -> int:
    out = _outdir(args)
    config = _experiment_config(args)
    dataset = harness.load_csv(args.data, args.label)
    k_values = None
    if config.k_range is not None:
        k_values = list(range(config.k_range[0], config.k_range[1] + 1))
    rows = harness.sweep_k(dataset, config, k_values)
    harness.export_k_sweep(rows, out / "k_sweep.tsv")
    if not args.no_figures:
        figures.render_k_sweep(rows, out / "k_sweep.png")
    for r in rows:
        print(f"k={r.k:3d}  test_accuracy={r.test_accuracy:.4f}  (C={r.C:.4g})")
    print(f"wrote {out / 'k_sweep.tsv'}")
    return 0


def _cmd_export(args) -> int:
    out = _outdir(args)
    if args.kind in ("boundary", "magnitudes"):
        if not args.model:
            raise ConfigError(f"--kind {args.kind} needs --model")
        model = deserialize(Path(args.model).read_text(encoding="utf-8"))
        models = model.models if isinstance(model, OvRModel) else (model,)
        names = model.classes if isinstance(model, OvRModel) else ("model",)
        for name, m in zip(names, models):
            safe = str(name).replace("/", "_")
            data_path = out / f"{args.kind}_{safe}.tsv"
            if args.kind == "boundary":
                harness.export_boundary_grid(m, data_path, resolution=args.resolution)
                if not args.no_figures:
                    figures.render_boundary(m, out / f"boundary_{safe}.png")
            else:
                harness.export_magnitudes(m, data_path)
                if not args.no_figures:
                    figures.render_magnitudes(m, out / f"magnitudes_{safe}.png")
            print(f"wrote {data_path}")
        return 0
    if args.kind == "trace":
        if not args.trace:
            raise ConfigError("--kind trace needs --trace")
        if not args.no_figures:
            figures.render_trace_file(args.trace, out / "trace.png")
            print(f"wrote {out / 'trace.png'}")
        return 0
    if not args.sweep:
        raise ConfigError("--kind sweep needs --sweep")
    if not args.no_figures:
        figures.render_sweep_file(args.sweep, out / "k_sweep.png")
        print(f"wrote {out / 'k_sweep.png'}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "cv": _cmd_cv,
    "search": _cmd_search,
    "sweep-k": _cmd_sweep_k,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConvergenceFailure, SearchFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except InvalidData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except L0QsvmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
