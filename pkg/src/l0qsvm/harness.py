"""Experiment harness: CSV ingestion, stratified cross-validation, random
hyperparameter search, and delimited plot-data export.

Protocol: each of `folds` outer folds serves once as the test set; the
remaining folds are split 75/25 (stratified) into a training part and a
validation part; `trials` random (C, k) draws are scored on the validation
part; the best configuration is retrained on train+validation and scored on
the held-out fold.

All randomness flows from per-(seed, fold) generator streams, so reports are
byte-identical across runs and under concurrent fold execution.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifier import OvRModel, QuadraticSurfaceModel, predict_batch, predict_multi_batch
from .errors import (
    ConfigError,
    ConvergenceFailure,
    DimensionError,
    InvalidArgument,
    InvalidData,
    ParseError,
    SearchFailure,
    StratificationError,
)
from .pd_driver import PDConfig, penalty_decompose
from .quadfeat import build_feature_cache
from .solvers import HINGE, LOSSES


@dataclass(frozen=True)
class Dataset:
    """Raw CSV contents: features, string class labels, column names."""

    X: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    label_column: str

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def classes(self) -> tuple:
        return tuple(sorted(set(self.labels.tolist())))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one cross-validation or search run needs."""

    data_path: str
    label_column: str
    loss: str = HINGE
    folds: int = 5
    trials: int = 100
    c_range: tuple[float, float] = (1e-2, 1e2)
    k_range: tuple[int, int] | None = None  # None: [1, 2n] clamped to d
    seed: int = 0
    out_dir: str | None = None
    workers: int = 1
    rho0: float = 1.0
    beta: float = 10.0
    eps_inner: float = 1e-4
    eps_outer: float = 1e-4
    max_outer: int = 30
    max_inner: int = 50
    dual_tol: float = 1e-6

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        lo, hi = self.c_range
        if not (0 < lo <= hi):
            raise ConfigError(f"C range must be positive and ordered, got {self.c_range}")
        if self.k_range is not None:
            klo, khi = self.k_range
            if not (1 <= klo <= khi):
                raise ConfigError(f"k range must satisfy 1 <= lo <= hi, got {self.k_range}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    def pd_config(self, C: float, k: int) -> PDConfig:
        return PDConfig(C=C, k=k, loss=self.loss, rho0=self.rho0, beta=self.beta,
                        eps_inner=self.eps_inner, eps_outer=self.eps_outer,
                        max_outer=self.max_outer, max_inner=self.max_inner,
                        dual_tol=self.dual_tol)


# ---------------------------------------------------------------------------
# data loading and preprocessing


def load_csv(path: str, label_column: str) -> Dataset:
    """Read a headered CSV into features + raw class labels, in file order."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidData(f"{path} is empty") from None
            rows = list(reader)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    header = [h.strip() for h in header]
    if label_column not in header:
        raise ConfigError(
            f"label column {label_column!r} not in header {header} of {path}")
    if not rows:
        raise InvalidData(f"{path} has a header but no data rows")
    label_idx = header.index(label_column)
    feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)
    X = np.empty((len(rows), len(feature_names)))
    labels = np.empty(len(rows), dtype=object)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"row {i + 2} has {len(row)} cells, expected {len(header)}",
                             row=i + 2)
        labels[i] = row[label_idx].strip()
        j = 0
        for col, cell in zip(header, row):
            if col == label_column:
                continue
            try:
                X[i, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"non-numeric cell {cell!r} at row {i + 2}, column {col!r}",
                    row=i + 2, column=col) from None
            j += 1
    if not np.all(np.isfinite(X)):
        raise InvalidData(f"{path} contains NaN/Inf feature values")
    return Dataset(X=X, labels=labels, feature_names=feature_names,
                   label_column=label_column)


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature z-scoring fit on (and applied to) the given split.

    Returns (transformed, mean, scale).  Zero-variance features pass through
    with scale 1 and a warning.  Apply the same (mean, scale) to any
    validation/test split; never refit there.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise InvalidArgument("standardization needs at least 2 samples")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    degenerate = scale == 0.0
    if degenerate.any():
        warnings.warn(f"features {np.flatnonzero(degenerate).tolist()} have zero "
                      f"variance; leaving them unscaled", stacklevel=2)
        scale = np.where(degenerate, 1.0, scale)
    return (X - mean) / scale, mean, scale


def stratified_folds(labels: np.ndarray, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Deal each class round-robin into `folds` test-index groups."""
    labels = np.asarray(labels, dtype=object)
    assignments: list[list[int]] = [[] for _ in range(folds)]
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if idx.size < folds:
            raise StratificationError(
                f"class {cls!r} has {idx.size} members, fewer than {folds} folds")
        idx = idx[rng.permutation(idx.size)]
        for pos, i in enumerate(idx):
            assignments[pos % folds].append(int(i))
    return [np.sort(np.asarray(a, dtype=int)) for a in assignments]


def stratified_split(labels: np.ndarray, rng: np.random.Generator,
                     val_fraction: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """One stratified train/validation split (default 75/25)."""
    labels = np.asarray(labels, dtype=object)
    train: list[int] = []
    val: list[int] = []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise StratificationError(f"class {cls!r} has {idx.size} members; "
                                      f"cannot split off a validation part")
        idx = idx[rng.permutation(idx.size)]
        n_val = max(1, int(round(idx.size * val_fraction)))
        n_val = min(n_val, idx.size - 1)
        val.extend(int(i) for i in idx[:n_val])
        train.extend(int(i) for i in idx[n_val:])
    return np.sort(np.asarray(train, dtype=int)), np.sort(np.asarray(val, dtype=int))


# ---------------------------------------------------------------------------
# training


def train_multiclass(X_raw: np.ndarray, labels: np.ndarray, pd_cfg: PDConfig,
                     apply_standardization: bool = True, with_details: bool = False):
    """Fit one-vs-rest quadratic-surface models, one per class.

    A single (C, k) pair is shared across the per-class binary problems, and
    all of them share one feature cache (the curvature matrix is label-free).
    With `with_details` returns (model, [(class, trace, report), ...]).
    """
    classes = tuple(sorted(set(np.asarray(labels, dtype=object).tolist())))
    if len(classes) < 2:
        raise InvalidData(f"need at least 2 classes, got {classes}")
    if apply_standardization:
        Xs, mean, scale = standardize(X_raw)
    else:
        Xs = np.asarray(X_raw, dtype=float)
        mean = np.zeros(Xs.shape[1])
        scale = np.ones(Xs.shape[1])
    base = build_feature_cache(Xs, np.ones(Xs.shape[0]))
    models = []
    details = []
    for cls in classes:
        y = np.where(np.asarray(labels, dtype=object) == cls, 1.0, -1.0)
        cache = base.with_labels(y)
        model, trace, report = penalty_decompose(cache, pd_cfg, mean=mean, scale=scale)
        models.append(model)
        details.append((cls, trace, report))
    ovr = OvRModel(classes=classes, models=tuple(models))
    return (ovr, details) if with_details else ovr


def train_binary(X_raw: np.ndarray, y: np.ndarray, pd_cfg: PDConfig,
                 apply_standardization: bool = True):
    """Fit a single +-1 model; returns (model, trace, stationarity report)."""
    if apply_standardization:
        Xs, mean, scale = standardize(X_raw)
    else:
        Xs = np.asarray(X_raw, dtype=float)
        mean = np.zeros(Xs.shape[1])
        scale = np.ones(Xs.shape[1])
    cache = build_feature_cache(Xs, y)
    return penalty_decompose(cache, pd_cfg, mean=mean, scale=scale)


def ovr_accuracy(ovr: OvRModel, X: np.ndarray, labels: np.ndarray) -> float:
    preds = predict_multi_batch(ovr, X)
    return float(np.mean(preds == np.asarray(labels, dtype=object)))


# ---------------------------------------------------------------------------
# random hyperparameter search


@dataclass(frozen=True)
class Trial:
    index: int
    C: float
    k: int
    val_accuracy: float | None
    error: str | None = None


@dataclass(frozen=True)
class SearchResult:
    best: Trial
    trials: tuple[Trial, ...]


def _resolve_k_range(config: ExperimentConfig, n: int) -> tuple[int, int]:
    d = n * (n + 1) // 2 + n
    if config.k_range is None:
        lo, hi = 1, min(2 * n, d)
    else:
        lo, hi = config.k_range
        if hi > d:
            raise ConfigError(f"k range {config.k_range} exceeds the parameter "
                              f"dimension d={d}")
    return lo, hi


def draw_trial_params(config: ExperimentConfig, n: int, rng: np.random.Generator,
                      index: int) -> tuple[float, int]:
    lo, hi = config.c_range
    C = float(10.0 ** rng.uniform(np.log10(lo), np.log10(hi)))
    klo, khi = _resolve_k_range(config, n)
    k = int(rng.integers(klo, khi + 1))
    return C, k


def _better(a: Trial, b: Trial | None) -> bool:
    """Higher accuracy wins; ties prefer smaller k, then smaller C."""
    if b is None:
        return True
    return (a.val_accuracy, -a.k, -a.C) > (b.val_accuracy, -b.k, -b.C)


def random_search(train: tuple[np.ndarray, np.ndarray], val: tuple[np.ndarray, np.ndarray],
                  config: ExperimentConfig, rng: np.random.Generator) -> SearchResult:
    """Score `config.trials` random (C, k) draws on the validation split.

    C is log-uniform on the configured range, k uniform on [1, min(2n, d)].
    Convergence failures are recorded and skipped, never fatal; if every
    trial fails the whole search fails.
    """
    X_tr, lab_tr = train
    X_val, lab_val = val
    trials: list[Trial] = []
    best: Trial | None = None
    for t in range(config.trials):
        C, k = draw_trial_params(config, X_tr.shape[1], rng, t)
        try:
            ovr = train_multiclass(X_tr, lab_tr, config.pd_config(C, k))
            acc = ovr_accuracy(ovr, X_val, lab_val)
            trial = Trial(index=t, C=C, k=k, val_accuracy=acc)
        except ConvergenceFailure as exc:
            trial = Trial(index=t, C=C, k=k, val_accuracy=None, error=str(exc))
        trials.append(trial)
        if trial.error is None and _better(trial, best):
            best = trial
    if best is None:
        raise SearchFailure("every hyperparameter trial failed", log=trials)
    return SearchResult(best=best, trials=tuple(trials))


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class FoldResult:
    fold: int
    test_accuracy: float
    best_C: float
    best_k: int
    val_accuracy: float
    trials: tuple[Trial, ...]
    seconds: float


@dataclass
class CVReport:
    config: ExperimentConfig
    classes: tuple
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.test_accuracy for f in self.folds])

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std_accuracy(self) -> float:
        # sample standard deviation across folds
        return float(self.accuracies.std(ddof=1)) if len(self.folds) > 1 else 0.0

    def summary_document(self) -> str:
        """Deterministic machine-readable summary (timing excluded)."""
        doc = {
            "dataset": self.config.data_path,
            "label_column": self.config.label_column,
            "loss": self.config.loss,
            "folds": self.config.folds,
            "trials": self.config.trials,
            "c_range": list(self.config.c_range),
            "k_range": list(self.config.k_range) if self.config.k_range else None,
            "seed": self.config.seed,
            "classes": list(self.classes),
            "per_fold": [
                {
                    "fold": f.fold,
                    "test_accuracy": f.test_accuracy,
                    "best_C": f.best_C,
                    "best_k": f.best_k,
                    "val_accuracy": f.val_accuracy,
                }
                for f in self.folds
            ],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
        }
        return json.dumps(doc, indent=1)

    def text_report(self) -> str:
        lines = [
            f"dataset: {self.config.data_path} (label {self.config.label_column!r})",
            f"loss: {self.config.loss}   folds: {self.config.folds}   "
            f"trials/fold: {self.config.trials}   seed: {self.config.seed}",
            "",
            "fold  test_acc  best_C      best_k  val_acc   seconds",
        ]
        for f in self.folds:
            lines.append(f"{f.fold:4d}  {f.test_accuracy:8.4f}  {f.best_C:<10.4g}"
                         f"  {f.best_k:6d}  {f.val_accuracy:7.4f}  {f.seconds:8.2f}")
        lines.append("")
        lines.append(f"mean accuracy: {self.mean_accuracy:.4f} +- {self.std_accuracy:.4f}")
        return "\n".join(lines) + "\n"


def _fold_rngs(seed: int, fold: int) -> tuple[np.random.Generator, np.random.Generator]:
    split_rng = np.random.default_rng([seed, 1, fold])
    search_rng = np.random.default_rng([seed, 2, fold])
    return split_rng, search_rng


def run_fold(dataset: Dataset, test_idx: np.ndarray, fold: int,
             config: ExperimentConfig) -> FoldResult:
    """Search on the fold's inner split, retrain, score the held-out fold."""
    started = time.perf_counter()
    rest = np.setdiff1d(np.arange(dataset.m), test_idx)
    split_rng, search_rng = _fold_rngs(config.seed, fold)
    tr, val = stratified_split(dataset.labels[rest], split_rng)
    tr_idx, val_idx = rest[tr], rest[val]

    result = random_search(
        (dataset.X[tr_idx], dataset.labels[tr_idx]),
        (dataset.X[val_idx], dataset.labels[val_idx]),
        config, search_rng)
    best = result.best

    ovr = train_multiclass(dataset.X[rest], dataset.labels[rest],
                           config.pd_config(best.C, best.k))
    test_acc = ovr_accuracy(ovr, dataset.X[test_idx], dataset.labels[test_idx])
    return FoldResult(fold=fold, test_accuracy=test_acc, best_C=best.C,
                      best_k=best.k, val_accuracy=best.val_accuracy,
                      trials=result.trials, seconds=time.perf_counter() - started)


def cross_validate(config: ExperimentConfig, dataset: Dataset | None = None) -> CVReport:
    """Stratified k-fold cross-validation with per-fold random search."""
    if dataset is None:
        dataset = load_csv(config.data_path, config.label_column)
    _resolve_k_range(config, dataset.n)  # fail fast on an impossible range
    folds = stratified_folds(dataset.labels, config.folds,
                             np.random.default_rng([config.seed, 0]))
    report = CVReport(config=config, classes=dataset.classes())
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(run_fold, dataset, test_idx, f, config)
                       for f, test_idx in enumerate(folds)]
            results = [fut.result() for fut in futures]
    else:
        results = [run_fold(dataset, test_idx, f, config)
                   for f, test_idx in enumerate(folds)]
    report.folds = sorted(results, key=lambda r: r.fold)
    return report


# ---------------------------------------------------------------------------
# k sweep


@dataclass(frozen=True)
class SweepRow:
    k: int
    C: float
    val_accuracy: float
    test_accuracy: float


def sweep_k(dataset: Dataset, config: ExperimentConfig,
            k_values: list[int] | None = None) -> list[SweepRow]:
    """Accuracy as a function of the sparsity budget k.

    One stratified 75/25 train/test split; per k, `config.trials` random C
    draws are scored on a validation sub-split of the training part, the
    winner is retrained on the whole training part and scored on the test
    part.
    """
    if k_values is None:
        klo, khi = _resolve_k_range(config, dataset.n)
        k_values = list(range(klo, khi + 1))
    rng = np.random.default_rng([config.seed, 3])
    tr, te = stratified_split(dataset.labels, rng)
    rows = []
    for k in k_values:
        sub_rng = np.random.default_rng([config.seed, 4, k])
        tr2, val2 = stratified_split(dataset.labels[tr], sub_rng)
        kcfg = ExperimentConfig(
            data_path=config.data_path, label_column=config.label_column,
            loss=config.loss, folds=config.folds, trials=config.trials,
            c_range=config.c_range, k_range=(k, k), seed=config.seed,
            rho0=config.rho0, beta=config.beta, eps_inner=config.eps_inner,
            eps_outer=config.eps_outer, max_outer=config.max_outer,
            max_inner=config.max_inner, dual_tol=config.dual_tol)
        result = random_search(
            (dataset.X[tr][tr2], dataset.labels[tr][tr2]),
            (dataset.X[tr][val2], dataset.labels[tr][val2]),
            kcfg, sub_rng)
        ovr = train_multiclass(dataset.X[tr], dataset.labels[tr],
                               kcfg.pd_config(result.best.C, k))
        rows.append(SweepRow(k=k, C=result.best.C,
                             val_accuracy=result.best.val_accuracy,
                             test_accuracy=ovr_accuracy(ovr, dataset.X[te],
                                                        dataset.labels[te])))
    return rows


# ---------------------------------------------------------------------------
# delimited plot-data export


def export_boundary_grid(model: QuadraticSurfaceModel, out_path,
                         resolution: int = 100,
                         box: tuple[float, float] | None = None) -> None:
    """Sample f(x) on a 2-D grid over the model's active features.

    Inactive features stay at the model's training mean.  Models touching
    more than two features cannot be drawn in the plane.
    """
    active = model.active_features()
    if active.size > 2:
        raise DimensionError(
            f"2-D boundary grid needs at most 2 active features; model uses "
            f"features {active.tolist()}")
    feats = list(active) + [j for j in range(model.n) if j not in active]
    f1, f2 = feats[0], feats[1] if model.n > 1 else feats[0]
    if box is None:
        lo1 = model.mean[f1] - 3 * model.scale[f1]
        hi1 = model.mean[f1] + 3 * model.scale[f1]
        lo2 = model.mean[f2] - 3 * model.scale[f2]
        hi2 = model.mean[f2] + 3 * model.scale[f2]
    else:
        lo1, hi1 = box
        lo2, hi2 = box
    g1 = np.linspace(lo1, hi1, resolution)
    g2 = np.linspace(lo2, hi2, resolution)
    A, B = np.meshgrid(g1, g2, indexing="ij")
    X = np.tile(model.mean, (resolution * resolution, 1))
    X[:, f1] = A.ravel()
    X[:, f2] = B.ravel()
    f = model.decision_values(X)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(f"x{f1 + 1}\tx{f2 + 1}\tf\n")
        for a, b, v in zip(X[:, f1], X[:, f2], f):
            fh.write(f"{float(a)!r}\t{float(b)!r}\t{float(v)!r}\n")


def export_magnitudes(model: QuadraticSurfaceModel, out_path) -> None:
    """|W| entries (lower triangle) and |b| entries as one table."""
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("term\trow\tcol\tmagnitude\n")
        n = model.n
        for i in range(n):
            for j in range(i + 1):
                fh.write(f"W\t{i + 1}\t{j + 1}\t{float(abs(model.W[i, j]))!r}\n")
        for i in range(n):
            fh.write(f"b\t{i + 1}\t\t{float(abs(model.b[i]))!r}\n")


def export_k_sweep(rows: list[SweepRow], out_path) -> None:
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("k\tC\tval_accuracy\ttest_accuracy\n")
        for r in rows:
            fh.write(f"{r.k}\t{r.C!r}\t{r.val_accuracy!r}\t{r.test_accuracy!r}\n")


def export_trials(trials, out_path) -> None:
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("fold\ttrial\tC\tk\tval_accuracy\terror\n")
        for fold, trial_list in trials:
            for t in trial_list:
                acc = "" if t.val_accuracy is None else repr(t.val_accuracy)
                err = t.error or ""
                fh.write(f"{fold}\t{t.index}\t{t.C!r}\t{t.k}\t{acc}\t{err}\n")


def export_plot_data(artifact, kind: str, out_path) -> None:
    """Dispatch on `kind`: boundary | magnitudes | sweep | trace."""
    if kind == "boundary":
        export_boundary_grid(artifact, out_path)
    elif kind == "magnitudes":
        export_magnitudes(artifact, out_path)
    elif kind == "sweep":
        export_k_sweep(artifact, out_path)
    elif kind == "trace":
        artifact.write(out_path)
    else:
        raise ConfigError(f"unknown export kind {kind!r}")
