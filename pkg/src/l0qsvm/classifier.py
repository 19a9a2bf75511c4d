"""Deployable quadratic-surface classifiers.

A trained model keeps the symmetric matrix W, linear term b, offset c, the
sparsity budget it was trained under, and the feature standardization it was
fit with, so prediction needs no side-channel.  One-vs-rest wraps one binary
model per class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidArgument, ParseError, VersionError
from .quadfeat import hvec

SCHEMA_VERSION = 1

ARGMAX = "argmax"
SIGN_MAJORITY = "sign-majority"


@dataclass(frozen=True)
class QuadraticSurfaceModel:
    """Classifier x -> sign(1/2 xs^T W xs + b^T xs + c), xs standardized."""

    W: np.ndarray
    b: np.ndarray
    c: float
    k: int
    loss: str
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        scale = np.asarray(self.scale, dtype=float)
        n = W.shape[0] if W.ndim == 2 else -1
        if W.ndim != 2 or W.shape != (n, n):
            raise InvalidArgument(f"W must be square, got shape {W.shape}")
        if not np.array_equal(W, W.T):
            raise InvalidArgument("W must be exactly symmetric")
        for name, v in (("b", b), ("mean", mean), ("scale", scale)):
            if v.shape != (n,):
                raise InvalidArgument(f"{name} has shape {v.shape}, expected ({n},)")
        nnz = np.count_nonzero(hvec(W)) + np.count_nonzero(b)
        if nnz > self.k:
            raise InvalidArgument(
                f"model has {nnz} nonzero parameters, over the budget k={self.k}"
            )
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        """f(x) for every row of X, on the standardized scale."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n:
            raise DimensionError(f"expected (m, {self.n}) inputs, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidArgument("inputs contain NaN/Inf")
        Xs = self.standardize(X)
        quad = 0.5 * np.einsum("ij,jk,ik->i", Xs, self.W, Xs)
        return quad + Xs @ self.b + self.c

    def active_features(self) -> np.ndarray:
        """Indices of features with any nonzero quadratic or linear weight."""
        used = np.any(self.W != 0.0, axis=0) | (self.b != 0.0)
        return np.flatnonzero(used)


@dataclass(frozen=True)
class OvRModel:
    """One binary model per class; prediction aggregates decision values."""

    classes: tuple
    models: tuple[QuadraticSurfaceModel, ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise InvalidArgument("one-vs-rest needs at least 2 classes")
        if len(self.classes) != len(self.models):
            raise InvalidArgument("one model per class required")

    def decision_matrix(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([m.decision_values(X) for m in self.models])


def decision_value(model: QuadraticSurfaceModel, x: np.ndarray) -> float:
    return float(model.decision_values(np.asarray(x, dtype=float)[None, :])[0])


def predict_batch(model: QuadraticSurfaceModel, X: np.ndarray) -> np.ndarray:
    # f(x) = 0 counts as +1
    return np.where(model.decision_values(X) >= 0.0, 1.0, -1.0)


def predict(model: QuadraticSurfaceModel, x: np.ndarray) -> float:
    return float(predict_batch(model, np.asarray(x, dtype=float)[None, :])[0])


def predict_multi_batch(ovr: OvRModel, X: np.ndarray, rule: str = ARGMAX) -> np.ndarray:
    scores = ovr.decision_matrix(X)
    classes = np.asarray(ovr.classes, dtype=object)
    if rule == ARGMAX:
        return classes[np.argmax(scores, axis=1)]
    if rule == SIGN_MAJORITY:
        # one vote per positive-side model; margins break vote ties and the
        # no-votes case deterministically
        votes = scores >= 0.0
        picked = np.empty(X.shape[0], dtype=object)
        for i in range(X.shape[0]):
            cand = np.flatnonzero(votes[i])
            if cand.size == 0:
                cand = np.arange(scores.shape[1])
            picked[i] = classes[cand[np.argmax(scores[i, cand])]]
        return picked
    raise InvalidArgument(f"unknown voting rule {rule!r}")


def predict_multi(ovr: OvRModel, x: np.ndarray, rule: str = ARGMAX):
    return predict_multi_batch(ovr, np.asarray(x, dtype=float)[None, :], rule=rule)[0]


# ---------------------------------------------------------------------------
# serialization


def _tril_row_major(W: np.ndarray) -> list[float]:
    n = W.shape[0]
    return [float(W[i, j]) for i in range(n) for j in range(i + 1)]


def _from_tril_row_major(vals, n: int) -> np.ndarray:
    W = np.zeros((n, n))
    t = 0
    for i in range(n):
        for j in range(i + 1):
            W[i, j] = vals[t]
            W[j, i] = vals[t]
            t += 1
    return W


def _binary_document(model: QuadraticSurfaceModel) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "kind": "binary",
        "n": model.n,
        "k": model.k,
        "loss": model.loss,
        "mean": [float(v) for v in model.mean],
        "scale": [float(v) for v in model.scale],
        "W": _tril_row_major(model.W),
        "b": [float(v) for v in model.b],
        "c": model.c,
    }


def serialize(model: QuadraticSurfaceModel | OvRModel) -> str:
    """Versioned JSON text; floats round-trip exactly."""
    if isinstance(model, OvRModel):
        doc = {
            "version": SCHEMA_VERSION,
            "kind": "one_vs_rest",
            "classes": list(model.classes),
            "models": [_binary_document(m) for m in model.models],
        }
    else:
        doc = _binary_document(model)
    return json.dumps(doc, indent=1)


def _parse_binary(doc: dict) -> QuadraticSurfaceModel:
    try:
        n = int(doc["n"])
        expect = n * (n + 1) // 2
        W_vals = doc["W"]
        if len(W_vals) != expect:
            raise ParseError(f"W has {len(W_vals)} entries, expected {expect}")
        return QuadraticSurfaceModel(
            W=_from_tril_row_major([float(v) for v in W_vals], n),
            b=np.asarray([float(v) for v in doc["b"]], dtype=float),
            c=float(doc["c"]),
            k=int(doc["k"]),
            loss=str(doc["loss"]),
            mean=np.asarray([float(v) for v in doc["mean"]], dtype=float),
            scale=np.asarray([float(v) for v in doc["scale"]], dtype=float),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, InvalidArgument) as exc:
        raise ParseError(f"corrupted model document: {exc}") from exc


def deserialize(text: str) -> QuadraticSurfaceModel | OvRModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ParseError("model document lacks a version field")
    if doc["version"] != SCHEMA_VERSION:
        raise VersionError(f"unsupported model schema version {doc['version']!r}")
    kind = doc.get("kind", "binary")
    if kind == "binary":
        return _parse_binary(doc)
    if kind == "one_vs_rest":
        try:
            classes = tuple(doc["classes"])
            models = tuple(_parse_binary(d) for d in doc["models"])
        except ParseError:
            raise
        except (KeyError, TypeError) as exc:
            raise ParseError(f"corrupted one-vs-rest document: {exc}") from exc
        return OvRModel(classes=classes, models=models)
    raise ParseError(f"unknown document kind {kind!r}")
