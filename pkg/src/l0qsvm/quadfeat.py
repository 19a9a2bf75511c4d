"""Symmetric-matrix vectorization algebra for quadratic-surface classifiers.

A quadratic surface f(x) = 1/2 x^T W x + b^T x + c with symmetric W is
handled as a plain vector problem in z = [hvec(W); b].  This module owns the
half-vectorization ordering, the duplication/elimination matrices used to
validate it, and the per-dataset feature cache (r_i vectors and the PSD
matrix G) that every solver consumes.

Ordering is frozen: hvec stacks the lower triangle column by column,
a11, a21, ..., an1, a22, ..., an2, ..., ann.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidArgument, InvalidData, InvalidLabel, NumericError

# Dense G is (d x d) with d = n(n+1)/2 + n; beyond this width the quadratic
# monomial space stops being desk-scale.
MAX_FEATURES = 60

_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class SymIndexMap:
    """Index bookkeeping between symmetric n x n matrices and hvec order."""

    n: int
    pairs: tuple[tuple[int, int], ...]

    @property
    def d_w(self) -> int:
        """Length of hvec(W)."""
        return self.n * (self.n + 1) // 2

    @property
    def d(self) -> int:
        """Length of z = [hvec(W); b]."""
        return self.d_w + self.n


def sym_index_map(n: int) -> SymIndexMap:
    if n < 1:
        raise InvalidArgument(f"feature count must be >= 1, got {n}")
    pairs = tuple((row, col) for col in range(n) for row in range(col, n))
    return SymIndexMap(n=n, pairs=pairs)


@dataclass(frozen=True)
class PackedParams:
    """Stacked parameter vector z = [hvec(W); b] plus its index map."""

    values: np.ndarray
    index_map: SymIndexMap

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] != self.index_map.d:
            raise InvalidArgument(
                f"parameter vector has length {v.shape}, expected ({self.index_map.d},)"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("parameter vector contains NaN/Inf")
        object.__setattr__(self, "values", v)


def _check_symmetric(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    if np.max(np.abs(A - A.T)) > _SYMMETRY_TOL * scale:
        raise InvalidArgument("matrix is not symmetric within tolerance")
    return A


def hvec(A: np.ndarray) -> np.ndarray:
    """Half-vectorize a symmetric matrix (column-major lower triangle)."""
    A = _check_symmetric(A)
    n = A.shape[0]
    rows, cols = np.tril_indices(n)
    # tril_indices is row-major; reorder to column-major by sorting on col.
    order = np.lexsort((rows, cols))
    return A[rows[order], cols[order]].astype(float)


def unhvec(w: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`hvec`: rebuild the symmetric matrix."""
    w = np.asarray(w, dtype=float)
    imap = sym_index_map(n)
    if w.shape != (imap.d_w,):
        raise InvalidArgument(f"hvec length {w.shape} does not match n={n}")
    A = np.zeros((n, n))
    for t, (i, j) in enumerate(imap.pairs):
        A[i, j] = w[t]
        A[j, i] = w[t]
    return A


def duplication_matrix(n: int) -> np.ndarray:
    """D_n with D_n @ hvec(A) == vec(A) for symmetric A (column-major vec)."""
    imap = sym_index_map(n)
    D = np.zeros((n * n, imap.d_w), dtype=np.int64)
    idx = {pair: t for t, pair in enumerate(imap.pairs)}
    for col in range(n):
        for row in range(n):
            t = idx[(max(row, col), min(row, col))]
            D[col * n + row, t] = 1
    return D


def elimination_matrix(n: int) -> np.ndarray:
    """L_n with L_n @ vec(A) == hvec(A); satisfies L_n @ D_n == I."""
    imap = sym_index_map(n)
    L = np.zeros((imap.d_w, n * n), dtype=np.int64)
    for t, (row, col) in enumerate(imap.pairs):
        L[t, col * n + row] = 1
    return L


def pack(W: np.ndarray, b: np.ndarray) -> PackedParams:
    """Stack (W, b) into z = [hvec(W); b]."""
    W = _check_symmetric(W)
    b = np.asarray(b, dtype=float)
    n = W.shape[0]
    if b.shape != (n,):
        raise InvalidArgument(f"b has shape {b.shape}, expected ({n},)")
    return PackedParams(np.concatenate([hvec(W), b]), sym_index_map(n))


def unpack(z: PackedParams | np.ndarray, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Split z back into (W, b)."""
    if isinstance(z, PackedParams):
        imap = z.index_map
        v = z.values
    else:
        if n is None:
            raise InvalidArgument("unpack of a bare array needs the feature count n")
        imap = sym_index_map(n)
        v = np.asarray(z, dtype=float)
        if v.shape != (imap.d,):
            raise InvalidArgument(f"z has shape {v.shape}, expected ({imap.d},)")
    return unhvec(v[: imap.d_w], imap.n), v[imap.d_w :].copy()


class _GramCache:
    """Per-dataset factorizations keyed by the ridge shift rho.

    G never changes after construction, so the Cholesky factor of (G + rho I)
    and the label-free dual Gram block R (G + rho I)^-1 R^T are computed once
    per rho and shared by every solver (and, via `with_labels`, by every
    one-vs-rest relabeling of the same points).
    """

    def __init__(self, G: np.ndarray, R: np.ndarray):
        self.G = G
        self.R = R
        self._lock = threading.Lock()
        self._factors: dict[float, tuple] = {}
        self._q0: dict[float, np.ndarray] = {}
        self._rtr: np.ndarray | None = None

    def factor(self, rho: float):
        if not rho > 0:
            raise NumericError(f"ridge shift must be positive, got rho={rho}")
        key = float(rho)
        with self._lock:
            hit = self._factors.get(key)
        if hit is not None:
            return hit
        shifted = self.G + key * np.eye(self.G.shape[0])
        try:
            fac = cho_factor(shifted, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"Cholesky failed for G + {rho} I: {exc}") from exc
        with self._lock:
            self._factors[key] = fac
        return fac

    def solve(self, rho: float, B: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor(rho), B, check_finite=False)

    def dual_gram(self, rho: float) -> np.ndarray:
        """Label-free block R (G + rho I)^-1 R^T, symmetrized."""
        key = float(rho)
        with self._lock:
            hit = self._q0.get(key)
        if hit is not None:
            return hit
        PRt = self.solve(key, self.R.T)
        Q0 = self.R @ PRt
        Q0 = 0.5 * (Q0 + Q0.T)
        with self._lock:
            self._q0[key] = Q0
        return Q0

    def rtr(self) -> np.ndarray:
        with self._lock:
            if self._rtr is None:
                self._rtr = self.R.T @ self.R
            return self._rtr


@dataclass(frozen=True, eq=False)
class FeatureCache:
    """Precomputed quadratic-monomial features for one dataset.

    r has shape (m, d) with rows r_i = [s_i; x_i]; G is the dense PSD
    curvature matrix with 1/2 z^T G z = sum_i ||W x_i + b||^2 for any packed
    z.  Immutable after construction; safe to share across threads.
    """

    X: np.ndarray
    y: np.ndarray
    r: np.ndarray
    G: np.ndarray
    index_map: SymIndexMap
    gram: _GramCache = field(repr=False)
    # indices of the full parameter space this cache works in; None = all
    support: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        """Full packed-parameter dimension n(n+1)/2 + n."""
        return self.index_map.d

    @property
    def dim(self) -> int:
        """Working dimension: d, or the support size for a restricted cache."""
        return self.r.shape[1]

    def embed(self, z: np.ndarray) -> np.ndarray:
        """Scatter a working-dimension vector back into the full space."""
        if self.support is None:
            return np.asarray(z, dtype=float)
        full = np.zeros(self.d)
        full[self.support] = z
        return full

    def margins(self, z: np.ndarray, c: float) -> np.ndarray:
        """Decision values z^T r_i + c for every sample."""
        return self.r @ z + c

    def factor_shifted(self, rho: float):
        return self.gram.factor(rho)

    def solve_shifted(self, rho: float, B: np.ndarray) -> np.ndarray:
        return self.gram.solve(rho, B)

    def dual_gram(self, rho: float) -> np.ndarray:
        return self.gram.dual_gram(rho)

    def rtr(self) -> np.ndarray:
        return self.gram.rtr()

    def with_labels(self, y: np.ndarray) -> "FeatureCache":
        """Same points, different +-1 labeling; shares all factorizations."""
        y = _validate_labels(y, self.m)
        return FeatureCache(X=self.X, y=y, r=self.r, G=self.G,
                            index_map=self.index_map, gram=self.gram,
                            support=self.support)

    def restrict(self, support: np.ndarray) -> "FeatureCache":
        """Freeze all z-coordinates outside `support` at zero.

        Returns a cache over the |support| kept coordinates: r columns and
        the principal submatrix of G.  Solutions come back in the working
        dimension; `embed` scatters them into the full space.
        """
        support = np.asarray(support, dtype=int)
        if support.ndim != 1 or support.size == 0:
            raise InvalidArgument("support must be a nonempty 1-D index array")
        if np.unique(support).size != support.size:
            raise InvalidArgument("support contains duplicate indices")
        if support.min() < 0 or support.max() >= self.dim:
            raise InvalidArgument("support index out of range")
        Gs = self.G[np.ix_(support, support)]
        Rs = self.r[:, support]
        absolute = support if self.support is None else self.support[support]
        return FeatureCache(X=self.X, y=self.y, r=Rs, G=Gs,
                            index_map=self.index_map, gram=_GramCache(Gs, Rs),
                            support=absolute)


def _validate_labels(y, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != m:
        raise InvalidArgument(f"got {y.shape[0]} labels for {m} samples")
    bad = ~np.isin(y, (-1.0, 1.0))
    if np.any(bad):
        raise InvalidLabel(
            f"labels must be -1 or +1; offending values: {np.unique(y[bad])[:5]}"
        )
    return y


def _monomial_rows(X: np.ndarray, imap: SymIndexMap) -> np.ndarray:
    """Rows s_i with s^T hvec(W) = 1/2 x^T W x.

    The off-diagonal entries carry x_j x_k (both triangle copies folded in);
    diagonal entries carry x_j^2 / 2.  A literal half of hvec(x x^T) would
    drop the duplicate off-diagonal terms and break the identity.
    """
    m = X.shape[0]
    S = np.empty((m, imap.d_w))
    for t, (i, j) in enumerate(imap.pairs):
        if i == j:
            S[:, t] = 0.5 * X[:, i] * X[:, i]
        else:
            S[:, t] = X[:, i] * X[:, j]
    return S


def _gradient_rows(X: np.ndarray, imap: SymIndexMap) -> np.ndarray:
    """Stacked H_i blocks, H_i z = W x_i + b, shape (m, n, d)."""
    m, n = X.shape
    H = np.zeros((m, n, imap.d))
    for t, (i, j) in enumerate(imap.pairs):
        if i == j:
            H[:, i, t] = X[:, i]
        else:
            H[:, i, t] = X[:, j]
            H[:, j, t] = X[:, i]
    for a in range(n):
        H[:, a, imap.d_w + a] = 1.0
    return H


def build_feature_cache(X: np.ndarray, y: np.ndarray) -> FeatureCache:
    """Validate a dataset and precompute r_i vectors and G.

    G = 2 sum_i H_i^T H_i is assembled in sample chunks and symmetrized, so
    G == G^T holds exactly and z^T G z >= 0 up to rounding.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidData(f"feature matrix must be 2-D, got shape {X.shape}")
    m, n = X.shape
    if m < 1 or n < 1:
        raise InvalidData(f"need at least one sample and one feature, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidData("feature matrix contains NaN/Inf")
    if n > MAX_FEATURES:
        raise InvalidData(
            f"dataset has n={n} features; the dense quadratic parameter space "
            f"(d = n(n+1)/2 + n = {n * (n + 1) // 2 + n}) is only supported up "
            f"to n={MAX_FEATURES}"
        )
    y = _validate_labels(y, m)

    imap = sym_index_map(n)
    R = np.hstack([_monomial_rows(X, imap), X])

    G = np.zeros((imap.d, imap.d))
    chunk = max(1, 65536 // max(1, n * imap.d))
    for lo in range(0, m, chunk):
        H = _gradient_rows(X[lo : lo + chunk], imap).reshape(-1, imap.d)
        G += H.T @ H
    G *= 2.0
    G = 0.5 * (G + G.T)

    return FeatureCache(X=X, y=y, r=R, G=G, index_map=imap, gram=_GramCache(G, R))
