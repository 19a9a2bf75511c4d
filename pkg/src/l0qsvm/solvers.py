"""Subproblem solvers for the penalty decomposition loop.

Three blocks arise: the k-sparse Euclidean projection (hard thresholding),
the hinge-loss ridge subproblem solved through its dual QP, and the
quadratic-loss subproblem solved as one symmetric positive-definite linear
system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._smo import kkt_pair_residual, smo_chunk
from .errors import ConvergenceFailure, InvalidArgument, NumericError
from .quadfeat import FeatureCache, PackedParams

HINGE = "hinge"
QUADRATIC = "quadratic"
LOSSES = (HINGE, QUADRATIC)

# Refresh the incrementally maintained dual gradient this often.
_SMO_CHUNK = 20_000


def _check_loss(loss: str) -> str:
    if loss not in LOSSES:
        raise InvalidArgument(f"loss must be one of {LOSSES}, got {loss!r}")
    return loss


# ---------------------------------------------------------------------------
# sparse projection


def top_k_support(z: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest-magnitude entries; ties keep the lowest index."""
    z = np.asarray(z, dtype=float)
    d = z.shape[0]
    if not 1 <= k <= d:
        raise InvalidArgument(f"sparsity level k={k} outside [1, {d}]")
    order = np.argsort(-np.abs(z), kind="stable")
    return np.sort(order[:k])


def hard_threshold(z: np.ndarray, k: int) -> np.ndarray:
    """Euclidean projection onto the set of k-sparse vectors."""
    z = np.asarray(z, dtype=float)
    u = np.zeros_like(z)
    keep = top_k_support(z, k)
    u[keep] = z[keep]
    return u


# ---------------------------------------------------------------------------
# objectives


def loss_terms(margins: np.ndarray, y: np.ndarray, loss: str) -> float:
    """Sum of per-sample losses H(1 - y_i f_i)."""
    t = 1.0 - y * margins
    if loss == HINGE:
        return float(np.maximum(t, 0.0).sum())
    return float((t * t).sum())


def primal_objective(cache: FeatureCache, z: np.ndarray, c: float, C: float, loss: str) -> float:
    """Original objective 1/2 z^T G z + C sum_i H(1 - y_i (z^T r_i + c))."""
    _check_loss(loss)
    return 0.5 * float(z @ (cache.G @ z)) + C * loss_terms(cache.margins(z, c), cache.y, loss)


def penalty_objective(cache: FeatureCache, z: np.ndarray, c: float, u: np.ndarray,
                      rho: float, C: float, loss: str) -> float:
    """Penalized objective q_rho(z, c, u) = f(z, c) + rho/2 ||z - u||^2."""
    diff = z - u
    return primal_objective(cache, z, c, C, loss) + 0.5 * rho * float(diff @ diff)


def hinge_subproblem_objective(cache: FeatureCache, z: np.ndarray, c: float,
                               xi: np.ndarray, u: np.ndarray, rho: float, C: float) -> float:
    """Constrained-form value 1/2 z^T (G+rho I) z - rho u^T z + C sum xi.

    Differs from q_rho by the constant rho/2 ||u||^2; matches the dual bound
    returned by :func:`solve_dual_qp`, so primal - dual >= 0 is the gap.
    """
    quad = 0.5 * float(z @ (cache.G @ z)) + 0.5 * rho * float(z @ z)
    return quad - rho * float(u @ z) + C * float(xi.sum())


# ---------------------------------------------------------------------------
# hinge loss: dual QP via two-index coordinate descent


@dataclass(frozen=True)
class DualState:
    """Multipliers of the hinge dual with the bound value they certify.

    `objective` is the dual lower bound sum(alpha) - 1/2 v^T (G+rho I)^-1 v
    at v = sum_i alpha_i y_i r_i + rho u; at optimality it equals the
    subproblem value reported by :func:`hinge_subproblem_objective`.
    """

    alpha: np.ndarray
    objective: float
    kkt_residual: float


@dataclass(frozen=True)
class HingeSolution:
    z: PackedParams
    c: float
    xi: np.ndarray
    alpha: DualState


@dataclass(frozen=True)
class LSSolution:
    z: PackedParams
    c: float
    xi: np.ndarray


def solve_dual_qp(cache: FeatureCache, u: np.ndarray, rho: float, C: float,
                  tol: float = 1e-6, max_iter: int = 100_000,
                  warm_start: np.ndarray | None = None) -> DualState:
    """Solve the dual of the hinge subproblem to pairwise KKT tolerance `tol`.

    The Gram-like matrix Q_ij = y_i y_j r_i^T (G+rho I)^-1 r_j is formed from
    the cached label-free block, so repeated calls at one rho (the inner BCD
    loop) pay the factorization once.
    """
    if C <= 0:
        raise InvalidArgument(f"penalty C must be positive, got {C}")
    if tol <= 0:
        raise InvalidArgument(f"tolerance must be positive, got {tol}")
    y = cache.y
    Q = (y[:, None] * y[None, :]) * cache.dual_gram(rho)
    Pu = cache.solve_shifted(rho, u)
    q = -1.0 + rho * y * (cache.r @ Pu)

    if warm_start is not None and warm_start.shape == y.shape:
        alpha = np.clip(warm_start, 0.0, C)
    else:
        alpha = np.zeros_like(y)
    grad = Q @ alpha + q

    total = 0
    while True:
        steps, _ = smo_chunk(Q, q, y, C, alpha, grad, tol, min(_SMO_CHUNK, max_iter - total))
        total += steps
        grad = Q @ alpha + q
        resid = kkt_pair_residual(alpha, grad, y, C)
        if resid <= tol:
            break
        if total >= max_iter:
            raise ConvergenceFailure(
                f"dual QP stalled after {total} pair updates (residual {resid:.3e} > {tol:.1e})",
                best=_dual_state(cache, u, rho, alpha, resid),
                residual=resid,
            )
    return _dual_state(cache, u, rho, alpha, resid)


def _dual_state(cache, u, rho, alpha, resid) -> DualState:
    v = cache.r.T @ (alpha * cache.y) + rho * u
    objective = float(alpha.sum()) - 0.5 * float(v @ cache.solve_shifted(rho, v))
    return DualState(alpha=alpha, objective=objective, kkt_residual=float(resid))


def recover_primal_hinge(alpha: DualState, cache: FeatureCache, u: np.ndarray,
                         rho: float, C: float, c_rule: str = "kkt") -> HingeSolution:
    """Rebuild (z, c, xi) from dual multipliers.

    z = (G+rho I)^-1 (sum_i alpha_i y_i r_i + rho u).  The offset c averages
    y_i - z^T r_i over free support vectors; with none available it falls
    back to the midpoint of the interval the box-bound conditions leave for
    c.  `c_rule="max-positive"` selects max_{y_i=1, alpha_i>0} -z^T r_i
    instead (kept for comparison; ill-defined cases fall back to "kkt").
    """
    a = alpha.alpha
    y = cache.y
    z = cache.solve_shifted(rho, cache.r.T @ (a * y) + rho * u)
    t = cache.r @ z

    c = None
    if c_rule == "max-positive":
        mask = (y > 0) & (a > 1e-8 * C)
        if mask.any():
            c = float(np.max(-t[mask]))
    elif c_rule != "kkt":
        raise InvalidArgument(f"unknown c_rule {c_rule!r}")
    if c is None:
        c = _kkt_offset(a, t, y, C)

    xi = np.maximum(0.0, 1.0 - y * (t + c))
    return HingeSolution(z=PackedParams(cache.embed(z), cache.index_map), c=c,
                         xi=xi, alpha=alpha)


def _kkt_offset(a: np.ndarray, t: np.ndarray, y: np.ndarray, C: float) -> float:
    tau = 1e-8 * C
    free = (a > tau) & (a < C - tau)
    if free.any():
        return float(np.mean(y[free] - t[free]))
    at_zero = a <= tau
    at_cap = a >= C - tau
    lower = np.concatenate([(1.0 - t)[(y > 0) & at_zero], (-1.0 - t)[(y < 0) & at_cap]])
    upper = np.concatenate([(1.0 - t)[(y > 0) & at_cap], (-1.0 - t)[(y < 0) & at_zero]])
    if lower.size and upper.size:
        return 0.5 * (float(lower.max()) + float(upper.min()))
    if lower.size:
        return float(lower.max())
    if upper.size:
        return float(upper.min())
    return 0.0


def solve_hinge_subproblem(cache: FeatureCache, u: np.ndarray, rho: float, C: float,
                           tol: float = 1e-6, max_iter: int = 100_000,
                           warm_start: np.ndarray | None = None) -> HingeSolution:
    """Dual solve plus primal recovery in one step."""
    dual = solve_dual_qp(cache, u, rho, C, tol=tol, max_iter=max_iter, warm_start=warm_start)
    return recover_primal_hinge(dual, cache, u, rho, C)


# ---------------------------------------------------------------------------
# quadratic loss: closed-form linear system


def ls_system(cache: FeatureCache, u: np.ndarray, rho: float, C: float,
              simplified: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Assemble the (d+1) x (d+1) normal equations of the quadratic-loss step.

    With labels in {-1,+1} the diagonal label matrix squares to the identity;
    `simplified=False` keeps the explicit D^2 blocks for cross-checking.
    """
    d, m = cache.dim, cache.m
    y = cache.y
    M = np.empty((d + 1, d + 1))
    rhs = np.empty(d + 1)
    if simplified:
        RtD2R = cache.rtr()
        RtD2_1 = cache.r.sum(axis=0)
        sumD2 = float(m)
    else:
        D2 = y * y
        RtD2R = cache.r.T @ (D2[:, None] * cache.r)
        RtD2_1 = cache.r.T @ D2
        sumD2 = float(D2.sum())
    M[:d, :d] = cache.G + rho * np.eye(d) + 2.0 * C * RtD2R
    M[:d, d] = 2.0 * C * RtD2_1
    M[d, :d] = 2.0 * C * RtD2_1
    M[d, d] = 2.0 * C * sumD2
    rhs[:d] = 2.0 * C * (cache.r.T @ y) + rho * u
    rhs[d] = 2.0 * C * float(y.sum())
    return M, rhs


def solve_ls_subproblem(cache: FeatureCache, u: np.ndarray, rho: float, C: float) -> LSSolution:
    """Exact minimizer of the quadratic-loss penalized subproblem."""
    if C <= 0:
        raise InvalidArgument(f"penalty C must be positive, got {C}")
    if rho <= 0:
        raise NumericError(f"ridge shift must be positive, got rho={rho}")
    M, rhs = ls_system(cache, u, rho, C)
    try:
        sol = cho_solve(cho_factor(M, lower=True, check_finite=False), rhs,
                        check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"quadratic-loss system factorization failed: {exc}") from exc
    z, c = sol[:-1], float(sol[-1])
    xi = 1.0 - cache.y * cache.margins(z, c)
    return LSSolution(z=PackedParams(cache.embed(z), cache.index_map), c=c, xi=xi)


def solve_z_step(cache: FeatureCache, u: np.ndarray, rho: float, C: float, loss: str,
                 dual_tol: float = 1e-6, max_iter: int = 100_000,
                 warm_start: np.ndarray | None = None) -> HingeSolution | LSSolution:
    """Minimize q_rho over (z, c) with u fixed, for either loss."""
    if _check_loss(loss) == HINGE:
        return solve_hinge_subproblem(cache, u, rho, C, tol=dual_tol,
                                      max_iter=max_iter, warm_start=warm_start)
    return solve_ls_subproblem(cache, u, rho, C)
