"""Penalty decomposition driver for the cardinality-constrained models.

Outer loop: escalate the penalty weight rho geometrically and re-solve the
penalized subproblem, resetting the auxiliary variable from a known feasible
point whenever the fresh subproblem minimum overshoots the safeguard
threshold.  Inner loop: block coordinate descent alternating an exact
(z, c)-minimization with the k-sparse projection of z.  Termination hands
back a model whose packed parameters are exactly k-sparse, together with the
convergence trace and a first-order stationarity report in the Lu-Zhang
sense.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import QuadraticSurfaceModel
from .errors import ConvergenceFailure, InvalidArgument, InvalidData
from .quadfeat import FeatureCache, unpack
from .solvers import (
    HINGE,
    LOSSES,
    HingeSolution,
    LSSolution,
    hard_threshold,
    penalty_objective,
    primal_objective,
    solve_z_step,
    top_k_support,
)


@dataclass(frozen=True)
class PDConfig:
    """Hyperparameters of one penalty decomposition run."""

    C: float
    k: int
    loss: str = HINGE
    rho0: float = 1.0
    beta: float = 10.0
    eps_inner: float = 1e-4
    eps_outer: float = 1e-4
    max_outer: int = 30
    max_inner: int = 50
    dual_tol: float = 1e-6

    def __post_init__(self):
        if self.C <= 0:
            raise InvalidArgument(f"C must be positive, got {self.C}")
        if self.k < 1:
            raise InvalidArgument(f"k must be >= 1, got {self.k}")
        if self.loss not in LOSSES:
            raise InvalidArgument(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.rho0 <= 0:
            raise InvalidArgument(f"rho0 must be positive, got {self.rho0}")
        if self.beta <= 1:
            raise InvalidArgument(f"beta must exceed 1, got {self.beta}")
        for name in ("eps_inner", "eps_outer", "dual_tol"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidArgument("iteration caps must be >= 1")


@dataclass(frozen=True)
class InnerStep:
    """Objective values after the (z, c)-step and after the u-step."""

    q_after_z: float
    q_after_u: float
    z_u_gap: float


@dataclass(frozen=True)
class OuterRecord:
    rho: float
    steps: tuple[InnerStep, ...]
    z_u_gap: float
    # True when the safeguard reset fired while escalating AFTER this round
    safeguard_triggered: bool

    @property
    def inner_iterations(self) -> int:
        return len(self.steps)

    @property
    def q_values(self) -> list[float]:
        out = []
        for s in self.steps:
            out.extend((s.q_after_z, s.q_after_u))
        return out


@dataclass
class PDTrace:
    """Per-iteration convergence log of one run."""

    upsilon: float
    records: list[OuterRecord] = field(default_factory=list)

    def rows(self):
        """Flat (iteration, rho, q_rho, z_u_gap) records, one per inner step."""
        it = 0
        for rec in self.records:
            for step in rec.steps:
                yield (it, rec.rho, step.q_after_u, step.z_u_gap)
                it += 1

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration\trho\tq_rho\tz_u_gap\n")
            for it, rho, q, gap in self.rows():
                fh.write(f"{it}\t{float(rho)!r}\t{float(q)!r}\t{float(gap)!r}\n")


@dataclass(frozen=True)
class SparseSolution:
    """A k-sparse candidate with everything the stationarity check needs."""

    z: np.ndarray
    c: float
    xi: np.ndarray
    support: np.ndarray
    C: float
    multipliers: np.ndarray | None = None  # hinge dual variables; None for LS


@dataclass(frozen=True)
class StationarityReport:
    """Residuals of the first-order system on a size-k support.

    omega is the absorbed gradient G z - sum_i mult_i y_i r_i; entries on the
    support set are residuals (must vanish), entries off it are free.
    """

    support: np.ndarray
    multipliers: dict
    omega: np.ndarray
    residuals: dict
    tol: float
    is_lu_zhang: bool


@dataclass(frozen=True)
class PDIterate:
    z: np.ndarray
    c: float
    u: np.ndarray
    gap: float


def feasible_point(cache: FeatureCache, loss: str, C: float):
    """The all-zero surface: k-sparse for every k, objective C * m."""
    z = np.zeros(cache.dim)
    c = 0.0
    return z, c, primal_objective(cache, z, c, C, loss)


def _rel_change(new, old) -> float:
    new = np.atleast_1d(np.asarray(new, dtype=float))
    old = np.atleast_1d(np.asarray(old, dtype=float))
    denom = max(float(np.max(np.abs(new))), 1.0)
    return float(np.max(np.abs(new - old))) / denom


@dataclass
class _InnerResult:
    z: np.ndarray
    c: float
    u: np.ndarray
    steps: list
    alpha: np.ndarray | None
    converged: bool


def inner_bcd(cache: FeatureCache, u0: np.ndarray, rho: float, config: PDConfig,
              first_step=None, warm_alpha: np.ndarray | None = None) -> _InnerResult:
    """Block coordinate descent on q_rho at fixed rho.

    Alternates the exact (z, c)-minimizer with hard thresholding of z; stops
    when the largest relative (inf-norm) change across z, c, u falls to
    eps_inner.  `first_step` reuses an already-solved (z, c) block for
    iteration 0 (the safeguard probe solves exactly this problem).
    """
    if np.count_nonzero(u0) > config.k:
        raise InvalidArgument("u0 must be k-sparse")
    u_prev = u0
    z_prev = None
    c_prev = None
    alpha = warm_alpha
    steps: list[InnerStep] = []
    converged = False
    for l in range(config.max_inner):
        if l == 0 and first_step is not None:
            sol = first_step
        else:
            try:
                sol = solve_z_step(cache, u_prev, rho, config.C, config.loss,
                                   dual_tol=config.dual_tol, warm_start=alpha)
            except ConvergenceFailure as exc:
                raise ConvergenceFailure(
                    f"(z,c)-step failed at inner iteration {l} (rho={rho:g}): {exc}",
                    best=exc.best, residual=exc.residual) from exc
        z_cand, c_cand = sol.z.values, sol.c
        if isinstance(sol, HingeSolution):
            alpha = sol.alpha.alpha
        q_cand = penalty_objective(cache, z_cand, c_cand, u_prev, rho, config.C, config.loss)
        if z_prev is not None:
            # an inexact solve cannot be allowed to undo progress; at the
            # block optimum keeping the previous point stalls the criterion
            # into termination, which is the right outcome
            q_prev = penalty_objective(cache, z_prev, c_prev, u_prev, rho,
                                       config.C, config.loss)
            if q_cand > q_prev:
                z_cand, c_cand, q_cand = z_prev, c_prev, q_prev
        u_new = hard_threshold(z_cand, config.k)
        q_after_u = penalty_objective(cache, z_cand, c_cand, u_new, rho,
                                      config.C, config.loss)
        gap = float(np.max(np.abs(z_cand - u_new)))
        steps.append(InnerStep(q_after_z=q_cand, q_after_u=q_after_u, z_u_gap=gap))

        if z_prev is not None:
            change = max(_rel_change(z_cand, z_prev),
                         _rel_change(c_cand, c_prev),
                         _rel_change(u_new, u_prev))
            if change <= config.eps_inner:
                z_prev, c_prev, u_prev = z_cand, c_cand, u_new
                converged = True
                break
        z_prev, c_prev, u_prev = z_cand, c_cand, u_new
    return _InnerResult(z=z_prev, c=c_prev, u=u_prev, steps=steps, alpha=alpha,
                        converged=converged)


def _refit_ridge(G: np.ndarray) -> float:
    # vanishing ridge, scaled so the Cholesky of G + rho I stays PD
    return 1e-8 * max(1.0, float(np.max(np.abs(np.diag(G)))))


def refit_on_support(cache: FeatureCache, support: np.ndarray, C: float, loss: str,
                     dual_tol: float = 1e-8) -> SparseSolution:
    """Re-solve the original problem with all coordinates off `support` at 0.

    Uses a vanishing ridge instead of the final escalated rho: the restricted
    minimizer of the unpenalized objective is what certifies first-order
    stationarity, and it can only improve the objective on that support.
    """
    sub = cache.restrict(support)
    rho = _refit_ridge(sub.G)
    u0 = np.zeros(sub.dim)
    sol = solve_z_step(sub, u0, rho, C, loss, dual_tol=min(dual_tol, 1e-8),
                       max_iter=200_000)
    mult = sol.alpha.alpha if isinstance(sol, HingeSolution) else None
    return SparseSolution(z=sol.z.values, c=sol.c, xi=sol.xi,
                          support=np.sort(np.asarray(support, dtype=int)),
                          C=C, multipliers=mult)


def dense_qsvm_solve(cache: FeatureCache, C: float, loss: str,
                     dual_tol: float = 1e-8):
    """Direct unconstrained solve (no sparsity), via the same vanishing ridge."""
    return refit_on_support(cache, np.arange(cache.dim), C, loss, dual_tol=dual_tol)


def check_lu_zhang(solution: SparseSolution, cache: FeatureCache, loss: str,
                   tol: float = 1e-4) -> StationarityReport:
    """Evaluate the first-order stationarity system on the solution's support.

    Reports per-block max violations; never raises on violation.
    """
    z, c, xi, S, C = (solution.z, solution.c, solution.xi,
                      solution.support, solution.C)
    y, r = cache.y, cache.r
    margins = y * (r @ z + c)
    if loss == HINGE:
        lam = solution.multipliers
        if lam is None:
            raise InvalidArgument("hinge stationarity check needs dual multipliers")
        lam_bar = C - lam
        omega = cache.G @ z - r.T @ (lam * y)
        residuals = {
            "stationarity_on_support": float(np.max(np.abs(omega[S]))),
            "multiplier_balance": float(abs(np.dot(y, lam))),
            "complementarity": float(np.max(np.abs(lam * (margins + xi - 1.0)))),
            "complementarity_upper": float(np.max(np.abs(lam_bar * xi))),
            "dual_feasibility": float(max(0.0, -lam.min(), -lam_bar.min())),
            "primal_feasibility": float(max(0.0, np.max(1.0 - xi - margins),
                                            -xi.min())),
        }
        multipliers = {"lambda": lam, "lambda_bar": lam_bar}
    else:
        # mu_i = -2 C xi_i; with that sign convention the z-gradient of the
        # Lagrangian is G z + sum_i mu_i y_i r_i (the multiplier enters the
        # Lagrangian with a plus for 2 C xi + mu = 0 to be its xi-gradient)
        mu = -2.0 * C * xi
        omega = cache.G @ z + r.T @ (mu * y)
        residuals = {
            "stationarity_on_support": float(np.max(np.abs(omega[S]))),
            "multiplier_balance": float(abs(np.dot(y, mu))),
            "multiplier_identity": float(np.max(np.abs(2.0 * C * xi + mu))),
            "equality_feasibility": float(np.max(np.abs(margins - 1.0 + xi))),
        }
        multipliers = {"mu": mu}
    worst = max(residuals.values())
    return StationarityReport(support=S, multipliers=multipliers, omega=omega,
                              residuals=residuals, tol=tol,
                              is_lu_zhang=bool(worst <= tol))


def penalty_decompose(cache: FeatureCache, config: PDConfig,
                      mean: np.ndarray | None = None,
                      scale: np.ndarray | None = None,
                      stationarity_tol: float = 1e-4,
                      upsilon: float | None = None):
    """Run the full outer/inner loop and extract an exactly k-sparse model.

    Returns (model, trace, report).  The model is built from the k-support of
    the final z (hard threshold), with (z, c) refit on that support so the
    cardinality bound holds exactly and the stationarity system is satisfied
    to solver precision.

    `upsilon` overrides the safeguard threshold; by default it is the
    definition-tight max of the feasible-point objective and the initial
    penalty minimum.
    """
    if cache.m < 1:
        raise InvalidData("empty dataset")
    k = config.k
    if k > cache.dim:
        warnings.warn(f"k={k} exceeds the parameter dimension d={cache.dim}; "
                      f"clamping to d", stacklevel=2)
        k = cache.dim
    cfg = replace(config, k=k)

    z_feas, c_feas, f_feas = feasible_point(cache, cfg.loss, cfg.C)
    u = np.zeros(cache.dim)
    rho = cfg.rho0

    first = solve_z_step(cache, u, rho, cfg.C, cfg.loss, dual_tol=cfg.dual_tol)
    q0_min = penalty_objective(cache, first.z.values, first.c, u, rho, cfg.C, cfg.loss)
    if upsilon is None:
        upsilon = max(f_feas, q0_min)
    trace = PDTrace(upsilon=float(upsilon))

    alpha = first.alpha.alpha if isinstance(first, HingeSolution) else None
    pending = first
    best: PDIterate | None = None
    converged = False
    z = c = None

    for _ in range(cfg.max_outer):
        inner = inner_bcd(cache, u, rho, cfg, first_step=pending, warm_alpha=alpha)
        z, c, u, alpha = inner.z, inner.c, inner.u, inner.alpha
        gap = float(np.max(np.abs(z - u)))
        if gap <= cfg.eps_outer:
            trace.records.append(OuterRecord(rho=rho, steps=tuple(inner.steps),
                                             z_u_gap=gap, safeguard_triggered=False))
            converged = True
        else:
            rho_next = cfg.beta * rho
            probe = solve_z_step(cache, u, rho_next, cfg.C, cfg.loss,
                                 dual_tol=cfg.dual_tol, warm_start=alpha)
            if isinstance(probe, HingeSolution):
                alpha = probe.alpha.alpha
            q_min_next = penalty_objective(cache, probe.z.values, probe.c, u,
                                           rho_next, cfg.C, cfg.loss)
            fired = q_min_next > upsilon
            trace.records.append(OuterRecord(rho=rho, steps=tuple(inner.steps),
                                             z_u_gap=gap, safeguard_triggered=fired))
            if fired:
                u = z_feas.copy()  # z-component of the feasible point
                pending = None
            else:
                pending = probe
            rho = rho_next
        if best is None or gap < best.gap:
            best = PDIterate(z=z.copy(), c=c, u=u.copy(), gap=gap)
        if converged:
            break

    if not converged:
        raise ConvergenceFailure(
            f"outer loop did not reach ||z - u||_inf <= {cfg.eps_outer:g} in "
            f"{cfg.max_outer} rounds (best gap {best.gap:.3e})",
            best=best, residual=best.gap)

    support = top_k_support(z, cfg.k)
    refit = refit_on_support(cache, support, cfg.C, cfg.loss, dual_tol=cfg.dual_tol)
    report = check_lu_zhang(refit, cache, cfg.loss, tol=stationarity_tol)

    W, b = unpack(refit.z, cache.index_map.n)
    if mean is None:
        mean = np.zeros(cache.index_map.n)
    if scale is None:
        scale = np.ones(cache.index_map.n)
    model = QuadraticSurfaceModel(W=W, b=b, c=refit.c, k=cfg.k, loss=cfg.loss,
                                  mean=np.asarray(mean, dtype=float),
                                  scale=np.asarray(scale, dtype=float))
    return model, trace, report
