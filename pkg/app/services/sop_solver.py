"""
Variance-component estimation for adaptive P-splines by the SOP fixed point.

Each sweep solves the penalized normal equations once (a Cholesky
factorization in 1D, a pivoted QR of the stacked roots in 2D), reads the
effective dimensions off the inverse, and updates

    tau2_l = alpha' Lambda_l alpha / ed_l
    sigma2 = |y - X beta - Z alpha|_w^2 / (n - rank(X) - sum_l ed_l)

Poisson responses are handled by an IRLS loop around the Gaussian fit.
"""

import logging

import numpy as np
from scipy import linalg
from scipy.special import xlogy
from threadpoolctl import threadpool_limits

from app.config import get_settings
from app.exceptions import DataError, DegenerateDataError, RankError
from app.models import Family, FitConfig, FitResult, IterationRecord, MixedParts, PrecisionModel
from app.models.base import ArrayModel
from app.services.mixed_model import (
    component_quadratics,
    component_traces,
    covariance,
    precision_matrix,
    root_shares,
    tensor_coefficients,
)
from app.utils.validators import as_vector, sample_variance

logger = logging.getLogger(__name__)

COLLAPSE_ED = 1e-10
# Components below this effective dimension no longer move the fit; their
# tau2 is left out of the parameter-change test.
NEGLIGIBLE_ED = 1e-6


class CrossProducts(ArrayModel):
    """
    [X|Z]' W [X|Z] and [X|Z]' W y for fixed data and weights, plus the
    triangular root of the same data (sqrt(W) [X|Z] = QR, qty = Q' sqrt(W) y).
    """

    gram: np.ndarray
    rhs: np.ndarray
    root: np.ndarray
    qty: np.ndarray
    n_fixed: int

    @classmethod
    def build(cls, X: np.ndarray, Z: np.ndarray, y: np.ndarray, w: np.ndarray) -> "CrossProducts":
        XZ = np.hstack([X, Z])
        gram = XZ.T @ (w[:, None] * XZ)
        sw = np.sqrt(w)
        Q, R = linalg.qr(sw[:, None] * XZ, mode="economic")
        return cls(
            gram=0.5 * (gram + gram.T),
            rhs=XZ.T @ (w * y),
            root=R,
            qty=Q.T @ (sw * y),
            n_fixed=X.shape[1],
        )


class PenalizedSolution(ArrayModel):
    """Solution of the penalized normal equations plus what the traces and the likelihood need"""

    beta: np.ndarray
    alpha: np.ndarray
    cinv: np.ndarray
    ginv: np.ndarray
    sigma2: float
    logdet_c: float
    logdet_ginv: float
    # Root solves only: (R G R')_rr - sigma2 (R C^-1_ZZ R')_rr for every row r of the precision root.
    leverage: np.ndarray | None = None

    @property
    def cinv_random(self) -> np.ndarray:
        k = self.beta.size
        return self.cinv[k:, k:]

    def gztpzg(self, g: np.ndarray) -> np.ndarray:
        """G Z'PZ G = G - sigma2 * (C^-1)_ZZ for the covariance G; only the diagonal when G is diagonal."""
        if g.ndim == 1:
            return g - self.sigma2 * np.diag(self.cinv_random)
        M = g - self.sigma2 * self.cinv_random
        return 0.5 * (M + M.T)


def _row_sorted_qr(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pivoted QR of A with rows presorted by decreasing norm; rows of Q come back in A's order."""
    order = np.argsort(-np.linalg.norm(A, axis=1), kind="stable")
    Q, U, piv = linalg.qr(A[order], mode="economic", pivoting=True)
    rows = np.empty_like(Q)
    rows[order] = Q
    return rows, U, piv


def _logdet_triangular(U: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(U)))))


def _solve_by_qr(cross: CrossProducts, ginv_root: np.ndarray, sigma2: float) -> dict:
    k = cross.n_fixed
    n_root = ginv_root.shape[0]
    penalty = np.hstack([np.zeros((n_root, k)), np.sqrt(sigma2) * ginv_root])
    A = np.vstack([cross.root, penalty])
    b = np.concatenate([cross.qty, np.zeros(n_root)])
    Q, U, piv = _row_sorted_qr(A)
    try:
        U_inv = linalg.solve_triangular(U, np.eye(U.shape[0]))
    except linalg.LinAlgError as e:
        raise RankError(f"penalized least squares system is singular: {e}") from e
    solution = np.empty(U.shape[0])
    solution[piv] = U_inv @ (Q.T @ b)
    cinv = np.empty_like(U)
    cinv[np.ix_(piv, piv)] = U_inv @ U_inv.T

    Q_root, U_root, _ = _row_sorted_qr(ginv_root)
    d = np.abs(np.diag(U_root))
    if d.size < ginv_root.shape[1] or d.min() <= np.finfo(float).eps * d.max() * d.size:
        raise RankError("random-effects precision is singular")
    return {
        "solution": solution,
        "cinv": 0.5 * (cinv + cinv.T),
        "logdet_c": _logdet_triangular(U),
        "logdet_ginv": _logdet_triangular(U_root),
        "leverage": np.sum(Q_root**2, axis=1) - np.sum(Q[-n_root:] ** 2, axis=1),
    }


def solve_penalized_system(
    X: np.ndarray,
    Z: np.ndarray,
    ginv: np.ndarray,
    sigma2: float,
    y: np.ndarray,
    w: np.ndarray,
    cross: CrossProducts | None = None,
    ginv_root: np.ndarray | None = None,
) -> PenalizedSolution:
    """
    Minimize |sqrt(w) (y - X beta - Z alpha)|^2 + sigma2 * alpha' G^-1 alpha.

    `ginv` is the diagonal of G^-1 or the dense matrix. With `ginv_root`
    (R'R = G^-1) the system is solved by a pivoted QR of the stacked data and
    penalty roots instead of a Cholesky factorization of the normal equations,
    and the solution carries one leverage per row of R, in R's order.
    """
    ginv = np.asarray(ginv, dtype=float)
    if not np.all(np.isfinite(ginv)):
        raise DataError("precision of the random effects has non-finite entries")
    if ginv.ndim == 1 and np.any(ginv <= 0):
        raise DataError("precision of the random effects must be positive")
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise DataError(f"sigma2 must be positive and finite, got {sigma2}")

    if cross is None:
        y = as_vector(y, "y", X.shape[0])
        w = as_vector(w, "weights", X.shape[0])
        if np.any(w < 0) or not np.any(w > 0):
            raise DataError("weights must be non-negative and not all zero")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise DataError("design matrices have non-finite entries")
        cross = CrossProducts.build(X, Z, y, w)

    k = cross.n_fixed
    fixed_block = cross.gram[:k, :k]
    if np.linalg.matrix_rank(fixed_block) < k:
        raise RankError(f"fixed-effects block is rank deficient (rank {np.linalg.matrix_rank(fixed_block)} < {k})")

    if ginv_root is not None:
        qr = _solve_by_qr(cross, ginv_root, sigma2)
        solution = qr.pop("solution")
        return PenalizedSolution(beta=solution[:k], alpha=solution[k:], ginv=ginv, sigma2=sigma2, **qr)

    lhs = cross.gram.copy()
    random_block = lhs[k:, k:]
    if ginv.ndim == 1:
        random_block[np.diag_indices_from(random_block)] += sigma2 * ginv
        logdet_ginv = float(np.sum(np.log(ginv)))
    else:
        random_block += sigma2 * ginv
        logdet_ginv = float(np.linalg.slogdet(ginv)[1])

    try:
        factor = linalg.cho_factor(lhs)
    except linalg.LinAlgError as e:
        raise RankError(f"penalized normal equations are not positive definite: {e}") from e
    solution = linalg.cho_solve(factor, cross.rhs)
    cinv = linalg.cho_solve(factor, np.eye(lhs.shape[0]))
    return PenalizedSolution(
        beta=solution[:k],
        alpha=solution[k:],
        cinv=0.5 * (cinv + cinv.T),
        ginv=ginv,
        sigma2=sigma2,
        logdet_c=_logdet_triangular(factor[0]),
        logdet_ginv=logdet_ginv,
    )


def _solve_at(
    model: PrecisionModel, y: np.ndarray, w: np.ndarray, cross: CrossProducts | None = None
) -> PenalizedSolution:
    parts = model.parts
    root = None if parts.is_diagonal else root_shares(parts, model.tau2)[0]
    return solve_penalized_system(parts.X, parts.Z, precision_matrix(model), model.sigma2, y, w, cross, root)


def effective_dimensions(solution: PenalizedSolution, parts: MixedParts, tau2) -> np.ndarray:
    """
    ed_l = trace(Z'PZ G Lambda_l G) / tau2_l for every component.

    For root solves ed_l = sum_r S[r, l] * leverage_r with the shares S of
    root_shares, so no difference of two large traces is ever formed.
    """
    tau2 = np.asarray(tau2, dtype=float)
    if solution.leverage is not None:
        _, shares = root_shares(parts, tau2)
        ed = shares.T @ solution.leverage
    else:
        ed = component_traces(parts, solution.gztpzg(covariance(parts, tau2))) / tau2
    return np.maximum(ed, 0.0)


def restricted_deviance(solution: PenalizedSolution, parts: MixedParts, tau2, rss: float, n_obs: int) -> float:
    """
    -2 log restricted likelihood at the solution's variance parameters, constants dropped:

        (n - k - m) log sigma2 + log|C| + log|G| + (rss + sigma2 sum_l quad_l / tau2_l) / sigma2

    with C the penalized normal-equation matrix. Equals logdet V + logdet X'V^-1X + y'Py
    when every weight is one.
    """
    sigma2 = solution.sigma2
    penalty = float(np.sum(component_quadratics(parts, solution.alpha) / np.asarray(tau2, dtype=float)))
    dof = n_obs - parts.n_fixed - parts.n_random
    return float(dof * np.log(sigma2) + solution.logdet_c - solution.logdet_ginv + (rss + sigma2 * penalty) / sigma2)


def sop_step(alpha: np.ndarray, ed: np.ndarray, parts: MixedParts, floor: float = 0.0) -> tuple[np.ndarray, list[int]]:
    """
    tau2_l = alpha' Lambda_l alpha / ed_l, floored.

    Components with ed_l below COLLAPSE_ED are reported as collapsed and set to the floor.
    """
    quad = component_quadratics(parts, alpha)
    ed = np.asarray(ed, dtype=float)
    collapsed = np.flatnonzero(ed < COLLAPSE_ED)
    tau2 = np.full(ed.shape, floor)
    live = ed >= COLLAPSE_ED
    tau2[live] = quad[live] / ed[live]
    return np.maximum(tau2, floor), [int(i) for i in collapsed]


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    if new.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old) / (old + 1e-10)))


class _SweepState(ArrayModel):
    solution: PenalizedSolution
    tau2: np.ndarray
    sigma2: float
    ed: np.ndarray
    trace: list[IterationRecord]
    converged: bool
    iterations: int
    collapsed: list[int]


def _sop_sweeps(
    y: np.ndarray,
    w: np.ndarray,
    parts: MixedParts,
    config: FitConfig,
    tau2: np.ndarray,
    sigma2: float,
    floor: float,
    estimate_sigma2: bool,
) -> _SweepState:
    """
    SOP sweeps until the variance parameters settle.

    A sweep has converged when the relative change of sigma2 and of every
    tau2_l with ed_l >= NEGLIGIBLE_ED is below tol, or when the fit itself has
    stopped moving: sigma2, total ed, linear predictor (relative to sd(y))
    and restricted deviance all change by less than tol from the previous
    sweep.
    """
    X, Z = parts.X, parts.Z
    cross = CrossProducts.build(X, Z, y, w)
    rank_x = np.linalg.matrix_rank(X[w > 0])
    n_eff = int(np.count_nonzero(w > 0))
    spread = np.sqrt(sample_variance(y[w > 0]))

    trace: list[IterationRecord] = []
    converged = False
    collapsed: list[int] = []
    previous = None
    it = 0
    for it in range(1, config.max_iter + 1):
        solution = _solve_at(PrecisionModel(parts=parts, tau2=tau2, sigma2=sigma2), y, w, cross)
        ed = effective_dimensions(solution, parts, tau2)
        eta = X @ solution.beta + Z @ solution.alpha
        rss = float(np.sum(w * (y - eta) ** 2))
        reml = restricted_deviance(solution, parts, tau2, rss, n_eff)
        trace.append(
            IterationRecord(iteration=it, tau2=tau2.tolist(), sigma2=sigma2, ed=ed.tolist(), deviance=rss, reml=reml)
        )

        new_tau2, collapsed = sop_step(solution.alpha, ed, parts, floor)
        new_sigma2 = sigma2
        if estimate_sigma2:
            denom = n_eff - rank_x - ed.sum()
            if denom <= 0:
                logger.warning(f"Residual degrees of freedom {denom:.3g} <= 0; sigma2 update uses 1")
                denom = 1.0
            new_sigma2 = max(rss / denom, floor)

        sigma_change = _relative_change(np.array([new_sigma2]), np.array([sigma2]))
        active = ed >= NEGLIGIBLE_ED
        change = max(sigma_change, _relative_change(new_tau2[active], tau2[active]))
        settled = False
        if previous is not None:
            prev_eta, prev_ed, prev_reml = previous
            fit_change = max(
                sigma_change,
                abs(ed.sum() - prev_ed) / (1.0 + ed.sum()),
                float(np.max(np.abs(eta - prev_eta))) / spread,
                abs(reml - prev_reml) / (1.0 + abs(reml)),
            )
            settled = fit_change < config.tol
        previous = (eta, float(ed.sum()), reml)
        logger.debug(
            f"SOP iteration {it}: change={change:.3e} sigma2={new_sigma2:.6g} ed={ed.sum():.4f} reml={reml:.8g}"
        )
        tau2, sigma2 = new_tau2, new_sigma2
        if change < config.tol or settled:
            converged = True
            break

    # Final solve so that beta, alpha and ed belong to the returned variance parameters.
    solution = _solve_at(PrecisionModel(parts=parts, tau2=tau2, sigma2=sigma2), y, w, cross)
    ed = effective_dimensions(solution, parts, tau2)
    return _SweepState(
        solution=solution,
        tau2=tau2,
        sigma2=sigma2,
        ed=ed,
        trace=trace,
        converged=converged,
        iterations=it,
        collapsed=collapsed,
    )


def _prior_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = as_vector(weights, "weights", n)
    if np.any(w < 0) or not np.any(w > 0):
        raise DataError("weights must be non-negative and not all zero")
    return w


def fit_gaussian(y, parts: MixedParts, config: FitConfig | None = None, weights=None) -> FitResult:
    config = config or FitConfig()
    y = as_vector(y, "y", parts.n_obs)
    w = _prior_weights(weights, y.size)
    if y.size <= np.linalg.matrix_rank(parts.X) + 1:
        raise DataError(f"need more than rank(X) + 1 observations, got n={y.size}")

    scale = sample_variance(y)
    floor = config.variance_floor * scale
    tau2 = np.full(parts.n_components, config.tau2_init)
    sigma2 = config.sigma2_init if config.sigma2_init is not None else scale
    logger.info(
        f"Gaussian SOP fit: n={y.size}, fixed={parts.n_fixed}, random={parts.n_random}, "
        f"components={parts.n_components}"
    )

    state = _sop_sweeps(y, w, parts, config, tau2, sigma2, floor, estimate_sigma2=True)
    sol = state.solution
    eta = parts.X @ sol.beta + parts.Z @ sol.alpha
    deviance = float(np.sum(w * (y - eta) ** 2))
    _log_outcome(state)
    return FitResult(
        beta=sol.beta,
        alpha=sol.alpha,
        tau2=state.tau2,
        sigma2=state.sigma2,
        ed=state.ed,
        fitted=eta,
        linear_predictor=eta,
        iterations=state.iterations,
        trace=state.trace,
        converged=state.converged,
        collapsed=state.collapsed,
        family=Family.GAUSSIAN,
        deviance=deviance,
    )


def poisson_deviance(y: np.ndarray, mu: np.ndarray, w: np.ndarray | None = None) -> float:
    unit = 2.0 * (xlogy(y, y) - xlogy(y, mu) - (y - mu))
    return float(np.sum(unit if w is None else w * unit))


def fit_glm(y, parts: MixedParts, config: FitConfig | None = None, weights=None) -> FitResult:
    """
    Poisson (log link) fit: IRLS on working response z = eta + (y - mu) / mu
    with weights mu, each step a warm-started SOP fit with dispersion 1.
    """
    config = config or FitConfig(family=Family.POISSON)
    y = as_vector(y, "y", parts.n_obs)
    prior = _prior_weights(weights, y.size)
    if np.any(y < 0):
        raise DataError(f"Poisson response must be non-negative, found {y.min()}")
    if not np.any(y > 0):
        raise DegenerateDataError("Poisson response is identically zero")
    if not np.allclose(y, np.round(y)):
        logger.warning("Poisson response has non-integer values; fitting as quasi-counts")

    X, Z = parts.X, parts.Z
    mu = y + 0.1
    eta = np.log(mu)
    floor = config.variance_floor * sample_variance(y)
    tau2 = np.full(parts.n_components, config.tau2_init)
    logger.info(f"Poisson SOP fit: n={y.size}, random={parts.n_random}, components={parts.n_components}")

    trace: list[IterationRecord] = []
    converged = failed = False
    total_inner = 0
    it = 0
    for it in range(1, config.max_iter + 1):
        z = eta + (y - mu) / mu
        w = prior * mu
        state = _sop_sweeps(z, w, parts, config, tau2, 1.0, floor, estimate_sigma2=False)
        total_inner += state.iterations
        tau2 = state.tau2
        eta_new = X @ state.solution.beta + Z @ state.solution.alpha

        halvings = 0
        while np.max(np.abs(eta_new)) > config.max_eta and halvings < config.max_halvings:
            eta_new = 0.5 * (eta + eta_new)
            halvings += 1
        if halvings:
            logger.warning(f"IRLS iteration {it}: linear predictor diverging, step halved {halvings} time(s)")
        if np.max(np.abs(eta_new)) > config.max_eta:
            logger.warning(f"IRLS iteration {it}: still divergent after {halvings} halvings; stopping")
            failed = True
            break

        change = float(np.max(np.abs(eta_new - eta)) / (np.max(np.abs(eta)) + 1e-10))
        eta = eta_new
        mu = np.exp(eta)
        trace.append(
            IterationRecord(
                iteration=it,
                tau2=tau2.tolist(),
                sigma2=1.0,
                ed=state.ed.tolist(),
                deviance=poisson_deviance(y, mu, prior),
            )
        )
        logger.debug(f"IRLS iteration {it}: change={change:.3e} inner={state.iterations}")
        if change < config.tol:
            converged = True
            break

    # Report beta, alpha and ed at the final IRLS weights.
    z = eta + (y - mu) / mu
    w = prior * mu
    final = _solve_at(PrecisionModel(parts=parts, tau2=tau2), z, w)
    ed = effective_dimensions(final, parts, tau2)
    eta = X @ final.beta + Z @ final.alpha
    mu = np.exp(eta)
    _, collapsed = sop_step(final.alpha, ed, parts, floor)

    converged = converged and not failed
    if not converged:
        logger.warning(f"Poisson fit did not converge after {it} IRLS iterations")
    else:
        logger.info(f"Poisson fit converged: {it} IRLS iterations ({total_inner} SOP sweeps), ed={ed.sum():.3f}")
    return FitResult(
        beta=final.beta,
        alpha=final.alpha,
        tau2=tau2,
        sigma2=1.0,
        ed=ed,
        fitted=mu,
        linear_predictor=eta,
        iterations=it,
        trace=trace,
        converged=converged,
        collapsed=collapsed,
        family=Family.POISSON,
        deviance=poisson_deviance(y, mu, prior),
    )


def fit(y, parts: MixedParts, config: FitConfig | None = None, weights=None) -> FitResult:
    """Dispatch on the family with the BLAS/LAPACK pools capped at settings.threads."""
    config = config or FitConfig()
    with threadpool_limits(limits=get_settings().threads):
        if config.family == Family.POISSON:
            return fit_glm(y, parts, config, weights)
        return fit_gaussian(y, parts, config, weights)


def _log_outcome(state: _SweepState) -> None:
    if state.collapsed:
        logger.warning(f"{len(state.collapsed)} variance component(s) collapsed to the floor")
    if state.converged:
        logger.info(f"SOP converged in {state.iterations} iterations, ed={state.ed.sum():.3f}")
    else:
        logger.warning(f"SOP did not converge in {state.iterations} iterations")


def coefficients_2d(result: FitResult, parts: MixedParts) -> np.ndarray:
    """Tensor B-spline coefficients (dimension-1 index fastest) of a 2D fit."""
    return tensor_coefficients(parts, result.beta, result.alpha)
