"""
Brute-force restricted likelihood for small mixed models.

Everything here works with dense n x n matrices, so it is capped to small
problems. It only uses the model construction (X, Z and the precision terms)
and never the SOP solver, which makes it usable as an independent check of
the fixed point.
"""

import itertools
import logging
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg, optimize
from threadpoolctl import threadpool_limits

from app.config import get_settings
from app.exceptions import ConfigurationError, DomainError, EvaluationError, RankError
from app.models import MixedParts, RemlEvaluation, SearchStage
from app.services.mixed_model import covariance
from app.utils.validators import as_vector, sample_variance

logger = logging.getLogger(__name__)

MAX_PARAMETERS = 6
GRID_BUDGET = 1500


def _covariance(parts: MixedParts, tau2) -> np.ndarray:
    g = covariance(parts, tau2)
    return np.diag(g) if g.ndim == 1 else g


def _check_size(n: int, max_n: int | None) -> None:
    cap = max_n if max_n is not None else get_settings().oracle_max_n
    if n > cap:
        raise ConfigurationError(f"dense REML evaluation is limited to n <= {cap}, got n={n}")


def marginal_covariance(tau2, sigma2: float, parts: MixedParts) -> np.ndarray:
    """V = sigma2 I + Z G Z'."""
    Z = parts.Z
    return sigma2 * np.eye(Z.shape[0]) + Z @ _covariance(parts, tau2) @ Z.T


def projection(V: np.ndarray, X: np.ndarray) -> np.ndarray:
    """P = V^-1 - V^-1 X (X' V^-1 X)^-1 X' V^-1."""
    vinv = linalg.cho_solve(linalg.cho_factor(V), np.eye(V.shape[0]))
    vx = vinv @ X
    return vinv - vx @ linalg.solve(X.T @ vx, vx.T, assume_a="pos")


def reml_value(tau2, sigma2: float, y, parts: MixedParts, max_n: int | None = None) -> float:
    """
    -2 log restricted likelihood without its constant:
    log det V + log det(X' V^-1 X) + y' P y.
    """
    X = parts.X
    y = as_vector(y, "y", X.shape[0])
    _check_size(y.size, max_n)
    tau2 = np.asarray(tau2, dtype=float)
    if not sigma2 > 0 or np.any(tau2 <= 0):
        raise DomainError(f"variance parameters must be positive: tau2={tau2}, sigma2={sigma2}")

    try:
        V = marginal_covariance(tau2, sigma2, parts)
        v_factor = linalg.cho_factor(V)
        logdet_v = 2.0 * np.sum(np.log(np.diag(v_factor[0])))
        vinv_x = linalg.cho_solve(v_factor, X)
        vinv_y = linalg.cho_solve(v_factor, y)
        xtvx_factor = linalg.cho_factor(X.T @ vinv_x)
        logdet_xtvx = 2.0 * np.sum(np.log(np.diag(xtvx_factor[0])))
        gls = linalg.cho_solve(xtvx_factor, X.T @ vinv_y)
    except (linalg.LinAlgError, RankError) as e:
        raise EvaluationError(f"singular matrix in REML evaluation: {e}") from e

    ypy = float(y @ vinv_y - (X.T @ vinv_y) @ gls)
    return float(logdet_v + logdet_xtvx + ypy)


class _Objective:
    """-2 REML in log-variance coordinates (tau2..., sigma2); failures score +inf."""

    def __init__(self, y: np.ndarray, parts: MixedParts, max_n: int | None):
        self.y = y
        self.parts = parts
        self.max_n = max_n
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, log_params: np.ndarray) -> float:
        with self._lock:
            self.calls += 1
        params = np.exp(np.asarray(log_params, dtype=float))
        try:
            value = reml_value(params[:-1], params[-1], self.y, self.parts, self.max_n)
        except (EvaluationError, DomainError):
            return np.inf
        return value if np.isfinite(value) else np.inf


def search_bounds(y: np.ndarray, n_components: int, floor: float = 1e-10) -> np.ndarray:
    """Log-space box: tau2 in [floor, 1e6] * var(y), sigma2 in [floor, 10] * var(y)."""
    v = sample_variance(y)
    lo = np.log(floor * v)
    rows = [(lo, np.log(1e6 * v))] * n_components + [(lo, np.log(10.0 * v))]
    return np.array(rows)


def _coordinate_descent(objective: _Objective, start: np.ndarray, bounds: np.ndarray, max_sweeps: int = 100):
    point = start.copy()
    best = objective(point)
    for _ in range(max_sweeps):
        previous = best
        for i, (lo, hi) in enumerate(bounds):

            def along(t, i=i):
                trial = point.copy()
                trial[i] = t
                return objective(trial)

            res = optimize.minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
            if res.fun < best:
                point[i] = res.x
                best = float(res.fun)
        if previous - best < 1e-10:
            break
    return point, best


def _search(
    objective: _Objective, bounds: np.ndarray, starts: list[tuple] | None, threads: int
) -> tuple[np.ndarray, float, list[SearchStage]]:
    k = bounds.shape[0]
    schedule: list[SearchStage] = []

    per_axis = max(3, int(round(GRID_BUDGET ** (1.0 / k))))
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in bounds]
    grid = [np.array(p) for p in itertools.product(*axes)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        values = list(executor.map(objective, grid))
    i_best = int(np.argmin(values))
    schedule.append(SearchStage(stage=f"grid {per_axis}^{k}", evaluations=len(grid), best=float(values[i_best])))

    candidates = [grid[i_best]]
    for tau2, sigma2 in starts or []:
        log_start = np.log(np.append(np.asarray(tau2, dtype=float), sigma2))
        candidates.append(np.clip(log_start, bounds[:, 0], bounds[:, 1]))

    best_point, best_value = grid[i_best], float(values[i_best])
    for j, start in enumerate(candidates):
        before = objective.calls
        point, value = _coordinate_descent(objective, start, bounds)
        schedule.append(
            SearchStage(stage=f"coordinate sweeps from start {j}", evaluations=objective.calls - before, best=value)
        )
        if value < best_value:
            best_point, best_value = point, value

    before = objective.calls
    polish = optimize.minimize(
        objective,
        best_point,
        method="Nelder-Mead",
        bounds=[tuple(b) for b in bounds],
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000},
    )
    schedule.append(
        SearchStage(stage="nelder-mead polish", evaluations=objective.calls - before, best=float(polish.fun))
    )
    if polish.fun < best_value:
        best_point, best_value = polish.x, float(polish.fun)
    return best_point, best_value, schedule


def optimize_reml(
    y,
    parts: MixedParts,
    starts: list[tuple] | None = None,
    threads: int | None = None,
    max_n: int | None = None,
) -> RemlEvaluation:
    """
    Minimize -2 REML over (tau2, sigma2) in log space: a coarse grid scan,
    coordinate-wise bounded Brent sweeps from the best grid point and from
    every `(tau2, sigma2)` start, then a Nelder-Mead polish of the winner.

    `threads` sizes the grid pool and caps the BLAS/LAPACK pools.
    """
    y = as_vector(y, "y", parts.n_obs)
    _check_size(y.size, max_n)
    k = parts.n_components + 1
    if k > MAX_PARAMETERS:
        raise ConfigurationError(f"oracle handles at most {MAX_PARAMETERS} variance parameters, got {k}")

    threads = threads or get_settings().threads
    objective = _Objective(y, parts, max_n)
    bounds = search_bounds(y, parts.n_components)
    with threadpool_limits(limits=threads):
        best_point, best_value, schedule = _search(objective, bounds, starts, threads)

    params = np.exp(best_point)
    logger.info(f"REML oracle: -2REML={best_value:.8f} after {objective.calls} evaluations")
    return RemlEvaluation(
        minus2_reml=best_value,
        tau2=params[:-1],
        sigma2=float(params[-1]),
        evaluations=objective.calls,
        schedule=schedule,
    )
