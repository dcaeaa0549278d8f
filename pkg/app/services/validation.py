"""
Built-in self checks run by `validate`.

Every check builds its own small seeded instance and compares the engine
against an independent dense computation. Checks are independent of each
other and run on a thread pool capped by Settings.threads.
"""

import logging
import time
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from app.config import get_settings
from app.models import AdaptiveSmoothSpec, BasisSpec, CheckResult, FitConfig, MixedParts
from app.services.basis import bspline_design, difference_matrix
from app.services.mixed_model import precision, reparameterize_1d, reparameterize_2d
from app.services.penalty import (
    adaptive_penalty_1d,
    adaptive_penalty_2d,
    anisotropic_penalty,
    smoothing_basis_1d,
    smoothing_basis_2d,
    standard_penalty,
)
from app.services.reml_oracle import marginal_covariance, optimize_reml, projection, reml_value
from app.services.simulation import hetero_mean, surface_mean
from app.services.sop_solver import fit_gaussian

logger = logging.getLogger(__name__)

Check = Callable[[int], tuple[bool, str]]


def _instance_1d(seed: int, n: int = 100, nseg: int = 7, p: int = 2) -> tuple[np.ndarray, MixedParts]:
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, n))
    y = hetero_mean(x) + 0.2 * rng.standard_normal(n)
    spec = BasisSpec(xmin=float(x.min()), xmax=float(x.max()), nseg=nseg).check()
    D = difference_matrix(spec.n_basis, spec.diff_order)
    C = smoothing_basis_1d(spec.n_basis, spec.diff_order, AdaptiveSmoothSpec(p=p))
    return y, reparameterize_1d(bspline_design(x, spec), D, x, C)


def _instance_2d(seed: int, n: int = 100, nseg: int = 3, p: int = 2) -> tuple[np.ndarray, MixedParts]:
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(0.0, 1.0, n), rng.uniform(0.0, 1.0, n)
    y = surface_mean(x1, x2) + 0.1 * rng.standard_normal(n)
    specs = [BasisSpec(xmin=float(x.min()), xmax=float(x.max()), nseg=nseg).check() for x in (x1, x2)]
    D1, D2 = (difference_matrix(s.n_basis, s.diff_order) for s in specs)
    C1, C2 = smoothing_basis_2d(specs[0].n_basis, specs[1].n_basis, 2, 2, AdaptiveSmoothSpec(p=(p, p, p, p)))
    parts = reparameterize_2d(bspline_design(x1, specs[0]), bspline_design(x2, specs[1]), D1, D2, C1, C2)
    return y, parts


def dense_ed_total(parts: MixedParts, tau2, sigma2: float) -> float:
    """trace(Z G Z' P), with Z G Z' = V - sigma2 I."""
    V = marginal_covariance(tau2, sigma2, parts)
    P = projection(V, parts.X)
    return float(np.trace((V - sigma2 * np.eye(V.shape[0])) @ P))


def check_reml_agreement(seed: int) -> tuple[bool, str]:
    y, parts = _instance_1d(seed)
    result = fit_gaussian(y, parts, FitConfig(tol=1e-10, max_iter=5000))
    sop = reml_value(result.tau2, result.sigma2, y, parts)
    oracle = optimize_reml(y, parts, threads=1)
    gap = sop - oracle.minus2_reml
    return gap <= 1e-4, f"-2REML sop={sop:.8f} oracle={oracle.minus2_reml:.8f} gap={gap:.2e}"


def _trace_gaps(y: np.ndarray, parts: MixedParts) -> list[float]:
    result = fit_gaussian(y, parts, FitConfig(tol=1e-8, max_iter=500))
    gaps = []
    for record in result.trace:
        total = float(np.sum(record.ed))
        dense = dense_ed_total(parts, record.tau2, record.sigma2)
        gaps.append(abs(total - dense) / (1.0 + total))
    return gaps


def check_trace_identity_1d(seed: int) -> tuple[bool, str]:
    gaps = _trace_gaps(*_instance_1d(seed))
    return max(gaps) <= 1e-8, f"max relative gap {max(gaps):.2e} over {len(gaps)} iterations"


def check_trace_identity_2d(seed: int) -> tuple[bool, str]:
    gaps = _trace_gaps(*_instance_2d(seed))
    return max(gaps) <= 1e-8, f"max relative gap {max(gaps):.2e} over {len(gaps)} iterations"


def check_penalty_identity_2d(seed: int) -> tuple[bool, str]:
    """theta' P(phi) theta == sigma2 alpha' G^-1 alpha for theta = T omega and phi_l = sigma2 / tau2_l."""
    rng = np.random.default_rng(seed)
    c1, c2, q = 7, 6, 2
    D1, D2 = difference_matrix(c1, q), difference_matrix(c2, q)
    C1, C2 = smoothing_basis_2d(c1, c2, q, q, AdaptiveSmoothSpec(p=(2, 3, 2, 2)))
    x1, x2 = rng.uniform(0.0, 1.0, 40), rng.uniform(0.0, 1.0, 40)
    specs = [BasisSpec(xmin=0.0, xmax=1.0, nseg=c - 3) for c in (c1, c2)]
    parts = reparameterize_2d(bspline_design(x1, specs[0]), bspline_design(x2, specs[1]), D1, D2, C1, C2)

    tau2 = rng.uniform(0.5, 2.0, parts.n_components)
    sigma2 = 0.7
    beta, alpha = rng.standard_normal(parts.n_fixed), rng.standard_normal(parts.n_random)
    omega = np.zeros(c1 * c2)
    omega[parts.fixed_index], omega[parts.random_index] = beta, alpha
    theta = parts.transform @ omega

    phi1, phi2 = parts.split(sigma2 / tau2)
    lhs = adaptive_penalty_2d(D1, D2, C1, C2, phi1, phi2).quadratic(theta)
    ginv = precision(parts, tau2)
    rhs = sigma2 * float(alpha @ ginv @ alpha)
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return rel <= 1e-8, f"relative difference {rel:.2e}"


def check_partition_of_unity(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    spec = BasisSpec(xmin=-1.5, xmax=2.0, nseg=int(rng.integers(3, 30)), degree=int(rng.integers(0, 6))).check()
    x = np.append(rng.uniform(spec.xmin, spec.xmax, 200), [spec.xmin, spec.xmax])
    B = bspline_design(x, spec).values
    err = float(np.abs(B.sum(axis=1) - 1.0).max())
    return err <= 1e-12 and B.min() >= 0.0, f"max |row sum - 1| = {err:.2e}"


def check_difference_annihilation(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    c, q = int(rng.integers(8, 40)), int(rng.integers(1, 5))
    j = np.arange(c, dtype=float)
    poly = np.polynomial.polynomial.polyval(j, rng.standard_normal(q))
    err = float(np.abs(difference_matrix(c, q).values @ poly).max())
    return err <= 1e-8 * (1.0 + np.abs(poly).max()), f"max |D poly| = {err:.2e} (c={c}, q={q})"


def check_penalty_reduction(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    c, q = 25, 2
    lam, gamma = rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0, 2)
    D = difference_matrix(c, q)
    ones = smoothing_basis_1d(c, q, AdaptiveSmoothSpec(p=1, degree_smooth=0))
    err1 = float(np.abs(adaptive_penalty_1d(D, ones, [lam]).values - standard_penalty(D, lam).values).max())

    D1, D2 = difference_matrix(8, q), difference_matrix(6, q)
    C1, C2 = smoothing_basis_2d(8, 6, q, q, AdaptiveSmoothSpec(p=(1, 1, 1, 1), degree_smooth=0))
    P = adaptive_penalty_2d(D1, D2, C1, C2, [gamma[0]], [gamma[1]]).values
    err2 = float(np.abs(P - anisotropic_penalty(D1, D2, gamma[0], gamma[1]).values).max())
    scale = 1.0 + max(lam, gamma.max())
    return max(err1, err2) <= 1e-12 * scale, f"1D {err1:.2e}, 2D {err2:.2e}"


def check_determinism(seed: int) -> tuple[bool, str]:
    y, parts = _instance_1d(seed, p=3)
    first = fit_gaussian(y, parts)
    second = fit_gaussian(y, parts)
    same = np.array_equal(first.fitted, second.fitted) and np.array_equal(first.tau2, second.tau2)
    return bool(same), "identical refits" if same else "refits differ"


CHECKS: dict[str, Check] = {
    "reml_agreement": check_reml_agreement,
    "trace_identity_1d": check_trace_identity_1d,
    "trace_identity_2d": check_trace_identity_2d,
    "penalty_identity_2d": check_penalty_identity_2d,
    "partition_of_unity": check_partition_of_unity,
    "difference_annihilation": check_difference_annihilation,
    "penalty_reduction": check_penalty_reduction,
    "determinism": check_determinism,
}


def _run_one(name: str, seed: int) -> CheckResult:
    start = time.perf_counter()
    try:
        passed, detail = CHECKS[name](seed)
    except Exception as e:
        logger.error(f"Check {name} raised: {e}")
        passed, detail = False, f"error: {e}"
    return CheckResult(name=name, passed=bool(passed), detail=detail, seconds=time.perf_counter() - start)


def run_checks(seed: int = 0, names: list[str] | None = None, threads: int | None = None) -> list[CheckResult]:
    names = names or list(CHECKS)
    threads = threads or get_settings().threads
    # one BLAS thread per check worker
    with threadpool_limits(limits=1), ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(executor.map(lambda name: _run_one(name, seed), names))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.warning(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
    else:
        logger.info(f"All {len(results)} checks passed")
    return results
