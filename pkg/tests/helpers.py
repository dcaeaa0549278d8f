"""
Independent reference computations for the tests plus seeded instance builders.

The reference functions use plain numpy loops and dense algebra only; they do
not call the code they check.
"""

import numpy as np

from app.models import AdaptiveSmoothSpec, BasisSpec
from app.services.basis import bspline_design, difference_matrix
from app.services.mixed_model import reparameterize_1d, reparameterize_2d
from app.services.penalty import smoothing_basis_1d, smoothing_basis_2d
from app.services.simulation import hetero_mean, surface_mean


def cox_de_boor(x: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    """B-spline values by the Cox-de Boor recursion; the last interval is closed on the right."""
    x = np.asarray(x, dtype=float)
    n_basis = len(knots) - degree - 1
    right = knots[-degree - 1]
    B = np.zeros((x.size, len(knots) - 1))
    for j in range(len(knots) - 1):
        B[(x >= knots[j]) & (x < knots[j + 1]), j] = 1.0
    at_right = x == right
    B[at_right] = 0.0
    B[at_right, n_basis - 1] = 1.0
    for k in range(1, degree + 1):
        nxt = np.zeros((x.size, len(knots) - 1 - k))
        for j in range(nxt.shape[1]):
            left_den = knots[j + k] - knots[j]
            right_den = knots[j + k + 1] - knots[j + 1]
            term = np.zeros(x.size)
            if left_den > 0:
                term += (x - knots[j]) / left_den * B[:, j]
            if right_den > 0:
                term += (knots[j + k + 1] - x) / right_den * B[:, j + 1]
            nxt[:, j] = term
        B = nxt
    return B[:, :n_basis]


def loop_penalty_1d(theta: np.ndarray, lam: np.ndarray, q: int) -> float:
    """sum_k lam_k (Delta^q theta)_k^2 with the differences taken one at a time."""
    d = np.asarray(theta, dtype=float)
    for _ in range(q):
        d = np.array([d[i + 1] - d[i] for i in range(d.size - 1)])
    return float(sum(l * v * v for l, v in zip(lam, d)))


def loop_penalty_2d(theta: np.ndarray, c1: int, c2: int, lam1: np.ndarray, lam2: np.ndarray, q: int) -> float:
    """
    Penalty on a c1 x c2 coefficient grid (theta[j1 + c1 * j2]): order-q differences
    along dimension 1 for every j2 weighted by lam1, then along dimension 2 for every j1.
    """
    grid = np.asarray(theta, dtype=float).reshape(c2, c1)
    along1 = np.diff(grid, n=q, axis=1).ravel()  # j2 slow, k1 fast
    along2 = np.diff(grid, n=q, axis=0).ravel()  # k2 slow, j1 fast
    return float(np.sum(lam1 * along1**2) + np.sum(lam2 * along2**2))


def dense_pspline(B: np.ndarray, D: np.ndarray, lam: float, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Fitted values and hat-matrix trace of the classical P-spline (B'B + lam D'D) theta = B'y."""
    lhs = B.T @ B + lam * D.T @ D
    theta = np.linalg.solve(lhs, B.T @ y)
    hat_trace = float(np.trace(np.linalg.solve(lhs, B.T @ B)))
    return B @ theta, hat_trace


def dense_reml_lambda(B: np.ndarray, D: np.ndarray, y: np.ndarray, q: int, lam: float) -> tuple[float, float]:
    """
    Profiled -2 REML of the single-lambda P-spline (sigma2 profiled out) and the
    matching sigma2, from the classical penalized least squares formulation.
    """
    n = y.size
    lhs = B.T @ B + lam * D.T @ D
    theta = np.linalg.solve(lhs, B.T @ y)
    r = y - B @ theta
    pen = lam * float(np.sum((D @ theta) ** 2))
    dof = n - q
    sigma2 = (r @ r + pen) / dof
    eig = np.linalg.eigvalsh(D @ D.T)
    logdet = np.linalg.slogdet(lhs)[1] - (D.shape[0]) * np.log(lam) - np.sum(np.log(eig))
    return float(dof * np.log(sigma2) + logdet), float(sigma2)


def make_1d(seed: int, n: int = 100, nseg: int = 7, p: int = 1, degree_smooth: int = 3, sigma: float = 0.2):
    """Seeded 1D instance: (x, y, spec, B, D, C, parts)."""
    r = np.random.default_rng(seed)
    x = np.sort(r.uniform(0.0, 1.0, n))
    y = hetero_mean(x) + sigma * r.standard_normal(n)
    spec = BasisSpec(xmin=float(x.min()), xmax=float(x.max()), nseg=nseg).check()
    B = bspline_design(x, spec)
    D = difference_matrix(spec.n_basis, spec.diff_order)
    C = smoothing_basis_1d(spec.n_basis, spec.diff_order, AdaptiveSmoothSpec(p=p, degree_smooth=degree_smooth))
    return x, y, spec, B, D, C, reparameterize_1d(B, D, x, C)


def make_2d(seed: int, n: int = 100, nseg: int = 3, p: tuple = (2, 2, 2, 2), sigma: float = 0.1):
    """Seeded 2D instance: (x1, x2, y, specs, B1, B2, D1, D2, C1, C2, parts)."""
    r = np.random.default_rng(seed)
    x1, x2 = r.uniform(0.0, 1.0, n), r.uniform(0.0, 1.0, n)
    y = surface_mean(x1, x2) + sigma * r.standard_normal(n)
    specs = [BasisSpec(xmin=float(x.min()), xmax=float(x.max()), nseg=nseg).check() for x in (x1, x2)]
    B1, B2 = bspline_design(x1, specs[0]), bspline_design(x2, specs[1])
    D1, D2 = (difference_matrix(s.n_basis, s.diff_order) for s in specs)
    C1, C2 = smoothing_basis_2d(specs[0].n_basis, specs[1].n_basis, 2, 2, AdaptiveSmoothSpec(p=p))
    return x1, x2, y, specs, B1, B2, D1, D2, C1, C2, reparameterize_2d(B1, B2, D1, D2, C1, C2)
