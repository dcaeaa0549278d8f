"""
B-spline design matrices on equally spaced knots and difference operators.
"""

import logging

import numpy as np
from scipy.interpolate import BSpline

from app.exceptions import ConfigurationError, DomainError
from app.models import BasisSpec, DesignMatrix, DifferenceMatrix
from app.utils.validators import as_vector

logger = logging.getLogger(__name__)


def make_knots(spec: BasisSpec) -> np.ndarray:
    """
    nseg + 1 equally spaced knots on [xmin, xmax], extended by `degree` knots
    on each side with the same spacing (nseg + 2 * degree + 1 in total).
    """
    spec.check()
    dx = spec.spacing
    knots = spec.xmin + dx * np.arange(-spec.degree, spec.nseg + spec.degree + 1, dtype=float)
    # Pin the domain ends so boundary points never fall outside by rounding.
    knots[spec.degree] = spec.xmin
    knots[spec.degree + spec.nseg] = spec.xmax
    return knots


def bspline_design(x, spec: BasisSpec) -> DesignMatrix:
    """
    n x (nseg + degree) matrix of B-spline values at x.

    Points equal to xmax belong to the last segment, so every row sums to one.
    """
    knots = make_knots(spec)
    x = as_vector(x, "x")
    tol = 1e-10 * (spec.xmax - spec.xmin)
    outside = np.flatnonzero((x < spec.xmin - tol) | (x > spec.xmax + tol))
    if outside.size:
        i = int(outside[0])
        raise DomainError(
            f"x[{i}] = {x[i]} outside basis domain [{spec.xmin}, {spec.xmax}] "
            f"({outside.size} point(s) out of range)",
            index=i,
        )
    x = np.clip(x, spec.xmin, spec.xmax)
    values = BSpline.design_matrix(x, knots, spec.degree).toarray()
    return DesignMatrix(values=values, spec=spec)


def difference_matrix(c: int, q: int) -> DifferenceMatrix:
    """(c - q) x c matrix with (D theta)_k = Delta^q theta_{k+q}."""
    if q < 1:
        raise ConfigurationError(f"difference order must be >= 1, got {q}")
    if c <= q:
        raise ConfigurationError(f"need more coefficients than the difference order: c={c}, q={q}")
    return DifferenceMatrix(values=np.diff(np.eye(c), n=q, axis=0), order=q)


def tensor_design(B1: DesignMatrix, B2: DesignMatrix) -> np.ndarray:
    """Row-wise tensor product; column j1 + c1 * j2 holds B1[:, j1] * B2[:, j2]."""
    b1, b2 = B1.values, B2.values
    if b1.shape[0] != b2.shape[0]:
        raise ConfigurationError(f"marginal designs differ in rows: {b1.shape[0]} vs {b2.shape[0]}")
    n = b1.shape[0]
    return np.einsum("ij,ik->ikj", b1, b2).reshape(n, b1.shape[1] * b2.shape[1])


def coefficient_positions(spec: BasisSpec) -> np.ndarray:
    """Covariate position (support centre) of each B-spline."""
    j = np.arange(spec.n_basis, dtype=float)
    return spec.xmin + (j + (1 - spec.degree) / 2) * spec.spacing


def difference_positions(spec: BasisSpec) -> np.ndarray:
    """Covariate position of each order-q coefficient difference."""
    k = np.arange(spec.n_basis - spec.diff_order, dtype=float)
    return spec.xmin + (k + spec.diff_order / 2 + (1 - spec.degree) / 2) * spec.spacing


def domain_of(x, pad: float = 0.0) -> tuple[float, float]:
    """Data range, widened by `pad` (fraction of the range) on both sides."""
    x = as_vector(x, "x")
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        raise ConfigurationError(f"covariate is constant ({lo}); cannot build a basis over it")
    width = hi - lo
    return lo - pad * width, hi + pad * width
