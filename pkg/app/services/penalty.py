"""
Standard and adaptive difference penalties in one and two dimensions.

The adaptive penalty replaces the single smoothing parameter by one weight per
coefficient difference, lambda = C phi, where C is an unpenalized B-spline
basis over the difference positions.
"""

import logging

import numpy as np

from app.exceptions import ConfigurationError
from app.models import AdaptiveSmoothSpec, BasisSpec, DifferenceMatrix, PenaltyMatrix, SmoothingBasis
from app.services.basis import bspline_design
from app.utils.validators import as_vector

logger = logging.getLogger(__name__)

PHI_FLOOR = 1e-10


def index_basis(rows: int, p: int, degree: int) -> np.ndarray:
    """
    rows x p B-spline basis evaluated at the integer positions 1..rows.

    p == 1 gives the constant column. The degree is lowered to p - 1 when the
    requested degree leaves fewer than one segment.
    """
    if p < 1:
        raise ConfigurationError(f"smoothing basis needs p >= 1, got {p}")
    if p > rows:
        raise ConfigurationError(f"smoothing basis size p={p} exceeds the {rows} positions it models")
    if p == 1:
        return np.ones((rows, 1))

    eff_degree = min(degree, p - 1)
    if eff_degree < degree:
        logger.info(f"Smoothing basis with p={p} uses degree {eff_degree} instead of {degree}")
    spec = BasisSpec(xmin=1.0, xmax=float(rows), nseg=p - eff_degree, degree=eff_degree, diff_order=1)
    values = bspline_design(np.arange(1, rows + 1, dtype=float), spec).values

    empty = np.flatnonzero(values.max(axis=0) <= 0)
    if empty.size:
        raise ConfigurationError(
            f"smoothing basis column {empty[0] + 1} touches no position (p={p}, rows={rows}); reduce p"
        )
    return values


def smoothing_basis_1d(c: int, q: int, spec: AdaptiveSmoothSpec) -> SmoothingBasis:
    """(c - q) x p basis modelling the per-difference smoothing parameters."""
    if spec.is_2d:
        raise ConfigurationError("smoothing_basis_1d needs a single p, got four factor sizes")
    if c - q < spec.p:
        raise ConfigurationError(f"p <= c - q violated: p={spec.p}, c - q={c - q}")
    return SmoothingBasis(values=index_basis(c - q, spec.p, spec.degree_smooth))


def smoothing_basis_2d(c1: int, c2: int, q1: int, q2: int, spec: AdaptiveSmoothSpec) -> tuple[SmoothingBasis, SmoothingBasis]:
    """
    Tensor smoothing bases for the two penalty directions.

    Rows of C1 follow the rows of (I_c2 kron D1): difference position along
    dimension 1 varies fastest, so C1 = kron(C12, C11). Likewise the rows of
    (D2 kron I_c1) put dimension 1 fastest, so C2 = kron(C22, C21).
    """
    if not spec.is_2d:
        raise ConfigurationError("smoothing_basis_2d needs four factor sizes (p11, p12, p21, p22)")
    p11, p12, p21, p22 = spec.p
    limits = {"p11": (p11, c1 - q1), "p12": (p12, c2), "p21": (p21, c1), "p22": (p22, c2 - q2)}
    for name, (p, rows) in limits.items():
        if p > rows:
            raise ConfigurationError(f"{name}={p} exceeds the {rows} positions it models")

    degree = spec.degree_smooth
    c11 = index_basis(c1 - q1, p11, degree)
    c12 = index_basis(c2, p12, degree)
    c21 = index_basis(c1, p21, degree)
    c22 = index_basis(c2 - q2, p22, degree)
    C1 = SmoothingBasis(values=np.kron(c12, c11))
    C2 = SmoothingBasis(values=np.kron(c22, c21))
    return C1, C2


def standard_penalty(D: DifferenceMatrix, lam: float) -> PenaltyMatrix:
    if not lam > 0:
        raise ConfigurationError(f"smoothing parameter must be positive, got {lam}")
    d = D.values
    return PenaltyMatrix(values=lam * (d.T @ d))


def floor_phi(phi, p: int) -> np.ndarray:
    """Positive smoothing parameters, floored at PHI_FLOOR * max(phi)."""
    phi = as_vector(phi, "phi")
    if phi.size != p:
        raise ConfigurationError(f"phi has {phi.size} entries, smoothing basis has {p} columns")
    if np.any(phi <= 0):
        raise ConfigurationError(f"phi must be strictly positive, got min {phi.min()}")
    return np.maximum(phi, PHI_FLOOR * phi.max())


def _weighted_gram(A: np.ndarray, w: np.ndarray) -> np.ndarray:
    P = A.T @ (w[:, None] * A)
    return 0.5 * (P + P.T)


def adaptive_penalty_1d(D: DifferenceMatrix, C: SmoothingBasis, phi) -> PenaltyMatrix:
    """sum_l phi_l D' diag(c_l) D, i.e. D' diag(C phi) D."""
    if C.values.shape[0] != D.n_diff:
        raise ConfigurationError(f"smoothing basis has {C.values.shape[0]} rows, D has {D.n_diff}")
    lam = C.values @ floor_phi(phi, C.p)
    return PenaltyMatrix(values=_weighted_gram(D.values, lam))


def direction_operators(D1: DifferenceMatrix, D2: DifferenceMatrix) -> tuple[np.ndarray, np.ndarray]:
    """(I_c2 kron D1) and (D2 kron I_c1) acting on dimension-1-fastest tensor coefficients."""
    c1, c2 = D1.n_coef, D2.n_coef
    return np.kron(np.eye(c2), D1.values), np.kron(D2.values, np.eye(c1))


def adaptive_penalty_2d(
    D1: DifferenceMatrix,
    D2: DifferenceMatrix,
    C1: SmoothingBasis,
    C2: SmoothingBasis,
    phi1,
    phi2,
) -> PenaltyMatrix:
    A1, A2 = direction_operators(D1, D2)
    if C1.values.shape[0] != A1.shape[0]:
        raise ConfigurationError(f"C1 has {C1.values.shape[0]} rows, direction-1 differences {A1.shape[0]}")
    if C2.values.shape[0] != A2.shape[0]:
        raise ConfigurationError(f"C2 has {C2.values.shape[0]} rows, direction-2 differences {A2.shape[0]}")
    w1 = C1.values @ floor_phi(phi1, C1.p)
    w2 = C2.values @ floor_phi(phi2, C2.p)
    return PenaltyMatrix(values=_weighted_gram(A1, w1) + _weighted_gram(A2, w2))


def anisotropic_penalty(D1: DifferenceMatrix, D2: DifferenceMatrix, gamma1: float, gamma2: float) -> PenaltyMatrix:
    """Non-adaptive tensor penalty with one smoothing parameter per direction."""
    if not (gamma1 > 0 and gamma2 > 0):
        raise ConfigurationError(f"smoothing parameters must be positive, got {gamma1}, {gamma2}")
    A1, A2 = direction_operators(D1, D2)
    return PenaltyMatrix(values=gamma1 * (A1.T @ A1) + gamma2 * (A2.T @ A2))


def lambda_field(C: SmoothingBasis, phi) -> np.ndarray:
    """Per-difference smoothing parameters C phi."""
    return C.values @ as_vector(phi, "phi", C.p)
