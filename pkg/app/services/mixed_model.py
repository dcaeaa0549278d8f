"""
Mixed-model reparameterization of (adaptive) P-splines.

The coefficient vector is split into an unpenalized polynomial part (fixed
effects, design X) and penalized differences (random effects, design Z). The
precision of the random effects is G^-1 = sum_l Lambda_l / tau2_l with
Lambda_l = F' diag(c_l) F, where F is the block's transport operator. In 1D
F is the identity and every Lambda_l is diagonal.
"""

import logging

import numpy as np
from scipy import linalg

from app.exceptions import ConfigurationError, DomainError, RankError
from app.models import DesignMatrix, DifferenceMatrix, MixedParts, PenaltyBlock, PrecisionModel, SmoothingBasis
from app.services.basis import tensor_design
from app.services.penalty import direction_operators
from app.utils.validators import as_vector

logger = logging.getLogger(__name__)


def polynomial_basis(t: np.ndarray, q: int) -> np.ndarray:
    """Columns 1, t, ..., t^(q-1) of the centred covariate, each scaled to unit max-abs."""
    centred = t - t.mean()
    cols = [np.ones_like(t)]
    for k in range(1, q):
        col = centred**k
        scale = np.abs(col).max()
        cols.append(col / scale if scale > 0 else col)
    return np.column_stack(cols)


def difference_inverse(D: DifferenceMatrix) -> np.ndarray:
    """D' (D D')^-1, the right inverse of D."""
    d = D.values
    try:
        return linalg.solve(d @ d.T, d, assume_a="pos").T
    except linalg.LinAlgError as e:
        raise RankError(f"D D' is singular: {e}") from e


def reparameterize_1d(B: DesignMatrix, D: DifferenceMatrix, x, C: SmoothingBasis | None = None) -> MixedParts:
    """
    X = [1 | x | ... | x^(q-1)] (centred, scaled), Z = B D' (D D')^-1 and one
    weight vector per column of C (a single constant column when C is None).
    """
    q = D.order
    x = as_vector(x, "x", B.shape[0])
    if B.shape[1] != D.n_coef:
        raise ConfigurationError(f"B has {B.shape[1]} columns, D acts on {D.n_coef} coefficients")
    if B.spec.degree < q - 1:
        raise ConfigurationError(
            f"degree {B.spec.degree} B-splines cannot reproduce the degree-{q - 1} polynomials "
            f"left unpenalized by order-{q} differences"
        )
    if C is None:
        C = SmoothingBasis(values=np.ones((D.n_diff, 1)))
    if C.values.shape[0] != D.n_diff:
        raise ConfigurationError(f"smoothing basis has {C.values.shape[0]} rows, D has {D.n_diff}")

    X = polynomial_basis(x, q)
    Z = B.values @ difference_inverse(D)
    return MixedParts(X=X, Z=Z, blocks=[PenaltyBlock(label="x", weights=C.values)])


def reparameterize_2d(
    B1: DesignMatrix,
    B2: DesignMatrix,
    D1: DifferenceMatrix,
    D2: DifferenceMatrix,
    C1: SmoothingBasis,
    C2: SmoothingBasis,
) -> MixedParts:
    """
    Tensor reparameterization built from the marginal transforms T_d = [P_d | Q_d].

    theta = (T2 kron T1) omega; the polynomial x polynomial coordinates of
    omega are the fixed effects and the rest are random effects. Each penalty
    direction keeps its weight vectors and carries the operator mapping the
    random effects onto its differences, so coordinates penalized by both
    directions collect weight from both sums.
    """
    c1, c2 = D1.n_coef, D2.n_coef
    q1, q2 = D1.order, D2.order
    if B1.shape[1] != c1 or B2.shape[1] != c2:
        raise ConfigurationError(
            f"marginal designs have {B1.shape[1]} and {B2.shape[1]} columns, difference matrices act on {c1} and {c2}"
        )

    T1 = np.hstack([polynomial_basis(np.arange(1.0, c1 + 1), q1), difference_inverse(D1)])
    T2 = np.hstack([polynomial_basis(np.arange(1.0, c2 + 1), q2), difference_inverse(D2)])
    T = np.kron(T2, T1)

    j1 = np.tile(np.arange(c1), c2)
    j2 = np.repeat(np.arange(c2), c1)
    is_fixed = (j1 < q1) & (j2 < q2)
    fixed, random = np.flatnonzero(is_fixed), np.flatnonzero(~is_fixed)

    A1, A2 = direction_operators(D1, D2)
    for name, C, A in (("C1", C1, A1), ("C2", C2, A2)):
        if C.values.shape[0] != A.shape[0]:
            raise ConfigurationError(f"{name} has {C.values.shape[0]} rows, its direction has {A.shape[0]} differences")

    B = tensor_design(B1, B2)
    Tr = T[:, random]
    blocks = [
        PenaltyBlock(label="x1", weights=C1.values, transport=A1 @ Tr),
        PenaltyBlock(label="x2", weights=C2.values, transport=A2 @ Tr),
    ]
    logger.debug(f"2D reparameterization: {fixed.size} fixed, {random.size} random coefficients")
    return MixedParts(
        X=B @ T[:, fixed],
        Z=B @ Tr,
        blocks=blocks,
        transform=T,
        fixed_index=fixed,
        random_index=random,
    )


def _positive_tau2(parts: MixedParts, tau2) -> np.ndarray:
    tau2 = as_vector(tau2, "tau2", parts.n_components)
    bad = np.flatnonzero(tau2 <= 0)
    if bad.size:
        raise DomainError(f"variance component {bad[0]} is not positive: {tau2[bad[0]]}", index=int(bad[0]))
    return tau2


def precision(parts: MixedParts, tau2) -> np.ndarray:
    """
    G^-1 = sum_l Lambda_l / tau2_l.

    Returns the diagonal when every block is diagonal, the dense matrix otherwise.
    """
    inv = 1.0 / _positive_tau2(parts, tau2)
    diag = np.zeros(parts.n_random)
    dense = None if parts.is_diagonal else np.zeros((parts.n_random, parts.n_random))
    for block, inv_b in zip(parts.blocks, parts.split(inv)):
        w = block.weights @ inv_b
        if block.transport is None:
            diag += w
        else:
            F = block.transport
            dense += F.T @ (w[:, None] * F)
    if dense is None:
        return diag
    dense[np.diag_indices_from(dense)] += diag
    return 0.5 * (dense + dense.T)


def root_shares(parts: MixedParts, tau2) -> tuple[np.ndarray, np.ndarray]:
    """
    Stacked root R of G^-1 (R'R = G^-1) and the share S[r, l] of component l
    in the weight of row r, so that Lambda_l / tau2_l = R' diag(S[:, l]) R.

    One row per coefficient difference of every block (one per random effect
    for untransported blocks); rows are in block order, unsorted.
    """
    tau2 = _positive_tau2(parts, tau2)
    roots, shares = [], []
    offset = 0
    for block, inv_b in zip(parts.blocks, parts.split(1.0 / tau2)):
        contrib = block.weights * inv_b
        w = contrib.sum(axis=1)
        share = np.zeros((w.size, parts.n_components))
        share[:, offset : offset + block.n_components] = np.divide(
            contrib, w[:, None], out=np.zeros_like(contrib), where=w[:, None] > 0
        )
        F = np.eye(parts.n_random) if block.transport is None else block.transport
        roots.append(np.sqrt(w)[:, None] * F)
        shares.append(share)
        offset += block.n_components
    return np.vstack(roots), np.vstack(shares)


def precision_root(parts: MixedParts, tau2) -> np.ndarray:
    """R with R'R = G^-1, rows of root_shares sorted by decreasing norm."""
    R, _ = root_shares(parts, tau2)
    return R[np.argsort(-np.linalg.norm(R, axis=1), kind="stable")]


def covariance(parts: MixedParts, tau2) -> np.ndarray:
    """
    G = (sum_l Lambda_l / tau2_l)^-1.

    Diagonal in 1D. Otherwise G comes from a pivoted QR of precision_root,
    never from inverting G^-1 directly.
    """
    if parts.is_diagonal:
        return 1.0 / precision(parts, tau2)
    R = precision_root(parts, tau2)
    _, U, piv = linalg.qr(R, mode="economic", pivoting=True)
    try:
        U_inv = linalg.solve_triangular(U, np.eye(U.shape[0]))
    except linalg.LinAlgError as e:
        raise RankError(f"random-effects precision is singular: {e}") from e
    G = np.empty_like(U)
    G[np.ix_(piv, piv)] = U_inv @ U_inv.T
    return 0.5 * (G + G.T)


def precision_matrix(model: PrecisionModel) -> np.ndarray:
    return precision(model.parts, model.tau2)


def component_quadratics(parts: MixedParts, alpha: np.ndarray) -> np.ndarray:
    """alpha' Lambda_l alpha for every component l."""
    return np.concatenate([b.weights.T @ b.differences(alpha) ** 2 for b in parts.blocks])


def component_traces(parts: MixedParts, M: np.ndarray) -> np.ndarray:
    """
    trace(M Lambda_l) for every component l.

    M is a symmetric random-effects matrix, or its diagonal when every block is diagonal.
    """
    out = []
    for block in parts.blocks:
        if block.transport is None:
            s = M if M.ndim == 1 else np.diag(M)
        else:
            F = block.transport
            s = np.sum((F @ M) * F, axis=1)
        out.append(block.weights.T @ s)
    return np.concatenate(out)


def tensor_coefficients(parts: MixedParts, beta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """B-spline tensor coefficients theta of a 2D mixed-model fit."""
    if parts.transform is None:
        raise ConfigurationError("tensor coefficients are only defined for 2D models")
    T = parts.transform
    return T[:, parts.fixed_index] @ beta + T[:, parts.random_index] @ alpha
