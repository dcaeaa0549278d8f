"""
End-to-end fitting: dataset + options -> bases, mixed model, SOP fit and the
tables/report written by the command line and returned by the API.
"""

import logging
import time
from typing import Optional

import numpy as np
import pandas as pd

from app.config import Settings, get_settings
from app.models import (
    AdaptiveSmoothSpec,
    BasisSpec,
    ComponentReport,
    Dataset,
    Family,
    FitConfig,
    FitResult,
    MixedParts,
    ModelOptions,
    RunReport,
    SmoothingBasis,
)
from app.models.base import ArrayModel
from app.services.basis import (
    bspline_design,
    coefficient_positions,
    difference_matrix,
    difference_positions,
    domain_of,
)
from app.services.mixed_model import reparameterize_1d, reparameterize_2d
from app.services.penalty import lambda_field, smoothing_basis_1d, smoothing_basis_2d
from app.services.sop_solver import coefficients_2d, fit

logger = logging.getLogger(__name__)


class ModelSetup(ArrayModel):
    parts: MixedParts
    specs: list[BasisSpec]
    smoothing: list[SmoothingBasis]
    adaptive: AdaptiveSmoothSpec


class FittedModel(ArrayModel):
    dataset: Dataset
    options: ModelOptions
    setup: ModelSetup
    result: FitResult
    wall_seconds: float

    @property
    def family(self) -> Family:
        return self.options.family


def build_model(dataset: Dataset, options: ModelOptions) -> ModelSetup:
    q = options.diff
    if not dataset.is_2d:
        lo, hi = domain_of(dataset.x1)
        spec = BasisSpec(xmin=lo, xmax=hi, nseg=options.nseg, degree=options.degree, diff_order=q).check()
        adaptive = AdaptiveSmoothSpec(p=options.adaptive_p, degree_smooth=options.adaptive_degree)
        B = bspline_design(dataset.x1, spec)
        D = difference_matrix(spec.n_basis, q)
        C = smoothing_basis_1d(spec.n_basis, q, adaptive)
        parts = reparameterize_1d(B, D, dataset.x1, C)
        return ModelSetup(parts=parts, specs=[spec], smoothing=[C], adaptive=adaptive)

    nseg1, nseg2 = options.nseg2d or (options.nseg, options.nseg)
    p2d = options.adaptive_p2d or (options.adaptive_p,) * 4
    specs = []
    for x, nseg in ((dataset.x1, nseg1), (dataset.x2, nseg2)):
        lo, hi = domain_of(x)
        specs.append(BasisSpec(xmin=lo, xmax=hi, nseg=nseg, degree=options.degree, diff_order=q).check())
    adaptive = AdaptiveSmoothSpec(p=tuple(p2d), degree_smooth=options.adaptive_degree)
    B1 = bspline_design(dataset.x1, specs[0])
    B2 = bspline_design(dataset.x2, specs[1])
    D1 = difference_matrix(specs[0].n_basis, q)
    D2 = difference_matrix(specs[1].n_basis, q)
    C1, C2 = smoothing_basis_2d(specs[0].n_basis, specs[1].n_basis, q, q, adaptive)
    parts = reparameterize_2d(B1, B2, D1, D2, C1, C2)
    return ModelSetup(parts=parts, specs=specs, smoothing=[C1, C2], adaptive=adaptive)


def fit_config(options: ModelOptions, settings: Optional[Settings] = None) -> FitConfig:
    settings = settings or get_settings()
    return FitConfig(
        max_iter=options.max_iter or settings.max_iter,
        tol=options.tol or settings.tol,
        family=options.family,
        variance_floor=settings.variance_floor,
    )


def fit_dataset(dataset: Dataset, options: ModelOptions, settings: Optional[Settings] = None) -> FittedModel:
    start = time.perf_counter()
    setup = build_model(dataset, options)
    logger.info(
        f"Fitting {options.family.value} {'2D' if dataset.is_2d else '1D'} model: n={dataset.n}, "
        f"{setup.parts.n_components} variance components"
    )
    result = fit(dataset.y, setup.parts, fit_config(options, settings), dataset.weight)
    return FittedModel(
        dataset=dataset,
        options=options,
        setup=setup,
        result=result,
        wall_seconds=time.perf_counter() - start,
    )


def fitted_frame(model: FittedModel) -> pd.DataFrame:
    ds, res = model.dataset, model.result
    columns = {"x": ds.x1}
    if ds.is_2d:
        columns["x2"] = ds.x2
    columns["y"] = ds.y
    if ds.weight is not None:
        columns["weight"] = ds.weight
    columns["eta"] = res.linear_predictor
    columns["fitted"] = res.fitted
    return pd.DataFrame(columns)


def lambda_frame(model: FittedModel) -> pd.DataFrame:
    """Estimated local smoothing field lambda = C phi at covariate positions, phi_l = sigma2 / tau2_l."""
    setup, res = model.setup, model.result
    phis = setup.parts.split(res.phi)
    if len(setup.specs) == 1:
        spec = setup.specs[0]
        lam = lambda_field(setup.smoothing[0], phis[0])
        return pd.DataFrame(
            {
                "direction": 1,
                "index": np.arange(1, lam.size + 1),
                "x": difference_positions(spec),
                "lambda": lam,
            }
        )

    s1, s2 = setup.specs
    frames = []
    # direction 1 rows: position along x1 differences fastest, x2 coefficient slowest
    lam1 = lambda_field(setup.smoothing[0], phis[0])
    d1, c2 = difference_positions(s1), coefficient_positions(s2)
    frames.append(
        pd.DataFrame(
            {"direction": 1, "index": np.arange(1, lam1.size + 1), "x": np.tile(d1, c2.size), "x2": np.repeat(c2, d1.size), "lambda": lam1}
        )
    )
    lam2 = lambda_field(setup.smoothing[1], phis[1])
    c1, d2 = coefficient_positions(s1), difference_positions(s2)
    frames.append(
        pd.DataFrame(
            {"direction": 2, "index": np.arange(1, lam2.size + 1), "x": np.tile(c1, d2.size), "x2": np.repeat(d2, c1.size), "lambda": lam2}
        )
    )
    return pd.concat(frames, ignore_index=True)


def surface_frame(model: FittedModel, grid: tuple[int, int] | None = None) -> pd.DataFrame:
    """Fitted surface on a regular g1 x g2 grid over the data rectangle (2D models only)."""
    setup, res = model.setup, model.result
    g1, g2 = grid or model.options.grid
    s1, s2 = setup.specs
    u1 = np.linspace(s1.xmin, s1.xmax, g1)
    u2 = np.linspace(s2.xmin, s2.xmax, g2)
    theta = coefficients_2d(res, setup.parts)
    coef = theta.reshape(s2.n_basis, s1.n_basis)
    eta = bspline_design(u1, s1).values @ coef.T @ bspline_design(u2, s2).values.T
    fitted = np.exp(eta) if model.family == Family.POISSON else eta
    return pd.DataFrame(
        {
            "x": np.repeat(u1, g2),
            "x2": np.tile(u2, g1),
            "eta": eta.ravel(),
            "fitted": fitted.ravel(),
        }
    )


def residual_sum_of_squares(y: np.ndarray, fitted: np.ndarray, weight: np.ndarray | None = None) -> float:
    r2 = (y - fitted) ** 2
    return float(np.sum(r2 if weight is None else weight * r2))


def build_report(model: FittedModel) -> RunReport:
    setup, res, ds = model.setup, model.result, model.dataset
    parts = setup.parts
    collapsed = set(res.collapsed)
    components = [
        ComponentReport(label=label, tau2=float(t), phi=float(p), ed=float(e), collapsed=i in collapsed)
        for i, (label, t, p, e) in enumerate(zip(parts.labels, res.tau2, res.phi, res.ed))
    ]
    lam = np.concatenate([lambda_field(C, phi) for C, phi in zip(setup.smoothing, parts.split(res.phi))])
    fixed_dim = int(np.linalg.matrix_rank(parts.X))
    notes = []
    if setup.adaptive.non_adaptive:
        notes.append("non-adaptive reduction: a single smoothing parameter per penalty direction")
    if not res.converged:
        notes.append(f"not converged after {res.iterations} iterations")
    return RunReport(
        config={**model.options.model_dump(mode="json"), "n_basis": [s.n_basis for s in setup.specs]},
        family=model.family.value,
        dimension=len(setup.specs),
        n_obs=ds.n,
        n_variance_components=parts.n_components,
        components=components,
        sigma2=res.sigma2,
        fixed_dim=fixed_dim,
        total_ed=res.total_ed,
        model_dim=fixed_dim + res.total_ed,
        rss=residual_sum_of_squares(ds.y, res.fitted, ds.weight),
        deviance=res.deviance,
        iterations=res.iterations,
        converged=res.converged,
        wall_seconds=model.wall_seconds,
        non_adaptive_reduction=setup.adaptive.non_adaptive,
        lambda_range=(float(lam.min()), float(lam.max())),
        notes=notes,
    )
