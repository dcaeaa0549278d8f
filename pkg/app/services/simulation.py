"""
Seeded synthetic datasets.

Each scenario returns a DataFrame with covariate column(s), the response `y`
and the noiseless mean `truth` (intensity for counts).
"""

import logging
from collections.abc import Callable

import numpy as np
import pandas as pd

from app.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def hetero_mean(x: np.ndarray) -> np.ndarray:
    """Slow sine wave everywhere, plus a fast oscillation switched on for x > 0.6."""
    smooth = 0.8 * np.sin(2 * np.pi * x)
    fast = np.where(x > 0.6, 0.6 * np.sin(16 * np.pi * (x - 0.6)), 0.0)
    return smooth + fast


PEAKS = ((0.18, 0.008, 450.0), (0.35, 0.006, 900.0), (0.52, 0.012, 300.0), (0.71, 0.007, 1200.0), (0.86, 0.010, 500.0))


def peaks_intensity(x: np.ndarray) -> np.ndarray:
    """Slowly decaying background with narrow Gaussian peaks, in counts per bin."""
    background = 40.0 * np.exp(-1.5 * x) + 10.0
    peaks = sum(h * np.exp(-0.5 * ((x - c) / s) ** 2) for c, s, h in PEAKS)
    return background + peaks


def surface_mean(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Broad bump in one corner, sharp peak in the other: smoothness varies over the plane."""
    broad = 0.8 * np.exp(-((x1 - 0.3) ** 2 + (x2 - 0.35) ** 2) / 0.12)
    sharp = 1.2 * np.exp(-((x1 - 0.75) ** 2 + (x2 - 0.7) ** 2) / 0.006)
    return broad + sharp


def simulate_hetero1d(n: int = 500, seed: int = 0, sigma: float = 0.2) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 1.0, n))
    truth = hetero_mean(x)
    return pd.DataFrame({"x": x, "y": truth + sigma * rng.standard_normal(n), "truth": truth})


def simulate_poisson_peaks(n: int = 1000, seed: int = 0, sigma: float | None = None) -> pd.DataFrame:
    # counts on an equally spaced angle grid, like a diffractometer scan
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)
    mu = peaks_intensity(x)
    return pd.DataFrame({"x": x, "y": rng.poisson(mu).astype(float), "truth": mu})


def simulate_surface2d(n: int = 2000, seed: int = 0, sigma: float = 0.1) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(0.0, 1.0, n)
    x2 = rng.uniform(0.0, 1.0, n)
    truth = surface_mean(x1, x2)
    return pd.DataFrame({"x": x1, "x2": x2, "y": truth + sigma * rng.standard_normal(n), "truth": truth})


SCENARIOS: dict[str, Callable[..., pd.DataFrame]] = {
    "hetero1d": simulate_hetero1d,
    "poisson_peaks": simulate_poisson_peaks,
    "surface2d": simulate_surface2d,
}

DEFAULT_N = {"hetero1d": 500, "poisson_peaks": 1000, "surface2d": 2000}


def simulate(scenario: str, n: int | None = None, seed: int = 0, sigma: float | None = None) -> pd.DataFrame:
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario '{scenario}'; valid scenarios: {', '.join(sorted(SCENARIOS))}")
    n = n or DEFAULT_N[scenario]
    if n < 10:
        raise ConfigurationError(f"n must be at least 10, got {n}")
    kwargs = {"n": n, "seed": seed}
    if sigma is not None:
        if scenario == "poisson_peaks":
            logger.warning("sigma is ignored for count data")
        else:
            kwargs["sigma"] = sigma
    logger.info(f"Simulating {scenario}: n={n}, seed={seed}")
    return SCENARIOS[scenario](**kwargs)
