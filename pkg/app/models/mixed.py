from pydantic import field_validator
import numpy as np

from app.models.base import ArrayModel, readonly


class PenaltyBlock(ArrayModel):
    """
    Weight vectors c_l of one penalty direction.

    `transport` maps the random effects onto that direction's coefficient
    differences (None means identity), so the block contributes
    Lambda_l = F' diag(c_l) F to the precision of the random effects.
    """

    label: str
    weights: np.ndarray
    transport: np.ndarray | None = None

    @field_validator("weights", "transport", mode="before")
    @classmethod
    def _freeze(cls, v):
        return None if v is None else readonly(v)

    @property
    def n_components(self) -> int:
        return self.weights.shape[1]

    @property
    def labels(self) -> list[str]:
        return [f"{self.label}[{j + 1}]" for j in range(self.n_components)]

    def differences(self, alpha: np.ndarray) -> np.ndarray:
        return alpha if self.transport is None else self.transport @ alpha


class MixedParts(ArrayModel):
    """Mixed-model form f = X beta + Z alpha of a (possibly adaptive) P-spline."""

    X: np.ndarray
    Z: np.ndarray
    blocks: list[PenaltyBlock]
    # 2D only: tensor coefficients theta = transform[:, fixed] beta + transform[:, random] alpha
    transform: np.ndarray | None = None
    fixed_index: np.ndarray | None = None
    random_index: np.ndarray | None = None

    @field_validator("X", "Z", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(v)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_fixed(self) -> int:
        return self.X.shape[1]

    @property
    def n_random(self) -> int:
        return self.Z.shape[1]

    @property
    def n_components(self) -> int:
        return sum(b.n_components for b in self.blocks)

    @property
    def weights(self) -> list[np.ndarray]:
        return [b.weights[:, j] for b in self.blocks for j in range(b.n_components)]

    @property
    def labels(self) -> list[str]:
        return [label for b in self.blocks for label in b.labels]

    @property
    def is_diagonal(self) -> bool:
        return all(b.transport is None for b in self.blocks)

    def split(self, values: np.ndarray) -> list[np.ndarray]:
        """Split a per-component vector into per-block pieces."""
        bounds = np.cumsum([0] + [b.n_components for b in self.blocks])
        return [np.asarray(values)[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]


class PrecisionModel(ArrayModel):
    parts: MixedParts
    tau2: np.ndarray
    sigma2: float = 1.0

    @field_validator("tau2", mode="before")
    @classmethod
    def _freeze(cls, v):
        return readonly(np.atleast_1d(v))
