"""Deterministic treatment policies and the Monte-Carlo value container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError

__all__ = ["LinearPolicy", "FixedRegionPolicy", "OracleValue"]


@dataclass
class LinearPolicy:
    """Treat a region iff kappa*U + (1-kappa)*V exceeds 0.5."""

    kappa: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.kappa <= 1.0):
            raise InvalidConfigError(f"kappa must lie in [0, 1], got {self.kappa}")

    def __call__(self, x) -> int:
        u, v = float(x[0]), float(x[1])
        return int(self.kappa * u + (1.0 - self.kappa) * v > 0.5)

    def actions(self, x: np.ndarray) -> np.ndarray:
        """Elementwise assignment over an array whose last axis is (U, V)."""
        x = np.asarray(x, dtype=np.float64)
        score = self.kappa * x[..., 0] + (1.0 - self.kappa) * x[..., 1]
        return (score > 0.5).astype(np.int64)

    @property
    def label(self) -> str:
        return f"linear:{self.kappa:g}"


@dataclass
class FixedRegionPolicy:
    """Treat a fixed set of regions at every time point and day."""

    treated: np.ndarray  # indicator vector over regions
    label: str = "fixed"

    def __call__(self, region: int) -> int:
        return int(self.treated[region])

    def actions(self, x: np.ndarray) -> np.ndarray:
        """Broadcast the region indicator over all trailing sample axes.

        ``x`` is any feature array whose leading axis indexes regions.
        """
        x = np.asarray(x)
        if x.shape[0] != self.treated.shape[0]:
            raise InvalidConfigError(
                f"policy covers {self.treated.shape[0]} regions, data has {x.shape[0]}"
            )
        ind = self.treated.astype(np.int64)
        shape = (x.shape[0],) + (1,) * max(x.ndim - 2, 0)
        return np.broadcast_to(ind.reshape(shape), x.shape[:-1]).copy()


@dataclass
class OracleValue:
    """Monte-Carlo estimate of a policy value with its standard error."""

    value: float
    stderr: float
    n_mc: int

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr_of_mean": self.stderr, "n_mc": self.n_mc}
