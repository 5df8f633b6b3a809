"""Square-grid geometry, CAR confounder fields, and dataset transforms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError
from .seeding import mix64

__all__ = [
    "Grid",
    "CarConfig",
    "build_grid",
    "car_sample",
    "normalize_unit_interval",
    "lag_concatenate",
    "grid_to_dict",
    "grid_from_dict",
]

ADJACENCY_KINDS = ("rook", "queen")


@dataclass
class Grid:
    """l x l region lattice with row-major indexing.

    ``neighbors[i]`` is the ascending list of region indices adjacent to
    region ``i``; this order is the canonical one used everywhere a
    neighbor subvector is formed.
    """

    l: int
    adjacency: str
    torus: bool
    neighbors: list[np.ndarray]

    @property
    def n_regions(self) -> int:
        return self.l * self.l

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=np.int64)

    def adjacency_matrix(self) -> np.ndarray:
        w = np.zeros((self.n_regions, self.n_regions))
        for i, nb in enumerate(self.neighbors):
            w[i, nb] = 1.0
        return w

    def neighbor_pairs(self) -> np.ndarray:
        """All unordered adjacent pairs (i, k) with i < k, shape (n_pairs, 2)."""
        pairs = [(i, int(k)) for i, nb in enumerate(self.neighbors) for k in nb if i < k]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def build_grid(l: int, adjacency: str = "rook", torus: bool = False) -> Grid:
    """Construct the lattice with rook (4) or queen (8) adjacency.

    With ``torus=True`` the lattice wraps around both axes, giving every
    region the same degree (used for exact-conservation checks).
    """
    if l < 1:
        raise InvalidConfigError(f"grid side must be >= 1, got {l}")
    if adjacency not in ADJACENCY_KINDS:
        raise InvalidConfigError(f"adjacency must be one of {ADJACENCY_KINDS}, got {adjacency!r}")
    if adjacency == "rook":
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    neighbors: list[np.ndarray] = []
    for r in range(l):
        for c in range(l):
            found = set()
            for dr, dc in steps:
                rr, cc = r + dr, c + dc
                if torus:
                    rr, cc = rr % l, cc % l
                elif not (0 <= rr < l and 0 <= cc < l):
                    continue
                idx = rr * l + cc
                if idx != r * l + c:
                    found.add(idx)
            neighbors.append(np.array(sorted(found), dtype=np.int64))
    return Grid(l, adjacency, torus, neighbors)


@dataclass
class CarConfig:
    """Conditional autoregressive field: precision (D_w - rho*W) / tau2."""

    rho: float = 0.9
    tau2: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.rho < 1.0):
            raise InvalidConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if self.tau2 <= 0.0:
            raise InvalidConfigError(f"tau2 must be positive, got {self.tau2}")


def car_sample(grid: Grid, cfg: CarConfig, seed: int) -> np.ndarray:
    """One zero-mean Gaussian draw with precision (D_w - rho*W) / tau2.

    Isolated regions (degree 0, only the 1x1 grid) get unit degree so the
    precision stays positive definite; they then draw N(0, tau2).
    """
    w = grid.adjacency_matrix()
    deg = np.maximum(grid.degrees, 1).astype(np.float64)
    precision = (np.diag(deg) - cfg.rho * w) / cfg.tau2
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise InvalidConfigError("CAR precision matrix is not positive definite") from exc
    z = np.random.default_rng(seed).standard_normal(grid.n_regions)
    # precision = L L^T  =>  x = L^{-T} z  has covariance precision^{-1}
    return np.linalg.solve(chol.T, z)


def normalize_unit_interval(x: np.ndarray) -> np.ndarray:
    """Affine min-max rescaling of one realized field into [0, 1].

    A degenerate field (max == min, e.g. a single region) maps to 0.5 so
    threshold policies stay well defined.
    """
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi - lo < 1e-12:
        return np.full_like(x, 0.5)
    return (x - lo) / (hi - lo)


def lag_concatenate(series: np.ndarray, lag: int) -> np.ndarray:
    """Stack each time point with its ``lag - 1`` predecessors.

    ``series`` has its time axis second to last and features last, e.g.
    (T, M) or (R, T, M).  The output drops the first ``lag - 1`` time
    points and widens features to ``lag * M``, oldest block first.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim < 2:
        raise InvalidConfigError("series must have at least (time, feature) axes")
    t_len = series.shape[-2]
    if lag < 1:
        raise InvalidConfigError(f"lag must be >= 1, got {lag}")
    if lag > t_len:
        raise InvalidConfigError(f"lag {lag} exceeds series length {t_len}")
    blocks = [series[..., k : t_len - lag + 1 + k, :] for k in range(lag)]
    return np.concatenate(blocks, axis=-1)


def grid_to_dict(grid: Grid) -> dict:
    return {
        "l": grid.l,
        "adjacency": grid.adjacency,
        "torus": grid.torus,
        "neighbors": [nb.tolist() for nb in grid.neighbors],
    }


def grid_from_dict(doc: dict) -> Grid:
    grid = build_grid(int(doc["l"]), doc["adjacency"], bool(doc.get("torus", False)))
    stored = [np.array(nb, dtype=np.int64) for nb in doc["neighbors"]]
    for a, b in zip(grid.neighbors, stored):
        if not np.array_equal(a, b):
            raise InvalidConfigError("stored neighbor lists do not match grid parameters")
    return grid
