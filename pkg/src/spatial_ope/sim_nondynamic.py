"""Single-stage synthetic environment with spatially correlated confounders.

Each day draws two CAR fields (U, V), min-max normalized to [0, 1],
independent Bernoulli(0.5) treatments, and an additive response whose
interference terms run over the grid's canonical ascending neighbor
order.  Three settings control the link function and the neighbor
coefficient pattern:

* ``linear``      g(X, A) = U + V,   coefficients (-0.5, -0.5, ...)
* ``nonlinear1``  g(X, A) = A * U,   coefficients (-0.5, -0.5, ...)
* ``nonlinear2``  g(X, A) = A * U,   coefficients (-0.2, -0.8, -0.2, ...)

with treatment effect 0.1 * (1.5 * A_i + sum_k beta_k A_k) plus
1.5 * g(X_i, A_i) + sum_k gamma_k g(X_k, A_k) and N(0, 1) noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfigError
from .policies import LinearPolicy, OracleValue
from .seeding import mix64, rng_for
from .spatial import CarConfig, Grid, build_grid, car_sample, grid_from_dict, grid_to_dict, normalize_unit_interval

__all__ = [
    "SETTINGS",
    "NondynamicConfig",
    "NondynamicDataset",
    "gen_nondynamic",
    "noiseless_response",
    "linear_policy",
    "oracle_value_nondynamic",
    "dataset_to_dict",
    "dataset_from_dict",
    "save_dataset",
    "load_dataset",
]

SETTINGS = ("linear", "nonlinear1", "nonlinear2")

TREATMENT_COEF = 1.5  # beta_1 = gamma_1
TREATMENT_SCALE = 0.1  # factor on the direct + neighbor treatment terms


@dataclass
class NondynamicConfig:
    l: int
    n_days: int
    setting: str
    kappa: float = 0.5
    seed: int = 0
    adjacency: str = "rook"
    rho: float = 0.9
    tau2: float = 1.0
    noise: bool = True

    def __post_init__(self) -> None:
        if self.n_days < 1:
            raise InvalidConfigError(f"need at least one day, got {self.n_days}")
        if self.setting not in SETTINGS:
            raise InvalidConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")


@dataclass
class NondynamicDataset:
    """Logged (confounder, treatment, outcome) arrays, region-major."""

    x: np.ndarray  # (R, S, 2) holding (U, V)
    a: np.ndarray  # (R, S) in {0, 1}
    y: np.ndarray  # (R, S)
    grid: Grid
    config: NondynamicConfig

    @property
    def n_regions(self) -> int:
        return self.x.shape[0]

    @property
    def n_days(self) -> int:
        return self.x.shape[1]


def _coef_pattern(setting: str, n: int) -> np.ndarray:
    if setting == "nonlinear2":
        return np.tile([-0.2, -0.8], (n + 1) // 2)[:n]
    return np.full(n, -0.5)


def _link(setting: str, u: np.ndarray, v: np.ndarray, a: np.ndarray) -> np.ndarray:
    if setting == "linear":
        return u + v
    return a * u


def noiseless_response(u: np.ndarray, v: np.ndarray, a: np.ndarray,
                       neighbor_lists: list[np.ndarray], setting: str) -> np.ndarray:
    """Mean outcome per region given fields, treatments, and neighbor order.

    Neighbor coefficient k applies to the k-th entry of each region's
    ``neighbor_lists`` entry, so reordering a list reorders the pairing.
    """
    if setting not in SETTINGS:
        raise InvalidConfigError(f"setting must be one of {SETTINGS}, got {setting!r}")
    a = np.asarray(a, dtype=np.float64)
    g = _link(setting, u, v, a)
    out = np.empty(len(neighbor_lists))
    for i, nbrs in enumerate(neighbor_lists):
        nbrs = np.asarray(nbrs, dtype=np.int64)
        coef = _coef_pattern(setting, len(nbrs))
        out[i] = (
            TREATMENT_SCALE * (TREATMENT_COEF * a[i] + coef @ a[nbrs])
            + TREATMENT_COEF * g[i]
            + coef @ g[nbrs]
        )
    return out


def _response_vectorized(grid: Grid, u: np.ndarray, v: np.ndarray,
                         a: np.ndarray, setting: str) -> np.ndarray:
    """Same response as noiseless_response, batched over a whole day."""
    degs = grid.degrees
    max_deg = int(degs.max()) if len(degs) else 0
    if max_deg == 0:
        return TREATMENT_SCALE * TREATMENT_COEF * a + TREATMENT_COEF * _link(setting, u, v, a)
    pad = np.zeros((grid.n_regions, max_deg), dtype=np.int64)
    mask = np.zeros((grid.n_regions, max_deg))
    for i, nbrs in enumerate(grid.neighbors):
        pad[i, : len(nbrs)] = nbrs
        mask[i, : len(nbrs)] = 1.0
    coef = _coef_pattern(setting, max_deg)[None, :] * mask
    g = _link(setting, u, v, a)
    treat = TREATMENT_COEF * a + (a[pad] * coef).sum(axis=1)
    return TREATMENT_SCALE * treat + TREATMENT_COEF * g + (g[pad] * coef).sum(axis=1)


def _draw_fields(grid: Grid, cfg: NondynamicConfig, day: int, stream: str) -> tuple[np.ndarray, np.ndarray]:
    car = CarConfig(cfg.rho, cfg.tau2)
    u = normalize_unit_interval(car_sample(grid, car, mix64(cfg.seed, stream, "u", day)))
    v = normalize_unit_interval(car_sample(grid, car, mix64(cfg.seed, stream, "v", day)))
    return u, v


def gen_nondynamic(cfg: NondynamicConfig) -> NondynamicDataset:
    """Generate the logged dataset; bit-identical for identical configs."""
    grid = build_grid(cfg.l, cfg.adjacency)
    r, s = grid.n_regions, cfg.n_days
    x = np.empty((r, s, 2))
    a = np.empty((r, s), dtype=np.int64)
    y = np.empty((r, s))
    for j in range(s):
        u, v = _draw_fields(grid, cfg, j, "data")
        a_j = (rng_for(cfg.seed, "data", "a", j).random(r) < 0.5).astype(np.int64)
        eps = rng_for(cfg.seed, "data", "eps", j).standard_normal(r) if cfg.noise else 0.0
        x[:, j, 0] = u
        x[:, j, 1] = v
        a[:, j] = a_j
        y[:, j] = _response_vectorized(grid, u, v, a_j.astype(np.float64), cfg.setting) + eps
    return NondynamicDataset(x, a, y, grid, cfg)


def linear_policy(kappa: float) -> LinearPolicy:
    """The threshold rule: treat iff kappa*U + (1-kappa)*V > 0.5."""
    return LinearPolicy(kappa)


def oracle_value_nondynamic(cfg: NondynamicConfig, policy, n_mc: int, seed: int) -> OracleValue:
    """Monte-Carlo ground truth: noiseless response under the target policy.

    Averages sum_i E[Y_i | A = policy(X)] over fresh confounder draws; the
    noise term has mean zero and is suppressed.
    """
    if n_mc < 1:
        raise InvalidConfigError(f"n_mc must be >= 1, got {n_mc}")
    grid = build_grid(cfg.l, cfg.adjacency)
    values = np.empty(n_mc)
    mc_cfg = replace(cfg, seed=seed)
    for k in range(n_mc):
        u, v = _draw_fields(grid, mc_cfg, k, "oracle")
        a = policy.actions(np.stack([u, v], axis=-1)).astype(np.float64)
        values[k] = _response_vectorized(grid, u, v, a, cfg.setting).sum()
    se = float(values.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return OracleValue(float(values.mean()), se, n_mc)


# ---------------------------------------------------------------------------
# serialization


def _config_to_dict(cfg: NondynamicConfig) -> dict:
    return {
        "kind": "nondynamic",
        "l": cfg.l,
        "n_days": cfg.n_days,
        "setting": cfg.setting,
        "kappa": cfg.kappa,
        "seed": cfg.seed,
        "adjacency": cfg.adjacency,
        "rho": cfg.rho,
        "tau2": cfg.tau2,
        "noise": cfg.noise,
    }


def config_from_dict(doc: dict) -> NondynamicConfig:
    return NondynamicConfig(
        l=int(doc["l"]),
        n_days=int(doc["n_days"]),
        setting=doc["setting"],
        kappa=float(doc.get("kappa", 0.5)),
        seed=int(doc.get("seed", 0)),
        adjacency=doc.get("adjacency", "rook"),
        rho=float(doc.get("rho", 0.9)),
        tau2=float(doc.get("tau2", 1.0)),
        noise=bool(doc.get("noise", True)),
    )


def dataset_to_dict(data: NondynamicDataset) -> dict:
    return {
        "config": _config_to_dict(data.config),
        "grid": grid_to_dict(data.grid),
        "X": data.x.tolist(),
        "A": data.a.tolist(),
        "Y": data.y.tolist(),
    }


def dataset_from_dict(doc: dict) -> NondynamicDataset:
    return NondynamicDataset(
        x=np.asarray(doc["X"], dtype=np.float64),
        a=np.asarray(doc["A"], dtype=np.int64),
        y=np.asarray(doc["Y"], dtype=np.float64),
        grid=grid_from_dict(doc["grid"]),
        config=config_from_dict(doc["config"]),
    )


def save_dataset(data: NondynamicDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(data), fh, sort_keys=True)


def load_dataset(path: str) -> NondynamicDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_dict(json.load(fh))
