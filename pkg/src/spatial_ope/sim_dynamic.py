"""Ridesharing-style grid MDP: order draws, driver flows, mismatch rewards.

The environment identity (per-region order means and connectivity) is a
deterministic function of ``EnvConfig.seed``, so repeated inits give the
same regions and the same target-policy ranking; all day-to-day
randomness (order draws, behavior treatments) comes from the rollout
seed.  Each day starts from a fresh init: drivers reset to the configured
count and the mismatch history restarts.

One step, in order: draw intrinsic orders O ~ N(mu, 1); apply the
treatment uplift O* = O + 0.3*A*O; move drivers along the neighbor flows
(below); update the mismatch M' = 0.9*(1 - |D'-O*|/(1+D'+O*)) + 0.1*M;
emit the reward M'^2 * min(D', O*) - 2*|D'-O*|.

The driver flow between an adjacent pair {i, k} is antisymmetric:
F = min(C_i, C_k) * (|D_i - O*_i| - |D_k - O*_k|) leaves i and enters k,
each unordered pair visited once, so the transition vector V sums to
zero exactly.  Each region then moves by V_i / deg_i, clamped at zero
drivers.  (The clamp is the one place conservation can break.)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidInputError
from .policies import FixedRegionPolicy, OracleValue
from .seeding import mix64, rng_for
from .spatial import Grid, build_grid, grid_from_dict, grid_to_dict

__all__ = [
    "EnvConfig",
    "EnvState",
    "DynamicDataset",
    "init_dynamic_env",
    "driver_transition",
    "transition_flows",
    "env_step",
    "rollout",
    "gen_dynamic",
    "top_q_policy",
    "oracle_value_dynamic",
    "dataset_to_dict",
    "dataset_from_dict",
    "save_dataset",
    "load_dataset",
]

TOP_Q_STATS = ("avg-orders", "mismatch-gap")


@dataclass
class EnvConfig:
    l: int = 5
    horizon: int = 40
    gamma: float = 0.9
    order_mean_bounds: tuple[float, float] = (40.0, 180.0)
    uplift: float = 0.3
    init_drivers: float = 130.0
    connectivity_bounds: tuple[float, float] = (0.1, 1.0)
    seed: int = 0
    adjacency: str = "rook"
    torus: bool = False

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise InvalidConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not (0.0 <= self.gamma <= 1.0):
            raise InvalidConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name, (lo, hi) in (("order_mean_bounds", self.order_mean_bounds),
                               ("connectivity_bounds", self.connectivity_bounds)):
            if not (0.0 < lo <= hi):
                raise InvalidConfigError(f"{name} must be positive and ordered, got {(lo, hi)}")
        if self.init_drivers < 0:
            raise InvalidConfigError("init_drivers must be non-negative")

    def grid(self) -> Grid:
        return build_grid(self.l, self.adjacency, self.torus)


@dataclass
class EnvState:
    order_mean: np.ndarray          # mu_i, fixed for the env
    connectivity: np.ndarray        # C_i in [0.1, 1], fixed for the env
    drivers: np.ndarray             # D_i >= 0
    prev_actual_orders: np.ndarray  # O*_i from the previous step
    mismatch: np.ndarray            # M_i in [0, 1]
    t: int
    last_orders: np.ndarray | None = None  # intrinsic O drawn by the last step


def init_dynamic_env(cfg: EnvConfig) -> EnvState:
    """Fresh day-start state; identical for identical configs."""
    rng = rng_for(cfg.seed, "env")
    r = cfg.l * cfg.l
    mu = rng.uniform(*cfg.order_mean_bounds, size=r)
    conn = rng.uniform(*cfg.connectivity_bounds, size=r)
    drivers = np.full(r, float(cfg.init_drivers))
    prev_orders = np.zeros(r)
    # step formula with the lagged mismatch dropped (no history yet)
    mismatch = 0.9 * (1.0 - np.abs(drivers - prev_orders) / (1.0 + drivers + prev_orders))
    return EnvState(mu, conn, drivers, prev_orders, mismatch, 0)


def transition_flows(drivers: np.ndarray, actual_orders: np.ndarray,
                     connectivity: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-region transition vector V; sums to zero by antisymmetry."""
    surplus = np.abs(drivers - actual_orders)
    v = np.zeros_like(drivers)
    pairs = grid.neighbor_pairs()
    if len(pairs):
        pi, pk = pairs[:, 0], pairs[:, 1]
        flow = np.minimum(connectivity[pi], connectivity[pk]) * (surplus[pi] - surplus[pk])
        np.subtract.at(v, pi, flow)
        np.add.at(v, pk, flow)
    return v


def driver_transition(state: EnvState, grid: Grid) -> EnvState:
    """Move drivers along the pairwise flows; counts clamp at zero."""
    v = transition_flows(state.drivers, state.prev_actual_orders, state.connectivity, grid)
    deg = np.maximum(grid.degrees, 1)
    drivers = np.maximum(state.drivers + v / deg, 0.0)
    return EnvState(state.order_mean, state.connectivity, drivers,
                    state.prev_actual_orders, state.mismatch, state.t,
                    state.last_orders)


def env_step(state: EnvState, actions: np.ndarray, grid: Grid,
             rng: np.random.Generator, uplift: float = 0.3) -> tuple[EnvState, np.ndarray]:
    """Advance one time step; returns the new state and per-region rewards."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != state.drivers.shape:
        raise InvalidInputError(
            f"actions must have shape {state.drivers.shape}, got {actions.shape}"
        )
    orders = rng.normal(state.order_mean, 1.0)
    return _step_with_orders(state, actions, grid, orders, uplift)


def rollout(cfg: EnvConfig, policy, seed: int,
            reward_override: float | None = None):
    """One day's trajectory (X, A, Y) with t = 1..T on the first axis pair.

    ``policy`` is None for the Bernoulli(0.5) behavior, or any object with
    an ``actions`` method over the five-feature observation array.  The
    observation is (orders, connectivity, degree, drivers, mismatch) as of
    the start of the step.  ``reward_override`` replaces every reward with
    a constant (diagnostic hook; the dynamics are unaffected).
    """
    grid = cfg.grid()
    state = init_dynamic_env(cfg)
    rng = rng_for(seed, "rollout")
    r, t_len = grid.n_regions, cfg.horizon
    deg = grid.degrees.astype(np.float64)
    x = np.empty((r, t_len, 5))
    a = np.empty((r, t_len), dtype=np.int64)
    y = np.empty((r, t_len))
    for t in range(t_len):
        pre_drivers, pre_mismatch = state.drivers, state.mismatch
        orders_preview = rng.normal(state.order_mean, 1.0)
        obs = np.stack([orders_preview, state.connectivity, deg,
                        pre_drivers, pre_mismatch], axis=-1)
        if policy is None:
            actions = (rng.random(r) < 0.5).astype(np.int64)
        else:
            actions = policy.actions(obs).astype(np.int64)
        # re-use the previewed orders inside the step for bit-stable logs
        state, rewards = _step_with_orders(state, actions, grid, orders_preview, cfg.uplift)
        x[:, t] = obs
        a[:, t] = actions
        y[:, t] = rewards if reward_override is None else reward_override
    return x, a, y


def _step_with_orders(state: EnvState, actions: np.ndarray, grid: Grid,
                      orders: np.ndarray, uplift: float) -> tuple[EnvState, np.ndarray]:
    actions = np.asarray(actions, dtype=np.float64)
    actual = orders + uplift * actions * orders
    pre = EnvState(state.order_mean, state.connectivity, state.drivers,
                   actual, state.mismatch, state.t)
    moved = driver_transition(pre, grid)
    d_next = moved.drivers
    ratio = np.abs(d_next - actual) / (1.0 + d_next + actual)
    mismatch = 0.9 * (1.0 - ratio) + 0.1 * state.mismatch
    rewards = mismatch**2 * np.minimum(d_next, actual) - 2.0 * np.abs(d_next - actual)
    new_state = EnvState(state.order_mean, state.connectivity, d_next,
                         actual, mismatch, state.t + 1, orders)
    return new_state, rewards


@dataclass
class DynamicDataset:
    """Logged trajectories: X (R, T, S, 5), A and Y (R, T, S)."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    grid: Grid
    config: EnvConfig

    @property
    def n_regions(self) -> int:
        return self.x.shape[0]

    @property
    def horizon(self) -> int:
        return self.x.shape[1]

    @property
    def n_days(self) -> int:
        return self.x.shape[2]


def gen_dynamic(cfg: EnvConfig, n_days: int, data_seed: int,
                policy=None, reward_override: float | None = None) -> DynamicDataset:
    """Log ``n_days`` independent days under the behavior (or given) policy."""
    if n_days < 1:
        raise InvalidConfigError(f"need at least one day, got {n_days}")
    grid = cfg.grid()
    r, t_len = grid.n_regions, cfg.horizon
    x = np.empty((r, t_len, n_days, 5))
    a = np.empty((r, t_len, n_days), dtype=np.int64)
    y = np.empty((r, t_len, n_days))
    for j in range(n_days):
        xj, aj, yj = rollout(cfg, policy, mix64(data_seed, "day", j), reward_override)
        x[:, :, j] = xj
        a[:, :, j] = aj
        y[:, :, j] = yj
    return DynamicDataset(x, a, y, grid, cfg)


def top_q_policy(stat: str, q: int, reference) -> FixedRegionPolicy:
    """Treat the q regions ranked highest by the chosen statistic.

    ``reference`` is either a DynamicDataset (statistic computed from the
    logged observations) or an EnvConfig (computed from the environment:
    the order means directly for ``avg-orders``, a 20-day behavior
    simulation for ``mismatch-gap``).  Ties break toward the lower region
    index and the treated set is fixed for the whole horizon.
    """
    if stat not in TOP_Q_STATS:
        raise InvalidConfigError(f"stat must be one of {TOP_Q_STATS}, got {stat!r}")
    if isinstance(reference, DynamicDataset):
        orders = reference.x[..., 0]
        drivers = reference.x[..., 3]
        scores = orders.mean(axis=(1, 2)) if stat == "avg-orders" else (orders - drivers).mean(axis=(1, 2))
    elif isinstance(reference, EnvConfig):
        if stat == "avg-orders":
            scores = init_dynamic_env(reference).order_mean
        else:
            ref = gen_dynamic(reference, 20, mix64(reference.seed, "policy-ref"))
            scores = (ref.x[..., 0] - ref.x[..., 3]).mean(axis=(1, 2))
    else:
        raise InvalidInputError("reference must be a DynamicDataset or EnvConfig")
    r = scores.shape[0]
    if not (1 <= q <= r):
        raise InvalidConfigError(f"q must lie in [1, {r}], got {q}")
    ranked = np.lexsort((np.arange(r), -scores))
    treated = np.zeros(r, dtype=np.int64)
    treated[ranked[:q]] = 1
    return FixedRegionPolicy(treated, label=f"topq:{stat}:{q}")


def discounted_day_value(y_day: np.ndarray, gamma: float) -> float:
    """sum_i sum_t gamma^(t-1) * Y[i, t] for one day's (R, T) rewards."""
    weights = gamma ** np.arange(y_day.shape[1])
    return float((y_day * weights).sum())


def oracle_value_dynamic(cfg: EnvConfig, policy, n_mc: int, seed: int,
                         reward_override: float | None = None) -> OracleValue:
    """Average discounted day value over independent target-policy rollouts."""
    if n_mc < 1:
        raise InvalidConfigError(f"n_mc must be >= 1, got {n_mc}")
    values = np.empty(n_mc)
    for k in range(n_mc):
        _, _, y = rollout(cfg, policy, mix64(seed, "mc", k), reward_override)
        values[k] = discounted_day_value(y, cfg.gamma)
    se = float(values.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return OracleValue(float(values.mean()), se, n_mc)


# ---------------------------------------------------------------------------
# serialization


def _config_to_dict(cfg: EnvConfig) -> dict:
    return {
        "kind": "dynamic",
        "l": cfg.l,
        "horizon": cfg.horizon,
        "gamma": cfg.gamma,
        "order_mean_bounds": list(cfg.order_mean_bounds),
        "uplift": cfg.uplift,
        "init_drivers": cfg.init_drivers,
        "connectivity_bounds": list(cfg.connectivity_bounds),
        "seed": cfg.seed,
        "adjacency": cfg.adjacency,
        "torus": cfg.torus,
    }


def config_from_dict(doc: dict) -> EnvConfig:
    return EnvConfig(
        l=int(doc["l"]),
        horizon=int(doc["horizon"]),
        gamma=float(doc["gamma"]),
        order_mean_bounds=tuple(doc.get("order_mean_bounds", (40.0, 180.0))),
        uplift=float(doc.get("uplift", 0.3)),
        init_drivers=float(doc.get("init_drivers", 130.0)),
        connectivity_bounds=tuple(doc.get("connectivity_bounds", (0.1, 1.0))),
        seed=int(doc.get("seed", 0)),
        adjacency=doc.get("adjacency", "rook"),
        torus=bool(doc.get("torus", False)),
    )


def dataset_to_dict(data: DynamicDataset) -> dict:
    return {
        "config": _config_to_dict(data.config),
        "grid": grid_to_dict(data.grid),
        "X": data.x.tolist(),
        "A": data.a.tolist(),
        "Y": data.y.tolist(),
    }


def dataset_from_dict(doc: dict) -> DynamicDataset:
    return DynamicDataset(
        x=np.asarray(doc["X"], dtype=np.float64),
        a=np.asarray(doc["A"], dtype=np.int64),
        y=np.asarray(doc["Y"], dtype=np.float64),
        grid=grid_from_dict(doc["grid"]),
        config=config_from_dict(doc["config"]),
    )


def save_dataset(data: DynamicDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(data), fh, sort_keys=True)


def load_dataset(path: str) -> DynamicDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_dict(json.load(fh))
