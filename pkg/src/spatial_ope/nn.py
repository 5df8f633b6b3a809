"""Minimal feedforward ReLU network engine with exact reverse-mode gradients.

Everything is plain float64 numpy.  A network is a stack of affine layers
``h = W x + b`` with ReLU after every layer except the last; the ReLU
subgradient at exactly 0 is taken as 0.  All operations are pure: they
return new parameter/state objects instead of mutating their inputs.

The batched entry points (`mlp_forward_batch`, `mlp_backward_batch`) treat
rows as samples and are what the training loops use; the vector entry
points implement the same math for a single input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArchitectureError, ShapeError

__all__ = [
    "MlpParams",
    "MlpGrads",
    "AdamState",
    "mlp_init",
    "mlp_forward",
    "mlp_forward_batch",
    "mlp_backward",
    "mlp_backward_batch",
    "adam_step",
    "params_to_dict",
    "params_from_dict",
]


@dataclass
class MlpParams:
    """Weights and biases of a ReLU MLP.

    ``weights[k]`` has shape ``(layer_sizes[k+1], layer_sizes[k])`` and
    ``biases[k]`` has length ``layer_sizes[k+1]``.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def to_flat(self) -> np.ndarray:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        if flat.size != self.n_params:
            raise ShapeError(f"flat vector has {flat.size} entries, expected {self.n_params}")
        weights, biases = [], []
        pos = 0
        for w, b in zip(self.weights, self.biases):
            weights.append(flat[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(flat[pos : pos + b.size].copy())
            pos += b.size
        return MlpParams(list(self.layer_sizes), weights, biases)


@dataclass
class MlpGrads:
    """Parameter gradients, shaped exactly like the matching MlpParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def to_flat(self) -> np.ndarray:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    @staticmethod
    def zeros_like(params: MlpParams) -> "MlpGrads":
        return MlpGrads(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )


def mlp_init(layer_sizes: list[int], seed: int) -> MlpParams:
    """He-style fan-in uniform initialization; biases start at zero.

    Weights are drawn from U(-a, a) with a = sqrt(6 / fan_in), the usual
    scaling for ReLU stacks.  Deterministic given ``seed``.
    """
    if len(layer_sizes) < 2:
        raise InvalidArchitectureError("need at least an input and an output layer")
    if any(int(s) < 1 for s in layer_sizes):
        raise InvalidArchitectureError(f"layer sizes must be >= 1, got {layer_sizes}")
    sizes = [int(s) for s in layer_sizes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


def _check_input(params: MlpParams, x: np.ndarray, batched: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    want = params.in_dim
    if batched:
        if x.ndim != 2 or x.shape[1] != want:
            raise ShapeError(f"expected (n, {want}) input, got {x.shape}")
    else:
        if x.ndim != 1 or x.shape[0] != want:
            raise ShapeError(f"expected length-{want} input, got shape {x.shape}")
    return x


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single input vector."""
    x = _check_input(params, x, batched=False)
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = w @ h + b
        if k != last:
            h = np.maximum(h, 0.0)
    return h


def mlp_forward_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on ``x`` of shape (n, in_dim) -> (n, out_dim)."""
    x = _check_input(params, x, batched=True)
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if k != last:
            h = np.maximum(h, 0.0)
    return h


def _forward_cache(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Batched forward that keeps per-layer inputs and pre-activations."""
    acts = [x]  # input to each layer
    pres = []  # pre-activation of each layer
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        pres.append(z)
        h = np.maximum(z, 0.0) if k != last else z
        if k != last:
            acts.append(h)
    return h, acts, pres


def _backward_from_cache(
    params: MlpParams,
    acts: list[np.ndarray],
    pres: list[np.ndarray],
    upstream: np.ndarray,
) -> tuple[MlpGrads, np.ndarray]:
    n_layers = len(params.weights)
    d_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    d_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = upstream
    for k in range(n_layers - 1, -1, -1):
        d_w[k] = delta.T @ acts[k]
        d_b[k] = delta.sum(axis=0)
        dx = delta @ params.weights[k]
        if k > 0:
            delta = dx * (pres[k - 1] > 0.0)
    return MlpGrads(d_w, d_b), dx


def mlp_backward_batch(
    params: MlpParams, x: np.ndarray, upstream: np.ndarray
) -> tuple[MlpGrads, np.ndarray]:
    """Gradients of sum_i <upstream_i, f(x_i)> w.r.t. parameters and inputs."""
    x = _check_input(params, x, batched=True)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0], params.out_dim):
        raise ShapeError(
            f"upstream must have shape ({x.shape[0]}, {params.out_dim}), got {upstream.shape}"
        )
    _, acts, pres = _forward_cache(params, x)
    return _backward_from_cache(params, acts, pres, upstream)


def mlp_backward(
    params: MlpParams, x: np.ndarray, upstream: np.ndarray
) -> tuple[MlpGrads, np.ndarray]:
    """Exact gradients of <upstream, f(x)> for a single input vector."""
    x = _check_input(params, x, batched=False)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (params.out_dim,):
        raise ShapeError(f"upstream must have length {params.out_dim}, got {upstream.shape}")
    grads, dx = mlp_backward_batch(params, x[None, :], upstream[None, :])
    return grads, dx[0]


@dataclass
class AdamState:
    """Adam optimizer state; moment accumulators mirror the parameter shapes."""

    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: MlpGrads | None = None
    v: MlpGrads | None = None


def adam_step(
    state: AdamState, params: MlpParams, grads: MlpGrads
) -> tuple[AdamState, MlpParams]:
    """One Adam update with bias correction; returns fresh state and params."""
    for w, gw in zip(params.weights, grads.weights):
        if w.shape != gw.shape:
            raise ShapeError(f"gradient shape {gw.shape} does not match weight {w.shape}")
    for b, gb in zip(params.biases, grads.biases):
        if b.shape != gb.shape:
            raise ShapeError(f"gradient shape {gb.shape} does not match bias {b.shape}")

    m = state.m if state.m is not None else MlpGrads.zeros_like(params)
    v = state.v if state.v is not None else MlpGrads.zeros_like(params)
    t = state.step + 1
    flat_p = params.to_flat()
    flat_g = grads.to_flat()
    flat_m = m.to_flat()
    flat_v = v.to_flat()
    new_m, new_v, delta = adam_update_flat(
        t, flat_m, flat_v, flat_g, state.lr, state.beta1, state.beta2, state.eps
    )
    new_params = params.with_flat(flat_p + delta)
    m_new = _grads_with_flat(params, new_m)
    v_new = _grads_with_flat(params, new_v)
    new_state = AdamState(t, state.lr, state.beta1, state.beta2, state.eps, m_new, v_new)
    return new_state, new_params


def _grads_with_flat(params: MlpParams, flat: np.ndarray) -> MlpGrads:
    weights, biases = [], []
    pos = 0
    for w, b in zip(params.weights, params.biases):
        weights.append(flat[pos : pos + w.size].reshape(w.shape).copy())
        pos += w.size
        biases.append(flat[pos : pos + b.size].copy())
        pos += b.size
    return MlpGrads(weights, biases)


def adam_update_flat(
    t: int,
    m: np.ndarray,
    v: np.ndarray,
    g: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Core Adam arithmetic on flat vectors; returns (m, v, parameter delta)."""
    m = beta1 * m + (1.0 - beta1) * g
    v = beta2 * v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    delta = -lr * m_hat / (np.sqrt(v_hat) + eps)
    return m, v, delta


def params_to_dict(params: MlpParams) -> dict:
    """JSON-ready representation of the parameters."""
    return {
        "layer_sizes": list(params.layer_sizes),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(doc: dict) -> MlpParams:
    sizes = [int(s) for s in doc["layer_sizes"]]
    weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    params = MlpParams(sizes, weights, biases)
    for k, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
            raise ShapeError(f"layer {k} arrays do not match layer_sizes {sizes}")
    return params
