"""Permutation-invariant outcome networks over a region and its neighbors.

Three architectures share one calling convention:

* ``PieModel`` -- psi(center ⊕ mean_j phi(neighbor_j)): a set network whose
  learned inner map phi is averaged over the neighborhood, so the output
  cannot depend on neighbor order.
* ``MeanFieldModel`` -- psi(center ⊕ mean_j neighbor_j): the same wiring
  with the inner map fixed to the identity, i.e. neighbors are summarized
  by their raw feature average.
* ``PpieModel`` -- psi over the concatenation of per-group phi averages;
  invariant to permutations inside each group but not across groups.

Batched entry points take a dense block of center rows plus a flat block
of neighbor rows segmented by per-sample counts (CSR style), which is how
the training loops and estimators call them.  A sample with count 0 gets
a zero interference vector -- the sanctioned fallback for a 1x1 grid; the
single-sample ``pie_forward`` treats an empty neighbor list as an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DegenerateNeighborhoodError, InvalidArchitectureError, ShapeError
from .nn import MlpParams
from .seeding import mix64

__all__ = [
    "RegionFeature",
    "PieModel",
    "MeanFieldModel",
    "PpieModel",
    "new_pie_model",
    "new_mean_field_model",
    "pie_forward",
    "pie_gradients",
    "mean_field_forward",
    "mean_field_gradients",
    "ppie_forward",
    "pie_from_mean_field",
    "segment_means",
    "model_to_dict",
    "model_from_dict",
]


@dataclass
class RegionFeature:
    """Confounder vector plus the (scalar) treatment of one region."""

    confounder: np.ndarray
    treatment: float

    def as_row(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.confounder, dtype=np.float64).ravel(),
                               [float(self.treatment)]])


def _feature_rows(features: list[RegionFeature], m_dim: int) -> np.ndarray:
    rows = np.empty((len(features), m_dim + 1))
    for i, f in enumerate(features):
        row = f.as_row()
        if row.shape[0] != m_dim + 1:
            raise ShapeError(f"feature has confounder length {row.shape[0] - 1}, expected {m_dim}")
        rows[i] = row
    return rows


@dataclass
class PieModel:
    """Set network: phi embeds (confounder, treatment) pairs, psi reads
    the center features next to the neighborhood's mean embedding."""

    phi: MlpParams
    psi: MlpParams

    def __post_init__(self) -> None:
        if self.psi.out_dim != 1:
            raise InvalidArchitectureError("psi must have a single output")
        if self.psi.in_dim != self.phi.in_dim + self.phi.out_dim:
            raise InvalidArchitectureError(
                f"psi input dim {self.psi.in_dim} must equal "
                f"phi input {self.phi.in_dim} + embedding {self.phi.out_dim}"
            )

    @property
    def m_dim(self) -> int:
        return self.phi.in_dim - 1

    @property
    def d_emb(self) -> int:
        return self.phi.out_dim

    @property
    def n_params(self) -> int:
        return self.phi.n_params + self.psi.n_params

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.phi.to_flat(), self.psi.to_flat()])

    def with_flat(self, flat: np.ndarray) -> "PieModel":
        k = self.phi.n_params
        return PieModel(self.phi.with_flat(flat[:k]), self.psi.with_flat(flat[k:]))

    def copy(self) -> "PieModel":
        return PieModel(self.phi.copy(), self.psi.copy())


@dataclass
class MeanFieldModel:
    """psi over (center features, raw neighbor feature average)."""

    psi: MlpParams

    def __post_init__(self) -> None:
        if self.psi.out_dim != 1:
            raise InvalidArchitectureError("psi must have a single output")
        if self.psi.in_dim % 2 != 0:
            raise InvalidArchitectureError("psi input dim must be 2*(M+1)")

    @property
    def m_dim(self) -> int:
        return self.psi.in_dim // 2 - 1

    @property
    def n_params(self) -> int:
        return self.psi.n_params

    def to_flat(self) -> np.ndarray:
        return self.psi.to_flat()

    def with_flat(self, flat: np.ndarray) -> "MeanFieldModel":
        return MeanFieldModel(self.psi.with_flat(flat))

    def copy(self) -> "MeanFieldModel":
        return MeanFieldModel(self.psi.copy())


@dataclass
class PpieModel:
    """Partially permutation-invariant network: one phi per input group."""

    phis: list[MlpParams]
    psi: MlpParams

    def __post_init__(self) -> None:
        if self.psi.in_dim != sum(p.out_dim for p in self.phis):
            raise InvalidArchitectureError(
                "psi input dim must equal the sum of the group embedding widths"
            )

    @property
    def group_dims(self) -> list[int]:
        return [p.in_dim for p in self.phis]


def new_pie_model(m_dim: int, seed: int, d_emb: int = 16,
                  hidden: tuple[int, ...] = (32, 32)) -> PieModel:
    phi = nn.mlp_init([m_dim + 1, *hidden, d_emb], mix64(seed, "phi"))
    psi = nn.mlp_init([m_dim + 1 + d_emb, *hidden, 1], mix64(seed, "psi"))
    return PieModel(phi, psi)


def new_mean_field_model(m_dim: int, seed: int,
                         hidden: tuple[int, ...] = (32, 32)) -> MeanFieldModel:
    psi = nn.mlp_init([2 * (m_dim + 1), *hidden, 1], mix64(seed, "psi"))
    return MeanFieldModel(psi)


# ---------------------------------------------------------------------------
# segment arithmetic over CSR-style neighbor blocks


def segment_means(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Per-segment means of consecutive row blocks; empty segments give zeros."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() != values.shape[0]:
        raise ShapeError(f"counts sum to {counts.sum()} but there are {values.shape[0]} rows")
    ends = np.cumsum(counts)
    if len(counts) and counts.min() > 0:
        starts = ends - counts
        sums = np.add.reduceat(values, starts, axis=0)
    else:
        csum = np.vstack([np.zeros((1, values.shape[1])), np.cumsum(values, axis=0)])
        sums = csum[ends] - csum[ends - counts]
    return sums / np.maximum(counts, 1)[:, None]


def _scatter_segment_mean_grad(dmean: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Adjoint of segment_means: spread each row back over its segment."""
    return np.repeat(dmean / np.maximum(counts, 1)[:, None], counts, axis=0)


# ---------------------------------------------------------------------------
# batched forward / backward


def pie_forward_batch(model: PieModel, center: np.ndarray, nbr: np.ndarray,
                      counts: np.ndarray) -> np.ndarray:
    emb = nn.mlp_forward_batch(model.phi, nbr)
    mean_emb = segment_means(emb, counts)
    psi_in = np.hstack([center, mean_emb])
    return nn.mlp_forward_batch(model.psi, psi_in)[:, 0]


def pie_cache_forward(model: PieModel, center: np.ndarray, nbr: np.ndarray,
                      counts: np.ndarray):
    """Forward pass keeping the activations needed for one backward pass."""
    emb, phi_acts, phi_pres = nn._forward_cache(model.phi, nbr)
    mean_emb = segment_means(emb, counts)
    psi_in = np.hstack([center, mean_emb])
    out, psi_acts, psi_pres = nn._forward_cache(model.psi, psi_in)
    cache = (phi_acts, phi_pres, psi_acts, psi_pres, counts)
    return out[:, 0], cache


def pie_backward_flat(model: PieModel, cache, upstream: np.ndarray) -> np.ndarray:
    """Flat parameter gradient of sum_i upstream_i * output_i."""
    phi_acts, phi_pres, psi_acts, psi_pres, counts = cache
    psi_grads, dpsi_in = nn._backward_from_cache(model.psi, psi_acts, psi_pres,
                                                 upstream[:, None])
    dmean = dpsi_in[:, model.phi.in_dim :]
    dnbr_emb = _scatter_segment_mean_grad(dmean, counts)
    phi_grads, _ = nn._backward_from_cache(model.phi, phi_acts, phi_pres, dnbr_emb)
    return np.concatenate([phi_grads.to_flat(), psi_grads.to_flat()])


def pie_embedding_batch(model: PieModel, nbr: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Mean phi embedding per sample -- the model's interference summary."""
    return segment_means(nn.mlp_forward_batch(model.phi, nbr), counts)


def mean_field_forward_batch(model: MeanFieldModel, center: np.ndarray,
                             nbr: np.ndarray, counts: np.ndarray) -> np.ndarray:
    mean_raw = segment_means(nbr, counts)
    psi_in = np.hstack([center, mean_raw])
    return nn.mlp_forward_batch(model.psi, psi_in)[:, 0]


def mean_field_cache_forward(model: MeanFieldModel, center: np.ndarray,
                             nbr: np.ndarray, counts: np.ndarray):
    mean_raw = segment_means(nbr, counts)
    psi_in = np.hstack([center, mean_raw])
    out, psi_acts, psi_pres = nn._forward_cache(model.psi, psi_in)
    return out[:, 0], (psi_acts, psi_pres)


def mean_field_backward_flat(model: MeanFieldModel, cache, upstream: np.ndarray) -> np.ndarray:
    psi_acts, psi_pres = cache
    psi_grads, _ = nn._backward_from_cache(model.psi, psi_acts, psi_pres, upstream[:, None])
    return psi_grads.to_flat()


def model_forward_batch(model, center, nbr, counts):
    if isinstance(model, PieModel):
        return pie_forward_batch(model, center, nbr, counts)
    if isinstance(model, MeanFieldModel):
        return mean_field_forward_batch(model, center, nbr, counts)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def model_cache_forward(model, center, nbr, counts):
    if isinstance(model, PieModel):
        return pie_cache_forward(model, center, nbr, counts)
    if isinstance(model, MeanFieldModel):
        return mean_field_cache_forward(model, center, nbr, counts)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def model_backward_flat(model, cache, upstream):
    if isinstance(model, PieModel):
        return pie_backward_flat(model, cache, upstream)
    if isinstance(model, MeanFieldModel):
        return mean_field_backward_flat(model, cache, upstream)
    raise TypeError(f"unsupported model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# single-sample operations


def _single_batch(model_m_dim: int, center: RegionFeature,
                  neighbors: list[RegionFeature]):
    c = _feature_rows([center], model_m_dim)
    n = _feature_rows(neighbors, model_m_dim) if neighbors else np.zeros((0, model_m_dim + 1))
    counts = np.array([len(neighbors)], dtype=np.int64)
    return c, n, counts


def pie_forward(model: PieModel, center: RegionFeature,
                neighbors: list[RegionFeature]) -> float:
    """psi(center ⊕ mean_j phi(neighbor_j)) for one region."""
    if not neighbors:
        raise DegenerateNeighborhoodError("pie_forward requires at least one neighbor")
    c, n, counts = _single_batch(model.m_dim, center, neighbors)
    return float(pie_forward_batch(model, c, n, counts)[0])


def pie_gradients(model: PieModel, center: RegionFeature,
                  neighbors: list[RegionFeature], upstream: float):
    """Exact gradients of upstream * pie_forward w.r.t. phi and psi.

    Returns (phi_grads, psi_grads) as MlpGrads pairs.
    """
    if not neighbors:
        raise DegenerateNeighborhoodError("pie_gradients requires at least one neighbor")
    c, n, counts = _single_batch(model.m_dim, center, neighbors)
    emb, phi_acts, phi_pres = nn._forward_cache(model.phi, n)
    mean_emb = segment_means(emb, counts)
    psi_in = np.hstack([c, mean_emb])
    _, psi_acts, psi_pres = nn._forward_cache(model.psi, psi_in)
    up = np.array([[float(upstream)]])
    psi_grads, dpsi_in = nn._backward_from_cache(model.psi, psi_acts, psi_pres, up)
    dmean = dpsi_in[:, model.phi.in_dim :]
    dnbr_emb = _scatter_segment_mean_grad(dmean, counts)
    phi_grads, _ = nn._backward_from_cache(model.phi, phi_acts, phi_pres, dnbr_emb)
    return phi_grads, psi_grads


def mean_field_forward(model: MeanFieldModel, center: RegionFeature,
                       neighbors: list[RegionFeature]) -> float:
    """psi(center ⊕ mean_j neighbor_j): the raw-average baseline."""
    if not neighbors:
        raise DegenerateNeighborhoodError("mean_field_forward requires at least one neighbor")
    c, n, counts = _single_batch(model.m_dim, center, neighbors)
    return float(mean_field_forward_batch(model, c, n, counts)[0])


def mean_field_gradients(model: MeanFieldModel, center: RegionFeature,
                         neighbors: list[RegionFeature], upstream: float):
    if not neighbors:
        raise DegenerateNeighborhoodError("mean_field_gradients requires at least one neighbor")
    c, n, counts = _single_batch(model.m_dim, center, neighbors)
    out, cache = mean_field_cache_forward(model, c, n, counts)
    flat = mean_field_backward_flat(model, cache, np.array([float(upstream)]))
    return nn._grads_with_flat(model.psi, flat)


def ppie_forward(model: PpieModel, groups: list[list[np.ndarray]]) -> float:
    """psi over the concatenated per-group means of phi_p."""
    if len(groups) != len(model.phis):
        raise ShapeError(f"model has {len(model.phis)} groups, got {len(groups)}")
    parts = []
    for phi, members in zip(model.phis, groups):
        if not members:
            raise DegenerateNeighborhoodError("every group must be non-empty")
        rows = np.asarray([np.asarray(v, dtype=np.float64).ravel() for v in members])
        if rows.shape[1] != phi.in_dim:
            raise ShapeError(f"group vectors have length {rows.shape[1]}, expected {phi.in_dim}")
        parts.append(nn.mlp_forward_batch(phi, rows).mean(axis=0))
    return float(nn.mlp_forward(model.psi, np.concatenate(parts))[0])


def pie_from_mean_field(mf: MeanFieldModel) -> PieModel:
    """The identity-phi set network that reproduces a mean-field model exactly."""
    d = mf.m_dim + 1
    phi = MlpParams([d, d], [np.eye(d)], [np.zeros(d)])
    return PieModel(phi, mf.psi.copy())


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model) -> dict:
    if isinstance(model, PieModel):
        return {
            "kind": "pie",
            "M": model.m_dim,
            "d_emb": model.d_emb,
            "phi": nn.params_to_dict(model.phi),
            "psi": nn.params_to_dict(model.psi),
        }
    if isinstance(model, MeanFieldModel):
        return {"kind": "mf", "M": model.m_dim, "psi": nn.params_to_dict(model.psi)}
    if isinstance(model, PpieModel):
        return {
            "kind": "ppie",
            "groups": [nn.params_to_dict(p) for p in model.phis],
            "psi": nn.params_to_dict(model.psi),
        }
    raise TypeError(f"unsupported model type {type(model).__name__}")


def model_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "pie":
        return PieModel(nn.params_from_dict(doc["phi"]), nn.params_from_dict(doc["psi"]))
    if kind == "mf":
        return MeanFieldModel(nn.params_from_dict(doc["psi"]))
    if kind == "ppie":
        return PpieModel([nn.params_from_dict(p) for p in doc["groups"]],
                         nn.params_from_dict(doc["psi"]))
    raise ShapeError(f"unknown model kind {kind!r}")
