"""Minibatch least-squares training for the set-network outcome models.

Inputs arrive as a ``SetDesign``: one dense block of center rows plus a
flat block of neighbor rows segmented per sample (CSR style), so batch
assembly is pure fancy indexing.  Features are standardized with the
training split's center-row statistics (centers and neighbors share the
same feature space) and targets are z-scored, which keeps Adam at the
default learning rate effective across reward scales; the fitted wrapper
undoes both transforms at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import deepsets, nn
from .deepsets import MeanFieldModel, PieModel, new_mean_field_model, new_pie_model, segment_means
from .errors import InvalidConfigError, InvalidInputError
from .seeding import mix64, rng_for

__all__ = ["TrainHyper", "SetDesign", "FeatureScaler", "FittedOutcome", "fit_least_squares"]

ARCH_KINDS = ("pie", "mf")


@dataclass
class TrainHyper:
    """Optimization settings shared by every regression fit."""

    arch: str = "pie"
    epochs: int = 300
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    patience: int = 20
    val_fraction: float = 0.1
    d_emb: int = 16
    hidden: tuple[int, ...] = (32, 32)

    def __post_init__(self) -> None:
        if self.arch not in ARCH_KINDS:
            raise InvalidConfigError(f"arch must be one of {ARCH_KINDS}, got {self.arch!r}")
        for name in ("epochs", "batch_size", "patience", "d_emb"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be positive")
        if self.lr <= 0:
            raise InvalidConfigError("lr must be positive")


@dataclass
class SetDesign:
    """Per-sample center rows plus flat neighbor rows with segment counts."""

    center: np.ndarray   # (N, d)
    nbr: np.ndarray      # (P, d)
    counts: np.ndarray   # (N,) neighbor count per sample
    offsets: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.sum() != self.nbr.shape[0]:
            raise InvalidInputError("neighbor rows do not match the segment counts")
        ends = np.cumsum(self.counts)
        self.offsets = ends - self.counts

    @property
    def n_samples(self) -> int:
        return self.center.shape[0]

    def gather(self, idx: np.ndarray):
        """Center rows, neighbor rows, and counts for the selected samples."""
        idx = np.asarray(idx, dtype=np.int64)
        counts_b = self.counts[idx]
        total = int(counts_b.sum())
        seg_end = np.cumsum(counts_b)
        within = np.arange(total) - np.repeat(seg_end - counts_b, counts_b)
        rows = np.repeat(self.offsets[idx], counts_b) + within
        return self.center[idx], self.nbr[rows], counts_b

    def transformed(self, scaler: "FeatureScaler") -> "SetDesign":
        return SetDesign(scaler.transform(self.center), scaler.transform(self.nbr), self.counts)


@dataclass
class FeatureScaler:
    mean: np.ndarray
    scale: np.ndarray

    @staticmethod
    def fit(rows: np.ndarray) -> "FeatureScaler":
        mean = rows.mean(axis=0)
        scale = np.maximum(rows.std(axis=0), 1e-10)
        return FeatureScaler(mean, scale)

    @staticmethod
    def identity(dim: int) -> "FeatureScaler":
        return FeatureScaler(np.zeros(dim), np.ones(dim))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.scale


def _new_model(arch: str, m_dim: int, hyper: TrainHyper, seed: int):
    if arch == "pie":
        return new_pie_model(m_dim, seed, hyper.d_emb, hyper.hidden)
    return new_mean_field_model(m_dim, seed, hyper.hidden)


@dataclass
class FittedOutcome:
    """A trained set network together with its feature/target transforms."""

    model: PieModel | MeanFieldModel
    x_scaler: FeatureScaler
    y_mean: float
    y_scale: float
    train_loss: float
    val_loss: float | None
    epochs_run: int

    @property
    def arch(self) -> str:
        return "pie" if isinstance(self.model, PieModel) else "mf"

    def predict(self, center: np.ndarray, nbr: np.ndarray, counts: np.ndarray) -> np.ndarray:
        c = self.x_scaler.transform(center)
        n = self.x_scaler.transform(nbr)
        out = deepsets.model_forward_batch(self.model, c, n, counts)
        return self.y_mean + self.y_scale * out

    def interference_embedding(self, nbr: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """Per-sample interference summary in the model's own coordinates.

        The learned mean embedding for the set network; the raw feature
        average for the mean-field baseline.
        """
        if isinstance(self.model, PieModel):
            return deepsets.pie_embedding_batch(self.model, self.x_scaler.transform(nbr), counts)
        return segment_means(nbr, counts)

    def gap_stat(self, nbr_a: np.ndarray, nbr_b: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """Scalar discrepancy between two action versions of a neighborhood.

        For the set network this is the difference of embedding norms; for
        the mean-field summary the Euclidean distance of the raw averages.
        """
        if isinstance(self.model, PieModel):
            na = np.linalg.norm(self.interference_embedding(nbr_a, counts), axis=1)
            nb = np.linalg.norm(self.interference_embedding(nbr_b, counts), axis=1)
            return np.abs(na - nb)
        ma = segment_means(nbr_a, counts)
        mb = segment_means(nbr_b, counts)
        return np.linalg.norm(ma - mb, axis=1)


def fit_least_squares(design: SetDesign, y: np.ndarray, hyper: TrainHyper,
                      train_idx: np.ndarray, val_idx: np.ndarray | None = None) -> FittedOutcome:
    """Minibatch-Adam least squares of y on the set features.

    Early stopping monitors the validation MSE each epoch and restores the
    best parameters; with no validation set all epochs run.  Deterministic
    given ``hyper.seed``.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise InvalidInputError("no training samples")
    y = np.asarray(y, dtype=np.float64)

    scaler = FeatureScaler.fit(design.center[train_idx])
    scaled = design.transformed(scaler)
    y_mean = float(y[train_idx].mean())
    y_scale = float(max(y[train_idx].std(), 1e-10))
    y_std = (y - y_mean) / y_scale

    m_dim = design.center.shape[1] - 1
    model = _new_model(hyper.arch, m_dim, hyper, mix64(hyper.seed, "init"))
    flat = model.to_flat()
    m_acc = np.zeros_like(flat)
    v_acc = np.zeros_like(flat)
    rng = rng_for(hyper.seed, "shuffle")

    use_val = val_idx is not None and len(val_idx) > 0
    if use_val:
        val_c, val_n, val_cnt = scaled.gather(np.asarray(val_idx, dtype=np.int64))
        val_y = y_std[np.asarray(val_idx, dtype=np.int64)]
    best_flat = flat.copy()
    best_val = np.inf
    since_best = 0
    step = 0
    epochs_run = 0

    for epoch in range(hyper.epochs):
        order = rng.permutation(train_idx)
        for lo in range(0, len(order), hyper.batch_size):
            batch = order[lo : lo + hyper.batch_size]
            c_b, n_b, cnt_b = scaled.gather(batch)
            out, cache = deepsets.model_cache_forward(model, c_b, n_b, cnt_b)
            resid = out - y_std[batch]
            grad_flat = deepsets.model_backward_flat(model, cache, (2.0 / len(batch)) * resid)
            step += 1
            m_acc, v_acc, delta = nn.adam_update_flat(
                step, m_acc, v_acc, grad_flat, hyper.lr, hyper.beta1
                if hasattr(hyper, "beta1") else 0.9, 0.999, 1e-8)
            flat = flat + delta
            model = model.with_flat(flat)
        epochs_run = epoch + 1
        if use_val:
            val_pred = deepsets.model_forward_batch(model, val_c, val_n, val_cnt)
            val_loss = float(np.mean((val_pred - val_y) ** 2))
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_flat = flat.copy()
                since_best = 0
            else:
                since_best += 1
                if since_best >= hyper.patience:
                    break

    if use_val:
        model = model.with_flat(best_flat)

    tr_c, tr_n, tr_cnt = scaled.gather(train_idx)
    tr_pred = deepsets.model_forward_batch(model, tr_c, tr_n, tr_cnt)
    train_loss = float(np.mean((tr_pred - y_std[train_idx]) ** 2)) * y_scale**2
    return FittedOutcome(
        model=model,
        x_scaler=scaler,
        y_mean=y_mean,
        y_scale=y_scale,
        train_loss=train_loss,
        val_loss=float(best_val) * y_scale**2 if use_val and np.isfinite(best_val) else None,
        epochs_run=epochs_run,
    )
