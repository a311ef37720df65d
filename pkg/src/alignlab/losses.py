"""Loss objectives for image-text alignment, with analytic gradients.

Similarities are cosine by default (raw dot products of L2-normalized
vectors; set ``LossConfig.normalize=False`` for plain dot products), and
every objective reduces by mean: first over an anchor's negatives (or
negative pairs), then over the batch. Gradients are returned with respect
to every raw input vector, including the chain through normalization.

Objectives:

* ``contrastive_directional`` - temperature-scaled softmax loss of one
  positive against a negative pool, image-to-text or text-to-image.
* ``contrastive_itc`` - symmetric average of the two directions.
* ``margin_positive_vs_all`` - hinge forcing the positive above every
  negative (standard and synthetic) by at least ``tau1``.
* ``margin_synthetic_vs_standard`` - hinge forcing synthetic negatives
  above standard ones by at least ``tau2`` (synthetics are near-misses,
  so they should score between the positive and unrelated texts).
* ``total_finegrained_loss`` - contrastive (with synthetics in the pool)
  plus the two weighted margins.
* ``generation_surrogate_loss`` - linear-decoder cross-entropy standing
  in for an autoregressive captioning loss at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from alignlab import kernels
from alignlab.errors import (
    ConfigError,
    InsufficientDataError,
    NonFiniteError,
    ShapeMismatchError,
)
from alignlab.numerics import as_matrix


@dataclass
class LossConfig:
    """Temperatures, margins, and weights shared by the objectives.

    Defaults: lambda1 = lambda2 = 1 (reference values for the combined
    objective); beta = 0.07 and tau1 = tau2 = 0.2 are assumed (standard
    contrastive temperature, margins sized for cosine-scale scores).
    """

    beta: float = 0.07
    tau1: float = 0.2
    tau2: float = 0.2
    lambda1: float = 1.0
    lambda2: float = 1.0
    normalize: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ConfigError(f"beta must be finite and > 0, got {self.beta}")
        for name in ("tau1", "tau2", "lambda1", "lambda2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def from_dict(cls, raw: dict) -> "LossConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown LossConfig keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class ContrastiveBatch:
    """A batch of anchors with their positives and negative pools.

    ``standard_negatives[k]`` and ``synthetic_negatives[k]`` are (m, d)
    arrays of text vectors for image k (possibly empty). For in-batch
    training the standard negatives of image k are exactly the other
    images' positives; ``in_batch`` builds that layout.
    """

    images: np.ndarray
    positives: np.ndarray
    standard_negatives: list[np.ndarray] = field(default_factory=list)
    synthetic_negatives: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.images = as_matrix(self.images)
        self.positives = as_matrix(self.positives)
        n, d = self.images.shape
        if n < 1:
            raise ShapeMismatchError("batch must contain at least one pair")
        if self.positives.shape != (n, d):
            raise ShapeMismatchError(
                f"positives shape {self.positives.shape} != images shape {(n, d)}"
            )
        if not self.standard_negatives:
            self.standard_negatives = [np.zeros((0, d))] * n
        if not self.synthetic_negatives:
            self.synthetic_negatives = [np.zeros((0, d))] * n
        for name in ("standard_negatives", "synthetic_negatives"):
            lists = getattr(self, name)
            if len(lists) != n:
                raise ShapeMismatchError(f"{name}: {len(lists)} lists for {n} images")
            coerced = []
            for k, arr in enumerate(lists):
                a = np.asarray(arr, dtype=np.float64)
                if a.size == 0:
                    a = a.reshape(0, d)
                if a.ndim != 2 or a.shape[1] != d:
                    raise ShapeMismatchError(
                        f"{name}[{k}] has shape {a.shape}, expected (*, {d})"
                    )
                coerced.append(a)
            setattr(self, name, coerced)

    @property
    def n(self) -> int:
        return self.images.shape[0]

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    @classmethod
    def in_batch(cls, images, texts, synthetic_negatives=None) -> "ContrastiveBatch":
        images = as_matrix(images)
        texts = as_matrix(texts)
        std = [np.delete(texts, k, axis=0) for k in range(texts.shape[0])]
        return cls(images=images, positives=texts, standard_negatives=std,
                   synthetic_negatives=synthetic_negatives or [])


@dataclass
class LossValueAndGrads:
    value: float
    grads: dict[str, object]
    degenerate_anchors: tuple[int, ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NonFiniteError(f"loss value is not finite: {self.value}")


def _zero_like_batch(batch: ContrastiveBatch) -> dict:
    return {
        "images": np.zeros_like(batch.images),
        "positives": np.zeros_like(batch.positives),
        "standard_negatives": [np.zeros_like(a) for a in batch.standard_negatives],
        "synthetic_negatives": [np.zeros_like(a) for a in batch.synthetic_negatives],
    }


# --------------------------------------------------------------------------
# similarity layer: padded candidate tensors and the normalization chain


def _norm_rows_padded(x: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("...d,...d->...", x, x))
    safe = np.where(valid, norms, 1.0)
    if np.any((safe == 0.0) & valid):
        raise ShapeMismatchError("zero-norm vector in batch")
    return x / safe[..., None], safe


def _sim_forward(queries: np.ndarray, cand: np.ndarray, counts: np.ndarray,
                 normalize: bool):
    """Cosine (or dot) similarities between queries and padded candidates.

    Returns (sims (n, m), aux) where aux carries what the backward pass
    needs to push dL/dsims into dL/dqueries and dL/dcand.
    """
    n, m, _ = cand.shape
    valid = np.arange(m)[None, :] < counts[:, None]
    if normalize:
        qhat, qnorm = _norm_rows_padded(queries, np.ones(n, dtype=bool))
        chat, cnorm = _norm_rows_padded(cand, valid)
        sims = np.einsum("kd,kmd->km", qhat, chat)
    else:
        qhat, qnorm, chat, cnorm = queries, None, cand, None
        sims = np.einsum("kd,kmd->km", queries, cand)
    sims = np.where(valid, sims, 0.0)
    return sims, (qhat, qnorm, chat, cnorm, sims, normalize)


def _sim_backward(dsims: np.ndarray, aux):
    qhat, qnorm, chat, cnorm, sims, normalize = aux
    if normalize:
        dq = (np.einsum("km,kmd->kd", dsims, chat)
              - np.einsum("km,km->k", dsims, sims)[:, None] * qhat) / qnorm[:, None]
        dc = (dsims[..., None] * (qhat[:, None, :] - sims[..., None] * chat)
              / cnorm[..., None])
    else:
        dq = np.einsum("km,kmd->kd", dsims, chat)
        dc = dsims[..., None] * qhat[:, None, :]
    return dq, dc


def _pack_i2t(batch: ContrastiveBatch, include_synthetic: bool):
    """Candidates per image anchor: positive first, then the negative pool."""
    n, d = batch.images.shape
    std_sizes = np.array([a.shape[0] for a in batch.standard_negatives])
    syn_sizes = (np.array([a.shape[0] for a in batch.synthetic_negatives])
                 if include_synthetic else np.zeros(n, dtype=np.int64))
    counts = (1 + std_sizes + syn_sizes).astype(np.int64)
    m = int(counts.max())
    cand = np.zeros((n, m, d))
    cand[:, 0, :] = batch.positives
    for k in range(n):
        j = 1
        a = batch.standard_negatives[k]
        cand[k, j:j + a.shape[0]] = a
        j += a.shape[0]
        if include_synthetic:
            s = batch.synthetic_negatives[k]
            cand[k, j:j + s.shape[0]] = s
    return cand, counts, std_sizes, syn_sizes


def _scatter_i2t(batch: ContrastiveBatch, dq, dc, std_sizes, syn_sizes,
                 include_synthetic: bool) -> dict:
    grads = _zero_like_batch(batch)
    grads["images"] += dq
    grads["positives"] += dc[:, 0, :]
    for k in range(batch.n):
        j = 1
        grads["standard_negatives"][k] += dc[k, j:j + std_sizes[k]]
        j += std_sizes[k]
        if include_synthetic:
            grads["synthetic_negatives"][k] += dc[k, j:j + syn_sizes[k]]
    return grads


def _pack_t2i(batch: ContrastiveBatch):
    """Candidates per text anchor: its own image first, then the other images.

    Negatives on the text-to-image side are the in-batch images; the
    synthetic pool is text-only and never enters this direction.
    """
    n, d = batch.images.shape
    tau = np.empty((n, n), dtype=np.intp)
    tau[:, 0] = np.arange(n)
    for k in range(n):
        tau[k, 1:] = np.concatenate([np.arange(0, k), np.arange(k + 1, n)])
    cand = batch.images[tau]
    counts = np.full(n, n, dtype=np.int64)
    return cand, counts, tau


def _mean_scale(dsims: np.ndarray, n: int) -> np.ndarray:
    return dsims / n


# --------------------------------------------------------------------------
# objectives


def contrastive_directional(batch: ContrastiveBatch, config: LossConfig,
                            direction: str, include_synthetic: bool
                            ) -> LossValueAndGrads:
    """Softmax contrastive loss in one direction.

    Per anchor: -log( exp(s+/beta) / sum over candidates exp(s*/beta) ),
    averaged over the batch. ``include_synthetic`` widens the i2t negative
    pool with the synthetic captions. An anchor with no negatives
    contributes exactly 0 and is reported in ``degenerate_anchors``.
    """
    if direction not in ("i2t", "t2i"):
        raise ConfigError(f"direction must be 'i2t' or 't2i', got {direction!r}")
    n = batch.n
    inv_beta = 1.0 / config.beta
    if direction == "i2t":
        cand, counts, std_sizes, syn_sizes = _pack_i2t(batch, include_synthetic)
        sims, aux = _sim_forward(batch.images, cand, counts, config.normalize)
        losses, dsims = kernels.softmax_ce_rows(sims, counts, inv_beta)
        dq, dc = _sim_backward(_mean_scale(dsims, n), aux)
        grads = _scatter_i2t(batch, dq, dc, std_sizes, syn_sizes, include_synthetic)
    else:
        cand, counts, tau = _pack_t2i(batch)
        sims, aux = _sim_forward(batch.positives, cand, counts, config.normalize)
        losses, dsims = kernels.softmax_ce_rows(sims, counts, inv_beta)
        dq, dc = _sim_backward(_mean_scale(dsims, n), aux)
        grads = _zero_like_batch(batch)
        grads["positives"] += dq
        np.add.at(grads["images"], tau.ravel(), dc.reshape(-1, batch.dim))
    degenerate = tuple(int(k) for k in np.flatnonzero(counts == 1))
    return LossValueAndGrads(value=float(np.mean(losses)), grads=grads,
                             degenerate_anchors=degenerate)


def contrastive_itc(batch: ContrastiveBatch, config: LossConfig,
                    include_synthetic: bool) -> LossValueAndGrads:
    """Symmetric contrastive loss: (i2t + t2i) / 2, gradients averaged."""
    a = contrastive_directional(batch, config, "i2t", include_synthetic)
    b = contrastive_directional(batch, config, "t2i", include_synthetic)
    grads = {
        "images": 0.5 * (a.grads["images"] + b.grads["images"]),
        "positives": 0.5 * (a.grads["positives"] + b.grads["positives"]),
        "standard_negatives": [
            0.5 * (x + y) for x, y in zip(a.grads["standard_negatives"],
                                          b.grads["standard_negatives"])
        ],
        "synthetic_negatives": [
            0.5 * (x + y) for x, y in zip(a.grads["synthetic_negatives"],
                                          b.grads["synthetic_negatives"])
        ],
    }
    return LossValueAndGrads(
        value=0.5 * (a.value + b.value), grads=grads,
        degenerate_anchors=tuple(sorted(set(a.degenerate_anchors)
                                        | set(b.degenerate_anchors))),
    )


def margin_positive_vs_all(batch: ContrastiveBatch, config: LossConfig
                           ) -> LossValueAndGrads:
    """Hinge of each positive against its whole negative pool.

    Per image: mean over negatives T* (standard plus synthetic) of
    max(0, tau1 - s(I, T+) + s(I, T*)); then mean over the batch.
    Subgradient at the kink is 0.
    """
    sizes = [a.shape[0] + b.shape[0] for a, b in
             zip(batch.standard_negatives, batch.synthetic_negatives)]
    if min(sizes) == 0:
        bad = sizes.index(0)
        raise InsufficientDataError(
            f"margin_positive_vs_all: image {bad} has no negatives"
        )
    cand, counts, std_sizes, syn_sizes = _pack_i2t(batch, include_synthetic=True)
    sims, aux = _sim_forward(batch.images, cand, counts, config.normalize)
    losses, dsims = kernels.hinge_positive_rows(sims, counts, config.tau1)
    dq, dc = _sim_backward(_mean_scale(dsims, batch.n), aux)
    grads = _scatter_i2t(batch, dq, dc, std_sizes, syn_sizes, include_synthetic=True)
    return LossValueAndGrads(value=float(np.mean(losses)), grads=grads)


def margin_synthetic_vs_standard(batch: ContrastiveBatch, config: LossConfig
                                 ) -> LossValueAndGrads:
    """Hinge separating the two negative classes.

    Per image: mean over (synthetic, standard) pairs of
    max(0, tau2 - s(I, T_syn) + s(I, T_std)); then mean over the batch.
    """
    n, d = batch.images.shape
    syn_sizes = np.array([a.shape[0] for a in batch.synthetic_negatives])
    std_sizes = np.array([a.shape[0] for a in batch.standard_negatives])
    if np.any(syn_sizes == 0):
        bad = int(np.flatnonzero(syn_sizes == 0)[0])
        raise InsufficientDataError(
            f"margin_synthetic_vs_standard: image {bad} has no synthetic negatives"
        )
    if np.any(std_sizes == 0):
        bad = int(np.flatnonzero(std_sizes == 0)[0])
        raise InsufficientDataError(
            f"margin_synthetic_vs_standard: image {bad} has no standard negatives"
        )

    def pack(lists, sizes):
        m = int(sizes.max())
        out = np.zeros((n, m, d))
        for k, a in enumerate(lists):
            out[k, :a.shape[0]] = a
        return out

    syn_cand = pack(batch.synthetic_negatives, syn_sizes)
    std_cand = pack(batch.standard_negatives, std_sizes)
    syn_counts = syn_sizes.astype(np.int64)
    std_counts = std_sizes.astype(np.int64)
    syn_sims, syn_aux = _sim_forward(batch.images, syn_cand, syn_counts,
                                     config.normalize)
    std_sims, std_aux = _sim_forward(batch.images, std_cand, std_counts,
                                     config.normalize)
    losses, dsyn, dstd = kernels.hinge_pair_rows(
        syn_sims, syn_counts, std_sims, std_counts, config.tau2
    )
    dq_syn, dc_syn = _sim_backward(_mean_scale(dsyn, n), syn_aux)
    dq_std, dc_std = _sim_backward(_mean_scale(dstd, n), std_aux)
    grads = _zero_like_batch(batch)
    grads["images"] += dq_syn + dq_std
    for k in range(n):
        grads["synthetic_negatives"][k] += dc_syn[k, :syn_sizes[k]]
        grads["standard_negatives"][k] += dc_std[k, :std_sizes[k]]
    return LossValueAndGrads(value=float(np.mean(losses)), grads=grads)


def total_finegrained_loss(batch: ContrastiveBatch, config: LossConfig
                           ) -> LossValueAndGrads:
    """Combined objective: contrastive (synthetics in the pool) plus the
    two margin terms weighted by lambda1 and lambda2.

    Zero weights skip their term entirely, so the reduction to the bare
    contrastive loss is bitwise.
    """
    if any(a.shape[0] == 0 for a in batch.synthetic_negatives):
        raise InsufficientDataError(
            "total_finegrained_loss: every image needs synthetic negatives"
        )
    base = contrastive_itc(batch, config, include_synthetic=True)
    value = base.value
    grads = base.grads
    for weight, term_fn in ((config.lambda1, margin_positive_vs_all),
                            (config.lambda2, margin_synthetic_vs_standard)):
        if weight == 0.0:
            continue
        term = term_fn(batch, config)
        value += weight * term.value
        grads["images"] += weight * term.grads["images"]
        grads["positives"] += weight * term.grads["positives"]
        for k in range(batch.n):
            grads["standard_negatives"][k] += weight * term.grads["standard_negatives"][k]
            grads["synthetic_negatives"][k] += weight * term.grads["synthetic_negatives"][k]
    return LossValueAndGrads(value=value, grads=grads,
                             degenerate_anchors=base.degenerate_anchors)


@dataclass
class LinearDecoder:
    """Affine-softmax read-out standing in for the language decoder."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = as_matrix(self.weights)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeMismatchError(
                f"bias shape {self.bias.shape} != ({self.weights.shape[1]},)"
            )

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, dim: int, n_classes: int) -> "LinearDecoder":
        return cls(np.zeros((dim, n_classes)), np.zeros(n_classes))


def generation_surrogate_loss(projected_images, targets, decoder: LinearDecoder
                              ) -> LossValueAndGrads:
    """Mean cross-entropy of a linear decoder over projected features.

    Desk-scale surrogate for a captioning loss: keeps a generation
    objective that competes with the contrastive one during alignment.
    Gradients under keys 'features', 'weights', 'bias'.
    """
    x = as_matrix(projected_images)
    y = np.asarray(targets, dtype=np.int64)
    n = x.shape[0]
    if y.shape != (n,):
        raise ShapeMismatchError(f"targets shape {y.shape} != ({n},)")
    if x.shape[1] != decoder.weights.shape[0]:
        raise ShapeMismatchError(
            f"features dim {x.shape[1]} != decoder in-dim {decoder.weights.shape[0]}"
        )
    if y.size and (y.min() < 0 or y.max() >= decoder.n_classes):
        raise ConfigError(
            f"targets must lie in [0, {decoder.n_classes}), got "
            f"[{y.min()}, {y.max()}]"
        )
    logits = x @ decoder.weights + decoder.bias
    losses, dlogits = kernels.softmax_xent_rows(logits, y)
    dlogits = dlogits / n
    grads = {
        "features": dlogits @ decoder.weights.T,
        "weights": x.T @ dlogits,
        "bias": dlogits.sum(axis=0),
    }
    return LossValueAndGrads(value=float(np.mean(losses)), grads=grads)
