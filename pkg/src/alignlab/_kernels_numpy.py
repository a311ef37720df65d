"""Pure-numpy implementation of the hot loss kernels.

Fallback used when the compiled extension is unavailable (or forced via
ALIGNLAB_KERNELS=python). Semantics match alignlab._ckernels; values agree
to ~1e-12 relative (summation orders differ between the two backends).

Layout convention for row-wise kernels: candidates are padded into an
(n, m) similarity matrix, `counts[k]` gives the number of valid columns
in row k, and column 0 is always the positive candidate.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _mask(counts: np.ndarray, m: int) -> np.ndarray:
    return np.arange(m)[None, :] < np.asarray(counts)[:, None]


def softmax_ce_rows(sims, counts, inv_beta):
    """Per-row softmax cross-entropy with the positive at column 0.

    loss_k = logsumexp(z_k) - z_k0 with z = sims * inv_beta over the
    first counts[k] columns. Returns (losses (n,), dsims (n, m)).
    """
    sims = np.asarray(sims, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    n, m = sims.shape
    valid = _mask(counts, m)
    z = np.where(valid, sims * inv_beta, -np.inf)
    zmax = np.max(z, axis=1)
    ez = np.exp(z - zmax[:, None])
    ez[~valid] = 0.0
    sums = np.sum(ez, axis=1)
    lse = zmax + np.log(sums)
    losses = lse - z[:, 0]
    p = ez / sums[:, None]
    dsims = p * inv_beta
    dsims[:, 0] -= inv_beta
    dsims[~valid] = 0.0
    return losses, dsims


def hinge_positive_rows(sims, counts, tau):
    """Per-row hinge of the positive (column 0) against each negative.

    loss_k = mean over j in 1..counts[k]-1 of max(0, tau - s_k0 + s_kj);
    subgradient 0 at the kink. Rows need counts[k] >= 2.
    """
    sims = np.asarray(sims, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    n, m = sims.shape
    valid = _mask(counts, m)
    valid[:, 0] = False
    margins = tau - sims[:, :1] + sims
    active = (margins > 0.0) & valid
    n_neg = (counts - 1).astype(np.float64)
    losses = np.sum(np.where(active, margins, 0.0), axis=1) / n_neg
    dsims = np.where(active, 1.0, 0.0) / n_neg[:, None]
    dsims[:, 0] = -np.sum(active, axis=1) / n_neg
    return losses, dsims


def hinge_pair_rows(syn, syn_counts, std, std_counts, tau):
    """Per-row hinge over all (synthetic, standard) candidate pairs.

    loss_k = mean over (i, j) of max(0, tau - syn_ki + std_kj).
    Returns (losses, dsyn, dstd).
    """
    syn = np.asarray(syn, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    syn_counts = np.asarray(syn_counts, dtype=np.int64)
    std_counts = np.asarray(std_counts, dtype=np.int64)
    n, ms = syn.shape
    mt = std.shape[1]
    vs = _mask(syn_counts, ms)
    vt = _mask(std_counts, mt)
    pair_valid = vs[:, :, None] & vt[:, None, :]
    margins = tau - syn[:, :, None] + std[:, None, :]
    active = (margins > 0.0) & pair_valid
    n_pairs = (syn_counts * std_counts).astype(np.float64)
    losses = np.sum(np.where(active, margins, 0.0), axis=(1, 2)) / n_pairs
    act = active.astype(np.float64)
    dsyn = -np.sum(act, axis=2) / n_pairs[:, None]
    dstd = np.sum(act, axis=1) / n_pairs[:, None]
    return losses, dsyn, dstd


def gelu(x):
    """Exact (erf-based) GELU: x * Phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    """d/dx of exact GELU: Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return cdf + x * pdf


def softmax_xent_rows(logits, labels):
    """Per-row softmax cross-entropy against integer labels.

    Returns (losses (n,), dlogits (n, c)) with dlogits = softmax - onehot
    (not scaled by any batch reduction).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    zmax = np.max(logits, axis=1)
    ez = np.exp(logits - zmax[:, None])
    sums = np.sum(ez, axis=1)
    lse = zmax + np.log(sums)
    rows = np.arange(logits.shape[0])
    losses = lse - logits[rows, labels]
    dlogits = ez / sums[:, None]
    dlogits[rows, labels] -= 1.0
    return losses, dlogits
