"""Shared test helpers: random batch builders and a flatten/rebuild
bridge so the finite-difference oracle can drive whole-batch losses."""

from __future__ import annotations

import numpy as np

from alignlab.losses import ContrastiveBatch


def random_batch(seed: int, n: int = 4, d: int = 8, n_std: int = 3,
                 n_syn: int = 2) -> ContrastiveBatch:
    rng = np.random.default_rng(seed)
    return ContrastiveBatch(
        images=rng.standard_normal((n, d)),
        positives=rng.standard_normal((n, d)),
        standard_negatives=[rng.standard_normal((n_std, d)) for _ in range(n)],
        synthetic_negatives=[rng.standard_normal((n_syn, d)) for _ in range(n)],
    )


def batch_to_theta(batch: ContrastiveBatch) -> np.ndarray:
    parts = [batch.images.ravel(), batch.positives.ravel()]
    parts += [a.ravel() for a in batch.standard_negatives]
    parts += [a.ravel() for a in batch.synthetic_negatives]
    return np.concatenate(parts)


def theta_to_batch(theta: np.ndarray, template: ContrastiveBatch) -> ContrastiveBatch:
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = theta[pos:pos + size].reshape(shape)
        pos += size
        return out

    images = take(template.images.shape)
    positives = take(template.positives.shape)
    std = [take(a.shape) for a in template.standard_negatives]
    syn = [take(a.shape) for a in template.synthetic_negatives]
    return ContrastiveBatch(images=images, positives=positives,
                            standard_negatives=std, synthetic_negatives=syn)


def grads_to_theta(grads: dict, template: ContrastiveBatch) -> np.ndarray:
    parts = [grads["images"].ravel(), grads["positives"].ravel()]
    parts += [a.ravel() for a in grads["standard_negatives"]]
    parts += [a.ravel() for a in grads["synthetic_negatives"]]
    return np.concatenate(parts)
