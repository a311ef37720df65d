"""Representation diagnostics.

Two probes quantify what the projector does to the visual features:

* a linear probe (affine-softmax, full-batch gradient descent) trained on
  pre- and post-projector features of the same examples; the accuracy gap
  ``delta_perf = perf_pre - perf_post`` estimates how much linearly usable
  label information the projection destroys. Zero gap means the probe
  family extracts as much from the projected features as from the raw ones.
* a cosine alignment probe pairing projected image features with caption
  embeddings (mean of token embeddings from a supplied table); near-zero
  mean cosine diagnoses an unaligned projector.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alignlab import kernels
from alignlab.datastore import LabeledFeatureSet
from alignlab.errors import ConfigError, FormatError, ShapeMismatchError
from alignlab.numerics import cosine_similarity
from alignlab.projector import ProjectorParams, projector_forward

_SPLIT_STREAM = 17


@dataclass
class ProbeConfig:
    learning_rate: float = 0.1
    l2: float = 1e-4
    tol: float = 1e-7
    max_iter: int = 5000
    train_frac: float = 0.8


@dataclass
class ProbeReport:
    perf_pre: float
    perf_post: float
    delta_perf: float
    n_train: int
    n_test: int
    probe_seed: int

    def __post_init__(self):
        for name in ("perf_pre", "perf_post"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.delta_perf != self.perf_pre - self.perf_post:
            raise ConfigError("delta_perf must equal perf_pre - perf_post exactly")

    def to_dict(self) -> dict:
        return {
            "perf_pre": self.perf_pre, "perf_post": self.perf_post,
            "delta_perf": self.delta_perf, "n_train": self.n_train,
            "n_test": self.n_test, "probe_seed": self.probe_seed,
        }

    def summary_line(self) -> str:
        return (f"deltaperf perf_pre={self.perf_pre:.4f} "
                f"perf_post={self.perf_post:.4f} delta={self.delta_perf:+.4f} "
                f"n_train={self.n_train} n_test={self.n_test}")


def fit_linear_probe(train: LabeledFeatureSet, test: LabeledFeatureSet,
                     seed: int = 0, config: ProbeConfig | None = None) -> float:
    """Train a multinomial logistic probe and return test accuracy.

    Full-batch gradient descent from a zero start (convex, so the seed
    only labels the run), small L2 on the weights, stop on loss
    improvement < tol or max_iter.
    """
    cfg = config or ProbeConfig()
    if train.dim != test.dim:
        raise ShapeMismatchError(
            f"train dim {train.dim} != test dim {test.dim}"
        )
    classes = np.unique(train.labels)
    if classes.size < 2:
        raise ConfigError("probe needs at least 2 classes in the training set")
    n_classes = int(max(train.labels.max(), test.labels.max())) + 1

    x, y = train.features, train.labels
    n = x.shape[0]
    w = np.zeros((train.dim, n_classes))
    b = np.zeros(n_classes)
    prev = np.inf
    for _ in range(cfg.max_iter):
        logits = x @ w + b
        losses, dlogits = kernels.softmax_xent_rows(logits, y)
        loss = float(np.mean(losses)) + 0.5 * cfg.l2 * float(np.sum(w * w))
        dlogits /= n
        w -= cfg.learning_rate * (x.T @ dlogits + cfg.l2 * w)
        b -= cfg.learning_rate * dlogits.sum(axis=0)
        if abs(prev - loss) < cfg.tol:
            break
        prev = loss
    pred = np.argmax(test.features @ w + b, axis=1)
    return float(np.mean(pred == test.labels))


def delta_perf(pre: LabeledFeatureSet, post: LabeledFeatureSet, seed: int,
               config: ProbeConfig | None = None) -> ProbeReport:
    """Probe-accuracy gap between two feature views of the same examples.

    Rows of `pre` and `post` must describe the same examples (labels match
    row-for-row); both views share one seeded 80/20 split.
    """
    cfg = config or ProbeConfig()
    if pre.n != post.n:
        raise ShapeMismatchError(f"pre has {pre.n} rows, post has {post.n}")
    if not np.array_equal(pre.labels, post.labels):
        raise ShapeMismatchError("pre/post labels differ row-for-row")
    rng = np.random.default_rng([seed, _SPLIT_STREAM])
    perm = rng.permutation(pre.n)
    n_train = int(round(pre.n * cfg.train_frac))
    if n_train < 2 or n_train >= pre.n:
        raise ConfigError(f"split leaves no usable train/test rows (n={pre.n})")
    tr, te = perm[:n_train], perm[n_train:]

    def split(fs: LabeledFeatureSet, idx) -> LabeledFeatureSet:
        return LabeledFeatureSet(features=fs.features[idx], labels=fs.labels[idx],
                                 stage_tag=fs.stage_tag)

    perf_pre = fit_linear_probe(split(pre, tr), split(pre, te), seed, cfg)
    perf_post = fit_linear_probe(split(post, tr), split(post, te), seed, cfg)
    return ProbeReport(
        perf_pre=perf_pre, perf_post=perf_post, delta_perf=perf_pre - perf_post,
        n_train=int(n_train), n_test=int(pre.n - n_train), probe_seed=seed,
    )


# --------------------------------------------------------------------------
# cosine alignment probe


@dataclass
class AlignmentReport:
    cosines: list[float]
    mean: float
    median: float
    dataset_id: str
    n_pairs: int
    n_skipped: int

    def to_dict(self) -> dict:
        return {
            "cosines": self.cosines, "mean": self.mean, "median": self.median,
            "dataset_id": self.dataset_id, "n_pairs": self.n_pairs,
            "n_skipped": self.n_skipped,
        }

    def summary_line(self) -> str:
        return (f"cosine dataset={self.dataset_id or '-'} n={self.n_pairs} "
                f"skipped={self.n_skipped} mean={self.mean:.4f} "
                f"median={self.median:.4f}")


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9_]+", text.lower())


def embed_caption(token_table: dict[str, np.ndarray], text: str
                  ) -> np.ndarray | None:
    """Unweighted mean of the covered tokens' embeddings, or None when the
    table covers nothing. Also the hook for embedding generated negative
    captions before they join a contrastive batch as synthetic negatives."""
    vecs = [token_table[t] for t in tokenize(text) if t in token_table]
    if not vecs:
        return None
    return np.mean(np.stack(vecs), axis=0)


def alignment_cosine_probe(projector: ProjectorParams,
                           images: dict[str, np.ndarray],
                           token_table: dict[str, np.ndarray],
                           captions: list[tuple[str, str]],
                           dataset_id: str = "") -> AlignmentReport:
    """Cosine between each projected image feature and its caption embedding.

    The caption embedding is the unweighted mean of its covered tokens'
    embeddings; captions with no covered tokens are skipped and counted.
    """
    cosines: list[float] = []
    n_skipped = 0
    for image_id, caption in captions:
        if image_id not in images:
            raise FormatError(f"caption references unknown image id {image_id!r}")
        cap_vec = embed_caption(token_table, caption)
        if cap_vec is None:
            n_skipped += 1
            continue
        img_vec = projector_forward(projector, images[image_id][None, :])[0]
        cosines.append(cosine_similarity(img_vec, cap_vec))
    if cosines:
        mean = float(np.mean(cosines))
        median = float(np.median(cosines))
    else:
        mean = median = 0.0
    return AlignmentReport(cosines=cosines, mean=mean, median=median,
                           dataset_id=dataset_id, n_pairs=len(cosines),
                           n_skipped=n_skipped)


def write_report(path, report: ProbeReport | AlignmentReport) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
