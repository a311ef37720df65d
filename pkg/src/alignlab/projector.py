"""The projector under study: a 1- or 2-layer affine map (GELU between
layers) with exact reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from alignlab import kernels
from alignlab.errors import ConfigError, ShapeMismatchError
from alignlab.numerics import as_matrix


@dataclass
class ProjectorParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) not in (1, 2) or len(self.biases) != len(self.weights):
            raise ConfigError("projector must have 1 or 2 affine layers")
        self.weights = [as_matrix(w) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ShapeMismatchError(f"layer {i}: bias {b.shape} vs W {w.shape}")
        if len(self.weights) == 2 and self.weights[0].shape[1] != self.weights[1].shape[0]:
            raise ShapeMismatchError("hidden dims of the two layers disagree")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def init(cls, in_dim: int, out_dim: int, hidden_dim: int | None = None,
             n_layers: int = 2, seed: int = 0) -> "ProjectorParams":
        """Seeded Gaussian weights scaled by 1/sqrt(fan_in), zero biases.

        The default hidden width is 4x the input dim, mirroring the usual
        vision-to-LLM expansion ratio.
        """
        rng = np.random.default_rng(seed)
        if n_layers == 1:
            dims = [(in_dim, out_dim)]
        elif n_layers == 2:
            hidden = hidden_dim or 4 * in_dim
            dims = [(in_dim, hidden), (hidden, out_dim)]
        else:
            raise ConfigError("n_layers must be 1 or 2")
        weights = [rng.standard_normal(d) / np.sqrt(d[0]) for d in dims]
        biases = [np.zeros(d[1]) for d in dims]
        return cls(weights=weights, biases=biases)

    @classmethod
    def identity(cls, dim: int) -> "ProjectorParams":
        return cls(weights=[np.eye(dim)], biases=[np.zeros(dim)])


@dataclass
class ProjectorGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def projector_forward(params: ProjectorParams, x) -> np.ndarray:
    out, _ = _forward_cached(params, x)
    return out


def _forward_cached(params: ProjectorParams, x):
    x = as_matrix(x)
    if x.shape[1] != params.in_dim:
        raise ShapeMismatchError(
            f"input dim {x.shape[1]} != projector in_dim {params.in_dim}"
        )
    h = x @ params.weights[0] + params.biases[0]
    if params.n_layers == 1:
        return h, (x, h)
    a = kernels.gelu(h)
    out = a @ params.weights[1] + params.biases[1]
    return out, (x, h, a)


def projector_backward(params: ProjectorParams, x, upstream_grads) -> ProjectorGrads:
    """Exact gradients of the affine/GELU composition.

    `upstream_grads` is dL/d(output), shape (n, out_dim); returns parameter
    gradients plus dL/d(input).
    """
    out, cache = _forward_cached(params, x)
    up = as_matrix(upstream_grads)
    if up.shape != out.shape:
        raise ShapeMismatchError(f"upstream shape {up.shape} != output {out.shape}")
    if params.n_layers == 1:
        xmat, _ = cache
        return ProjectorGrads(
            weights=[xmat.T @ up],
            biases=[up.sum(axis=0)],
            inputs=up @ params.weights[0].T,
        )
    xmat, h, a = cache
    dw2 = a.T @ up
    db2 = up.sum(axis=0)
    da = up @ params.weights[1].T
    dh = da * kernels.gelu_grad(h)
    dw1 = xmat.T @ dh
    db1 = dh.sum(axis=0)
    dx = dh @ params.weights[0].T
    return ProjectorGrads(weights=[dw1, dw2], biases=[db1, db2], inputs=dx)
