import math

import numpy as np
import pytest
from scipy.special import erf

from alignlab.errors import ShapeMismatchError
from alignlab.numerics import finite_difference_gradient, max_relative_error
from alignlab.projector import (
    ProjectorParams,
    projector_backward,
    projector_forward,
)


def _gelu_scalar(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


class TestForward:
    def test_identity_projector(self):
        p = ProjectorParams.identity(3)
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert np.array_equal(projector_forward(p, x), x)

    def test_zero_input_two_layer_fixture(self):
        """Hand computation: zero input flows GELU(b1) @ W2 + b2."""
        w1 = np.array([[0.3, -0.2], [0.1, 0.4]])
        b1 = np.array([0.5, -1.0])
        w2 = np.array([[2.0, 0.0], [1.0, -1.0]])
        b2 = np.array([0.25, 0.75])
        p = ProjectorParams(weights=[w1, w2], biases=[b1, b2])
        out = projector_forward(p, np.zeros((2, 2)))
        hidden = np.array([_gelu_scalar(0.5), _gelu_scalar(-1.0)])
        expected = hidden @ w2 + b2
        np.testing.assert_allclose(out, np.stack([expected, expected]), atol=1e-12)

    def test_row_independence(self):
        p = ProjectorParams.init(5, 4, seed=1)
        x = np.random.default_rng(2).standard_normal((6, 5))
        perm = np.random.default_rng(3).permutation(6)
        np.testing.assert_array_equal(
            projector_forward(p, x[perm]), projector_forward(p, x)[perm]
        )

    def test_dimension_mismatch(self):
        p = ProjectorParams.init(5, 4, seed=1)
        with pytest.raises(ShapeMismatchError):
            projector_forward(p, np.zeros((2, 3)))


class TestBackward:
    @pytest.mark.parametrize("n_layers", [1, 2])
    def test_finite_difference_match(self, n_layers):
        rng = np.random.default_rng(10 + n_layers)
        p = ProjectorParams.init(4, 3, hidden_dim=5, n_layers=n_layers, seed=7)
        x0 = rng.standard_normal((3, 4))
        upstream = rng.standard_normal((3, 3))

        arrays = p.param_arrays() + [x0]
        sizes = [a.size for a in arrays]
        shapes = [a.shape for a in arrays]

        def unpack(theta):
            out, pos = [], 0
            for size, shape in zip(sizes, shapes):
                out.append(theta[pos:pos + size].reshape(shape))
                pos += size
            ws = out[0:2 * n_layers:2]
            bs = out[1:2 * n_layers:2]
            return ProjectorParams(weights=ws, biases=bs), out[-1]

        def f(theta):
            params, x = unpack(theta)
            return float(np.sum(projector_forward(params, x) * upstream))

        theta0 = np.concatenate([a.ravel() for a in arrays])
        grads = projector_backward(p, x0, upstream)
        analytic = np.concatenate(
            [g.ravel() for g in grads.param_arrays()] + [grads.inputs.ravel()]
        )
        numeric = finite_difference_gradient(f, theta0)
        assert max_relative_error(analytic, numeric) <= 1e-4

    def test_zero_upstream_zero_grads(self):
        p = ProjectorParams.init(4, 4, seed=9)
        x = np.random.default_rng(1).standard_normal((5, 4))
        grads = projector_backward(p, x, np.zeros((5, 4)))
        for g in grads.param_arrays() + [grads.inputs]:
            assert np.all(g == 0.0)

    def test_single_layer_weight_grad_is_outer_product(self):
        """For out = x @ W, dL/dW = x^T @ upstream; checked on a 2x2 fixture."""
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        p = ProjectorParams(weights=[w], biases=[np.zeros(2)])
        x = np.array([[1.0, 2.0], [0.5, -1.0]])
        up = np.array([[1.0, 0.0], [0.0, 1.0]])
        grads = projector_backward(p, x, up)
        expected = x.T @ up
        np.testing.assert_allclose(grads.weights[0], expected, atol=1e-15)
        np.testing.assert_allclose(grads.biases[0], up.sum(axis=0), atol=1e-15)

    def test_upstream_shape_checked(self):
        p = ProjectorParams.init(3, 2, seed=0)
        with pytest.raises(ShapeMismatchError):
            projector_backward(p, np.zeros((2, 3)), np.zeros((2, 3)))
