import math

import numpy as np
import pytest

from alignlab.errors import NonFiniteError, ShapeMismatchError, ZeroNormError
from alignlab.numerics import (
    cosine_similarity,
    finite_difference_gradient,
    logsumexp,
    max_relative_error,
    row_cosines,
)


class TestCosineSimilarity:
    def test_identical_vectors(self):
        assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_45_degrees(self):
        # independent scalar computation: 1/sqrt(2)
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(
            1.0 / math.sqrt(2.0), abs=1e-15
        )
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(
            0.7071067811865475, abs=1e-15
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero_norm(self):
        with pytest.raises(ZeroNormError):
            cosine_similarity([0, 0], [1, 0])

    def test_symmetry_and_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = rng.standard_normal(5)
            b = rng.standard_normal(5)
            s = cosine_similarity(a, b)
            assert s == cosine_similarity(b, a)
            assert abs(s) <= 1.0 + 1e-12

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = rng.standard_normal(4)
            b = rng.standard_normal(4)
            c = float(rng.uniform(0.01, 100.0))
            assert cosine_similarity(c * a, b) == pytest.approx(
                cosine_similarity(a, b), abs=1e-12
            )

    def test_row_cosines_matches_scalar(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((6, 4))
        b = rng.standard_normal((6, 4))
        rows = row_cosines(a, b)
        for k in range(6):
            assert rows[k] == pytest.approx(cosine_similarity(a[k], b[k]), abs=1e-12)


class TestLogSumExp:
    def test_singleton_identity(self):
        assert logsumexp([5.0]) == 5.0

    def test_two_equal(self):
        assert logsumexp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_no_overflow(self):
        # shifted hand computation: 1000 + ln 2
        assert logsumexp([1000.0, 1000.0]) == pytest.approx(
            1000.0 + math.log(2.0), abs=1e-12
        )

    def test_empty_rejected(self):
        with pytest.raises(ShapeMismatchError):
            logsumexp([])

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            v = rng.uniform(-50, 50, size=rng.integers(1, 10))
            lse = logsumexp(v)
            assert lse >= np.max(v) - 1e-12
            assert lse <= np.max(v) + math.log(len(v)) + 1e-12


class TestFiniteDifferenceGradient:
    def test_quadratic(self):
        grad = finite_difference_gradient(lambda t: t[0] ** 2, [3.0], eps=1e-5)
        assert grad[0] == pytest.approx(6.0, rel=1e-7)

    def test_constant(self):
        grad = finite_difference_gradient(lambda t: 7.5, np.zeros(4))
        assert np.all(grad == 0.0)

    def test_product(self):
        grad = finite_difference_gradient(lambda t: t[0] * t[1], [2.0, 5.0])
        assert grad == pytest.approx([5.0, 2.0], rel=1e-7)

    def test_nonfinite_names_coordinate(self):
        def f(t):
            return float("nan") if t[1] != 1.0 else 1.0

        with pytest.raises(NonFiniteError, match="coordinate 1"):
            finite_difference_gradient(f, [0.0, 1.0, 2.0])

    def test_bad_eps(self):
        with pytest.raises(ShapeMismatchError):
            finite_difference_gradient(lambda t: 0.0, [1.0], eps=0.0)


class TestMaxRelativeError:
    def test_zero_for_equal(self):
        assert max_relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_scale(self):
        # |1.0 - 1.001| / (1.001 + 1e-8) ~ 1e-3
        assert max_relative_error([1.0], [1.001]) == pytest.approx(1e-3, rel=1e-2)
