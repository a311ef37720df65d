"""Cross-backend agreement between the compiled and numpy kernels."""

import math

import numpy as np
import pytest
from scipy.special import erf

from alignlab import kernels
from alignlab import _kernels_numpy as ref

compiled = pytest.importorskip("alignlab._ckernels")


def _rand_rows(seed, n=16, m=12):
    rng = np.random.default_rng(seed)
    sims = np.ascontiguousarray(rng.uniform(-1, 1, size=(n, m)))
    counts = rng.integers(2, m + 1, size=n).astype(np.int64)
    sims[np.arange(m)[None, :] >= counts[:, None]] = 0.0
    return sims, counts


@pytest.mark.parametrize("seed", range(5))
def test_softmax_ce_rows_agree(seed):
    sims, counts = _rand_rows(seed)
    l_ref, d_ref = ref.softmax_ce_rows(sims, counts, 1.0 / 0.07)
    l_c, d_c = compiled.softmax_ce_rows(sims, counts, 1.0 / 0.07)
    np.testing.assert_allclose(l_c, l_ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(d_c, d_ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_hinge_positive_rows_agree(seed):
    sims, counts = _rand_rows(seed)
    l_ref, d_ref = ref.hinge_positive_rows(sims, counts, 0.2)
    l_c, d_c = compiled.hinge_positive_rows(sims, counts, 0.2)
    np.testing.assert_allclose(l_c, l_ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(d_c, d_ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_hinge_pair_rows_agree(seed):
    syn, syn_counts = _rand_rows(seed, n=8, m=4)
    std, std_counts = _rand_rows(seed + 100, n=8, m=6)
    out_ref = ref.hinge_pair_rows(syn, syn_counts, std, std_counts, 0.2)
    out_c = compiled.hinge_pair_rows(syn, syn_counts, std, std_counts, 0.2)
    for a, b in zip(out_c, out_ref):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_gelu_agrees_with_reference():
    x = np.linspace(-6, 6, 1001)
    np.testing.assert_allclose(compiled.gelu(x), ref.gelu(x), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(compiled.gelu_grad(x), ref.gelu_grad(x),
                               rtol=1e-12, atol=1e-15)


def test_gelu_closed_form():
    # 0.5 * x * (1 + erf(x / sqrt 2)) at a few hand points
    for x in (-1.0, 0.0, 0.5, 2.0):
        expected = 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))
        assert ref.gelu(np.array([x]))[0] == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_softmax_xent_rows_agree(seed):
    rng = np.random.default_rng(seed)
    logits = np.ascontiguousarray(rng.standard_normal((32, 7)))
    labels = rng.integers(0, 7, size=32).astype(np.int64)
    l_ref, d_ref = ref.softmax_xent_rows(logits, labels)
    l_c, d_c = compiled.softmax_xent_rows(logits, labels)
    np.testing.assert_allclose(l_c, l_ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(d_c, d_ref, rtol=1e-12, atol=1e-14)


def test_padded_region_gets_zero_gradient():
    sims, counts = _rand_rows(7, n=4, m=10)
    counts[:] = 3
    for impl in (ref, compiled):
        _, d = impl.softmax_ce_rows(sims, counts, 2.0)
        assert np.all(d[:, 3:] == 0.0)
        _, dh = impl.hinge_positive_rows(sims, counts, 0.2)
        assert np.all(dh[:, 3:] == 0.0)


def test_backend_switching():
    before = kernels.backend_name()
    try:
        kernels.set_backend("python")
        assert kernels.backend_name() == "python"
        kernels.set_backend("compiled")
        assert kernels.backend_name() == "compiled"
    finally:
        kernels.set_backend(before)
