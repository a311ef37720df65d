"""Kernel backend selection.

The hot per-row loss kernels exist twice: a compiled Cython extension
(alignlab._ckernels) and a pure-numpy fallback (alignlab._kernels_numpy).
The compiled one is preferred when importable; set ALIGNLAB_KERNELS to
"python" or "compiled" to force a choice. `benchmarks/bench_kernels.py`
compares the two.
"""

from __future__ import annotations

import os

from alignlab import _kernels_numpy
from alignlab.errors import ConfigError

try:
    from alignlab import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"python": _kernels_numpy}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def _initial_backend() -> str:
    forced = os.environ.get("ALIGNLAB_KERNELS", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            raise ConfigError(
                f"ALIGNLAB_KERNELS={forced!r} unavailable; have {sorted(_BACKENDS)}"
            )
        return forced
    return "compiled" if _ckernels is not None else "python"


_backend = _initial_backend()
_impl = _BACKENDS[_backend]


def backend_name() -> str:
    return _backend


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    """Switch kernel implementations (used by tests and the benchmark)."""
    global _backend, _impl
    if name not in _BACKENDS:
        raise ConfigError(f"unknown kernel backend {name!r}; have {sorted(_BACKENDS)}")
    _backend = name
    _impl = _BACKENDS[name]


def softmax_ce_rows(sims, counts, inv_beta):
    return _impl.softmax_ce_rows(sims, counts, inv_beta)


def hinge_positive_rows(sims, counts, tau):
    return _impl.hinge_positive_rows(sims, counts, tau)


def hinge_pair_rows(syn, syn_counts, std, std_counts, tau):
    return _impl.hinge_pair_rows(syn, syn_counts, std, std_counts, tau)


def gelu(x):
    return _impl.gelu(x)


def gelu_grad(x):
    return _impl.gelu_grad(x)


def softmax_xent_rows(logits, labels):
    return _impl.softmax_xent_rows(logits, labels)
