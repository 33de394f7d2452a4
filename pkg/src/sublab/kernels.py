"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the pure-Python
twins take over.  ``use_backend`` switches explicitly (tests, benchmarks).
"""
import numpy as np

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_BACKENDS = {"python": _pykernels}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _compiled if _compiled is not None else _pykernels


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    prev = backend_name()
    _active = _BACKENDS[name]
    return prev


def discrete_chain(coef, init):
    return _active.discrete_chain(_c(coef), _c(init))


def matrix_chain(steps, init, h=0.0):
    return _active.matrix_chain(_c(steps), _c(init), float(h))


def hash_uniform(seed, start, count):
    return _active.hash_uniform(int(seed), int(start), int(count))


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)
