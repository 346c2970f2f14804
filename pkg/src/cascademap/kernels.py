"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback in ``_pykernels``. Set ``CASCADEMAP_PURE_PYTHON=1`` to force the
fallback.
"""
import os

import numpy as np

from . import _pykernels

_backend = _pykernels
BACKEND = "python"

if not os.environ.get("CASCADEMAP_PURE_PYTHON"):
    try:
        from . import _ckernels as _backend  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python') or the active one."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def blocked_matmul(lhs, rhs, acc_in, bm, bk, bn):
    lhs = np.ascontiguousarray(lhs, dtype=np.int8)
    rhs = np.ascontiguousarray(rhs, dtype=np.int8)
    if acc_in is not None:
        acc_in = np.ascontiguousarray(acc_in, dtype=np.int32)
    return _backend.blocked_matmul(lhs, rhs, acc_in, bm, bk, bn)


def requantize(acc, bias, shift, relu):
    acc = np.ascontiguousarray(acc, dtype=np.int32)
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=np.int32)
    return _backend.requantize(acc, bias, int(shift), bool(relu))


def find_bottom_left(occ, h, w):
    return _backend.find_bottom_left(np.ascontiguousarray(occ, dtype=np.uint8), int(h), int(w))
