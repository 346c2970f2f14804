"""Pure numpy implementations of the hot kernels (fallback for ``_ckernels``)."""
import numpy as np


def _wrap32(x):
    return ((x.astype(np.int64) + 2**31) % 2**32 - 2**31).astype(np.int32)


def blocked_matmul(lhs, rhs, acc_in, bm, bk, bn):
    """INT8 x INT8 -> INT32 product of one tile, computed block by block.

    ``lhs`` is H x W1, ``rhs`` is W1 x W2; dims must be multiples of the
    block shape. ``acc_in`` (or None) is the incoming cascade accumulator.
    """
    h, w1 = lhs.shape
    w2 = rhs.shape[1]
    if h % bm or w1 % bk or w2 % bn or rhs.shape[0] != w1:
        raise ValueError(f"tile {h}x{w1}x{w2} is not a multiple of block {bm}x{bk}x{bn}")
    a = lhs.astype(np.int64).reshape(h // bm, bm, w1 // bk, bk)
    b = rhs.astype(np.int64).reshape(w1 // bk, bk, w2 // bn, bn)
    # one VMAC per (i-block, k-block, j-block)
    out = np.einsum("iakb,kbjc->iajc", a, b).reshape(h, w2)
    if acc_in is not None:
        out = out + acc_in.astype(np.int64)
    return _wrap32(out)


def requantize(acc, bias, shift, relu):
    """acc (+bias, int32 wraparound) -> optional ReLU -> rounding right shift -> int8 saturate."""
    v = acc.astype(np.int64)
    if bias is not None:
        v = v + bias.astype(np.int64)[None, :]
    v = _wrap32(v).astype(np.int64)
    if relu:
        v = np.maximum(v, 0)
    if shift > 0:
        mag = (np.abs(v) + (1 << (shift - 1))) >> shift
        v = np.sign(v) * mag
    return np.clip(v, -128, 127).astype(np.int8)


def find_bottom_left(occ, h, w):
    """First free h x w rectangle scanning rows bottom-up, then columns left to right."""
    rows, cols = occ.shape
    if h > rows or w > cols:
        return (-1, -1)
    # 2-D prefix sums give O(1) emptiness checks per candidate
    ps = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    ps[1:, 1:] = np.cumsum(np.cumsum(occ.astype(np.int64), axis=0), axis=1)
    r = np.arange(rows - h + 1)[:, None]
    c = np.arange(cols - w + 1)[None, :]
    used = ps[r + h, c + w] - ps[r, c + w] - ps[r + h, c] + ps[r, c]
    free = np.argwhere(used == 0)
    if free.size == 0:
        return (-1, -1)
    return (int(free[0, 0]), int(free[0, 1]))
