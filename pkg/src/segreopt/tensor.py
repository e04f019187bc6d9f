"""Dense multilinear primitives shared by every other module.

Conventions (used everywhere in this package):

* A dense order-``d`` tensor is a ``numpy.ndarray`` of ``float64`` with
  ``d >= 2`` axes, each of length >= 1.  Its linear storage order is C
  order (row major, last index varies fastest), and ``vec`` always means
  ``ravel(order="C")``.
* Modes are 0-indexed.
* ``unfold(t, k)`` returns the ``p_k x (p*/p_k)`` matrix whose columns are
  the mode-``k`` fibers.  Columns are ordered by enumerating the remaining
  multi-indices in ascending lexicographic order (leftmost remaining mode
  most significant), which is exactly the C-order enumeration.
"""

from __future__ import annotations

import json
import struct
from functools import reduce

import numpy as np

_BINARY_MAGIC = b"DTEN"


def check_tensor(t: np.ndarray) -> np.ndarray:
    """Validate an ndarray as a dense tensor (order >= 2, no empty axes)."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim < 2:
        raise ValueError(f"tensor order must be >= 2, got {t.ndim}")
    if any(p < 1 for p in t.shape):
        raise ValueError(f"all mode sizes must be >= 1, got {t.shape}")
    return t


def outer_rank_one(weight: float, factors: list[np.ndarray] | tuple[np.ndarray, ...]) -> np.ndarray:
    """Weighted outer product ``weight * f_0 ⊗ f_1 ⊗ ... ⊗ f_{d-1}``.

    Entry ``(i_0, ..., i_{d-1})`` of the result equals
    ``weight * prod_l factors[l][i_l]``.  Factors need not be unit norm.
    """
    if len(factors) < 2:
        raise ValueError("need at least two factor vectors")
    vecs = []
    for l, f in enumerate(factors):
        f = np.asarray(f, dtype=np.float64)
        if f.ndim != 1 or f.size == 0:
            raise ValueError(f"factor {l} must be a nonempty vector")
        vecs.append(f)
    out = reduce(np.multiply.outer, vecs)
    return weight * out


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(p_k, p*/p_k)``.

    Fiber/column ordering follows the module convention above;
    ``refold(unfold(t, k), k, t.shape)`` reproduces ``t`` bit-exactly.
    """
    t = np.asarray(t)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def refold(m: np.ndarray, mode: int, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given shape."""
    shape = tuple(shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1 :]
    m = np.asarray(m)
    if m.shape != (shape[mode], int(np.prod(rest, dtype=np.int64))):
        raise ValueError(f"matrix shape {m.shape} does not match unfolding of {shape}")
    return np.moveaxis(m.reshape((shape[mode],) + rest), 0, mode)


def mode_multiply(t: np.ndarray, mode: int, m: np.ndarray) -> np.ndarray:
    """Mode-``mode`` product ``t x_mode m``: ``unfold(result, mode) = m @ unfold(t, mode)``."""
    t = np.asarray(t)
    m = np.asarray(m)
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(f"matrix shape {m.shape} incompatible with mode size {t.shape[mode]}")
    return np.moveaxis(np.tensordot(m, t, axes=([1], [mode])), 0, mode)


def inner(t: np.ndarray, s: np.ndarray) -> float:
    """Ambient inner product: sum of elementwise products."""
    t = np.asarray(t)
    s = np.asarray(s)
    if t.shape != s.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {s.shape}")
    return float(np.dot(t.ravel(), s.ravel()))


def fro_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t).ravel()))


def khatri_rao(matrices: list[np.ndarray]) -> np.ndarray:
    """Column-wise Kronecker product, columns consistent with :func:`unfold`.

    For unit-rank components, column ``i`` of ``khatri_rao([U_l for l != k])``
    (modes in ascending order) equals the mode-``k`` fiber pattern of
    ``outer_rank_one(1, [u_{l,i}])`` under the C-order column enumeration.
    """
    if not matrices:
        raise ValueError("need at least one factor matrix")
    r = matrices[0].shape[1]
    if any(m.shape[1] != r for m in matrices):
        raise ValueError("all factor matrices must share the column count")
    out = matrices[0]
    for m in matrices[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


def contract_all_modes(t: np.ndarray, vectors: list[np.ndarray] | tuple[np.ndarray, ...]) -> float:
    """``<t, v_0 ⊗ ... ⊗ v_{d-1}>`` without materializing the outer product."""
    out = np.asarray(t)
    for v in reversed(vectors):
        out = np.tensordot(out, v, axes=([out.ndim - 1], [0]))
    return float(out)


def contract_all_but(t: np.ndarray, vectors: list[np.ndarray] | tuple[np.ndarray, ...], keep: int) -> np.ndarray:
    """Contract every mode except ``keep`` with the matching vector.

    Returns the length-``p_keep`` vector ``t x_{l != keep} v_l^T``.
    """
    out = np.asarray(t)
    for l in range(len(vectors) - 1, -1, -1):
        if l == keep:
            continue
        out = np.tensordot(out, vectors[l], axes=([l], [0]))
    return out


def batched_contract_all_but(stack: np.ndarray, vectors: list[np.ndarray] | tuple[np.ndarray, ...],
                             keep: int) -> np.ndarray:
    """:func:`contract_all_but` applied to a stack of tensors at once.

    ``stack`` has shape ``(n,) + shape``; the result is ``n x p_keep``.
    Trailing modes contract as last-axis products (no copies of the stack);
    leading modes contract jointly through the Kronecker vector, which keeps
    the big array streaming through one matmul instead of a transpose.
    """
    d = len(vectors)
    n = stack.shape[0]
    out = stack
    for l in range(d - 1, keep, -1):
        out = np.tensordot(out, vectors[l], axes=([out.ndim - 1], [0]))
    if keep > 0:
        w = vectors[0]
        for l in range(1, keep):
            w = np.kron(w, vectors[l])
        out = np.matmul(w, out.reshape(n, w.size, vectors[keep].size))
    return out


# -- serialization -----------------------------------------------------------
#
# JSON form: {"shape": [p_0, ..., p_{d-1}], "data": [...]} with data in C order.
# Binary form: b"DTEN" | uint32 d | d * uint32 shape | float64 data,
# little-endian, data in C order.


def tensor_to_json(t: np.ndarray) -> str:
    t = check_tensor(t)
    return json.dumps({"shape": list(t.shape), "data": t.ravel().tolist()})


def tensor_from_json(s: str) -> np.ndarray:
    obj = json.loads(s)
    shape = tuple(int(p) for p in obj["shape"])
    data = np.asarray(obj["data"], dtype=np.float64)
    if data.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError("data length does not match shape")
    return check_tensor(data.reshape(shape))


def save_tensor(t: np.ndarray, path: str) -> None:
    """Write the binary form (see module docstring for the layout)."""
    t = check_tensor(t)
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<I", t.ndim))
        fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
        fh.write(t.ravel().astype("<f8").tobytes())


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise ValueError(f"not a tensor file (bad magic {magic!r})")
        (d,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{d}I", fh.read(4 * d))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != int(np.prod(shape, dtype=np.int64)):
        raise ValueError("truncated tensor file")
    return check_tensor(data.reshape(shape).copy())
