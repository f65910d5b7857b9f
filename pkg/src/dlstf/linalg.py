"""Dense float64 linear algebra and activation functions.

Matrices are 2-D C-contiguous float64 ndarrays (row-major), vectors are 1-D
float64 ndarrays. All operations are pure: the same inputs always produce
bit-identical outputs (numpy dispatches to a single fixed BLAS build, so the
reduction order never varies between calls or runs on one machine).
"""

from __future__ import annotations

import enum

import numpy as np


class ActivationKind(enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(x) -> np.ndarray:
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product a @ b with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def affine_combine(w: np.ndarray, x: np.ndarray, u: np.ndarray,
                   h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shared gate pre-activation form: w @ x + u @ h + b."""
    w, u = as_matrix(w), as_matrix(u)
    x, h, b = as_vector(x), as_vector(h), as_vector(b)
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"affine_combine: w is {w.shape} but x has length {x.shape[0]}")
    if u.shape[1] != h.shape[0]:
        raise ValueError(f"affine_combine: u is {u.shape} but h has length {h.shape[0]}")
    if not (w.shape[0] == u.shape[0] == b.shape[0]):
        raise ValueError(
            f"affine_combine: row counts differ (w {w.shape[0]}, u {u.shape[0]}, b {b.shape[0]})")
    return w @ x + u @ h + b


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # overflow-free formulation of 1/(1+exp(-v)); exact at 0 and saturates to 0/1
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def activation_apply(v: np.ndarray, kind: ActivationKind) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if kind is ActivationKind.SIGMOID:
        return _sigmoid(v)
    if kind is ActivationKind.TANH:
        return np.tanh(v)
    if kind is ActivationKind.RELU:
        return np.maximum(0.0, v)
    if kind is ActivationKind.IDENTITY:
        return v.copy()
    raise ValueError(f"unknown activation kind: {kind!r}")


def activation_derivative(kind: ActivationKind, pre: np.ndarray) -> np.ndarray:
    """Elementwise derivative evaluated at the pre-activation values."""
    pre = np.asarray(pre, dtype=np.float64)
    if kind is ActivationKind.SIGMOID:
        s = _sigmoid(pre)
        return s * (1.0 - s)
    if kind is ActivationKind.TANH:
        t = np.tanh(pre)
        return 1.0 - t * t
    if kind is ActivationKind.RELU:
        # subgradient at 0 is taken as 0
        return (pre > 0.0).astype(np.float64)
    if kind is ActivationKind.IDENTITY:
        return np.ones_like(pre)
    raise ValueError(f"unknown activation kind: {kind!r}")


def activation_derivative_from_output(kind: ActivationKind, out: np.ndarray) -> np.ndarray:
    """Derivative expressed through the activation's own output.

    Bit-identical to activation_derivative(kind, pre) when `out` was produced
    by activation_apply(pre, kind); skips recomputing the activation.
    """
    if kind is ActivationKind.SIGMOID:
        return out * (1.0 - out)
    if kind is ActivationKind.TANH:
        return 1.0 - out * out
    if kind is ActivationKind.RELU:
        return (out > 0.0).astype(np.float64)
    if kind is ActivationKind.IDENTITY:
        return np.ones_like(out)
    raise ValueError(f"unknown activation kind: {kind!r}")
