"""Truncated Taylor arithmetic.

A jet of order ``L`` is an array ``c`` of shape ``(L + 1, ...)`` holding the
normalised Taylor coefficients ``c[k] = f^(k)(x0) / k!``. Operations act
elementwise on the trailing axes, so whole sample arrays are differentiated
in one pass. This is forward-mode differentiation of closed-form
expressions: exact up to rounding, with no step sizes.
"""

from __future__ import annotations

import math

import numpy as np


def variable(x, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros((order + 1,) + x.shape)
    out[0] = x
    if order >= 1:
        out[1] = 1.0
    return out


def constant(x, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros((order + 1,) + x.shape)
    out[0] = x
    return out


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = a.shape[0] - 1
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(order + 1):
        for i in range(k + 1):
            out[k] += a[i] * b[k - i]
    return out


def div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = a.shape[0] - 1
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(order + 1):
        acc = np.array(a[k], dtype=float, copy=True)
        for i in range(1, k + 1):
            acc -= b[i] * out[k - i]
        out[k] = acc / b[0]
    return out


def reciprocal(a: np.ndarray) -> np.ndarray:
    return div(constant(np.ones_like(a[0]), a.shape[0] - 1), a)


def exp(a: np.ndarray) -> np.ndarray:
    order = a.shape[0] - 1
    out = np.zeros_like(a)
    out[0] = np.exp(a[0])
    for k in range(1, order + 1):
        acc = np.zeros_like(a[0])
        for i in range(1, k + 1):
            acc += i * a[i] * out[k - i]
        out[k] = acc / k
    return out


def compose_affine(a: np.ndarray, scale: float) -> np.ndarray:
    """Jet of ``f(scale * t)`` from the jet of ``f`` at ``scale * t0``."""
    out = a.copy()
    for k in range(1, a.shape[0]):
        out[k] *= scale**k
    return out


def to_derivatives(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    for k in range(2, a.shape[0]):
        out[k] *= math.factorial(k)
    return out


def from_derivatives(d: np.ndarray) -> np.ndarray:
    out = np.array(d, dtype=float, copy=True)
    for k in range(2, out.shape[0]):
        out[k] /= math.factorial(k)
    return out
