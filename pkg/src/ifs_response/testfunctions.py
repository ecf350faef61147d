"""Smooth observables with analytic derivatives.

Every observable exposes ``derivatives(x, order)``, returning an array of shape
``(order + 1,) + x.shape`` with ``phi^(k)(x)`` in row ``k``. Derivatives are
computed from closed forms (via truncated Taylor arithmetic for the C^inf
ramp), never by numerical differencing, so the response formula stays
independent of the finite-difference oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import jets

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)
# below this ramp coordinate exp(-1/t) underflows to zero in every jet entry
_RAMP_EPS = 2e-3


def ramp_jet(t, order: int) -> np.ndarray:
    """Derivatives of the C^inf ramp

    ``psi(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)})``,

    equal to 0 for ``t <= 0`` and 1 for ``t >= 1``; rows are ``psi^(k)(t)``.
    ``psi(t) + psi(1 - t) = 1``, so the ramp integrates to 1/2 over ``[0, 1]``.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((order + 1,) + t.shape)
    out[0] = (t >= 0.5).astype(float)
    mid = (t > _RAMP_EPS) & (t < 1.0 - _RAMP_EPS)
    if np.any(mid):
        tm = t[mid]
        var = jets.variable(tm, order)
        a = jets.exp(-jets.reciprocal(var))
        b = jets.exp(-jets.reciprocal(jets.constant(np.ones_like(tm), order) - var))
        out[:, mid] = jets.to_derivatives(jets.div(a, a + b))
    # outside the transition band the ramp is flat to all orders
    out[0, t <= _RAMP_EPS] = 0.0
    out[0, t >= 1.0 - _RAMP_EPS] = 1.0
    return out


def ramp_integral(t) -> np.ndarray:
    """``int_0^t psi(s) ds`` for ``t`` in ``[0, 1]`` (clipped), by Gauss-Legendre."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    nodes = 0.5 * (_GL_NODES + 1.0)
    s = t[..., None] * nodes
    vals = ramp_jet(s, 0)[0]
    return 0.5 * t * np.sum(vals * _GL_WEIGHTS, axis=-1)


class TestFunction:
    """Base class: a smooth scalar observable ``phi``."""

    __test__ = False  # keep pytest from collecting this as a test class
    kind = "abstract"
    max_order: int | None = None

    def derivatives(self, x, order: int) -> np.ndarray:
        raise NotImplementedError

    def check_order(self, order: int) -> None:
        if order < 0:
            raise ValueError("order must be >= 0")
        if self.max_order is not None and order > self.max_order:
            raise ValueError(f"{self.kind} has derivatives only up to order {self.max_order}")

    def __call__(self, x):
        return self.derivatives(x, 0)[0]

    def derivative(self, x, k: int):
        return self.derivatives(x, k)[k]

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Plateau:
    """One smooth plateau: 0 outside ``[lo_outer, hi_outer]``, 1 on
    ``[lo_inner, hi_inner]``, C^inf ramps in between."""

    lo_outer: float
    lo_inner: float
    hi_inner: float
    hi_outer: float

    def __post_init__(self):
        if not (self.lo_outer < self.lo_inner <= self.hi_inner < self.hi_outer):
            raise ValueError(f"plateau breakpoints out of order: {self}")

    @classmethod
    def around(cls, center: float, inner: float, outer: float) -> "Plateau":
        if not 0 <= inner < outer:
            raise ValueError("need 0 <= inner < outer")
        return cls(center - outer, center - inner, center + inner, center + outer)

    @property
    def l1_norm(self) -> float:
        # each ramp integrates to half its width
        return (self.hi_inner - self.lo_inner) + 0.5 * (
            (self.lo_inner - self.lo_outer) + (self.hi_outer - self.hi_inner)
        )

    def derivatives(self, x: np.ndarray, order: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        b = [np.full(x.shape, v) for v in (self.lo_outer, self.lo_inner, self.hi_inner,
                                             self.hi_outer)]
        return _plateau_derivatives(x, *b, order)

    def integral(self, x: np.ndarray) -> np.ndarray:
        """``int_{-inf}^x`` of the plateau."""
        x = np.asarray(x, dtype=float)
        b = [np.full(x.shape, v) for v in (self.lo_outer, self.lo_inner, self.hi_inner,
                                             self.hi_outer)]
        return _plateau_integral(x, *b)


def _plateau_derivatives(x, lo_o, lo_i, hi_i, hi_o, order):
    # elementwise: x[i] is evaluated against the plateau (lo_o[i], ..., hi_o[i])
    out = np.zeros((order + 1,) + x.shape)
    rise = (x > lo_o) & (x < lo_i)
    fall = (x > hi_i) & (x < hi_o)
    out[0, (x >= lo_i) & (x <= hi_i)] = 1.0
    powers = np.arange(order + 1)[:, None]
    if np.any(rise):
        w = (lo_i - lo_o)[rise]
        out[:, rise] = ramp_jet((x[rise] - lo_o[rise]) / w, order) / w**powers
    if np.any(fall):
        w = (hi_o - hi_i)[fall]
        out[:, fall] = ramp_jet((hi_o[fall] - x[fall]) / w, order) * (-1.0 / w) ** powers
    return out


def _plateau_integral(x, lo_o, lo_i, hi_i, hi_o):
    w_lo = lo_i - lo_o
    w_hi = hi_o - hi_i
    total = w_lo * ramp_integral((x - lo_o) / w_lo)
    total += np.clip(x, lo_i, hi_i) - lo_i
    # the falling ramp mirrors a rising one: int_0^u psi(1 - s) ds = 1/2 - int_0^(1-u) psi
    u = np.clip((x - hi_i) / w_hi, 0.0, 1.0)
    total += w_hi * (0.5 - ramp_integral(1.0 - u))
    return total


def merge_plateaus(pieces: Sequence[Plateau]) -> list[Plateau]:
    """Union of plateaus whose supports overlap, as one plateau per cluster.

    A cluster keeps the outermost ramps and fills its interior with 1, so the
    result is still a smooth function with values in ``[0, 1]`` that equals 1
    on every original inner interval.
    """
    ordered = sorted(pieces, key=lambda p: p.lo_outer)
    merged: list[Plateau] = []
    for p in ordered:
        if merged and p.lo_outer < merged[-1].hi_outer:
            q = merged[-1]
            merged[-1] = Plateau(q.lo_outer, min(p.lo_inner, q.lo_inner),
                                 max(p.hi_inner, q.hi_inner), max(p.hi_outer, q.hi_outer))
        else:
            merged.append(p)
    return merged


class PlateauFunction(TestFunction):
    """Sum of disjoint smooth plateaus; a smooth bump when there is one piece.

    Evaluation locates each point's piece by binary search, so families with
    thousands of pieces stay cheap.
    """

    kind = "plateau"

    def __init__(self, pieces: Sequence[Plateau]):
        self.pieces = tuple(merge_plateaus(pieces))
        table = np.array([[p.lo_outer, p.lo_inner, p.hi_inner, p.hi_outer] for p in self.pieces],
                         dtype=float).reshape(-1, 4)
        self._table = table
        norms = np.array([p.l1_norm for p in self.pieces])
        self._cum = np.concatenate([[0.0], np.cumsum(norms)])

    def _locate(self, x):
        idx = np.searchsorted(self._table[:, 0], x, side="right") - 1
        ok = idx >= 0
        safe = np.where(ok, idx, 0)
        return idx, ok, safe

    def derivatives(self, x, order: int) -> np.ndarray:
        self.check_order(order)
        x = np.asarray(x, dtype=float)
        if not self.pieces:
            return np.zeros((order + 1,) + x.shape)
        idx, ok, safe = self._locate(x)
        # points left of every piece get a dummy plateau lying to their right
        cols = [np.where(ok, self._table[safe, c], x + c + 1.0) for c in range(4)]
        return _plateau_derivatives(x, *cols, order)

    @property
    def l1_norm(self) -> float:
        return float(self._cum[-1])

    def antiderivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.pieces:
            return np.zeros_like(x)
        idx, ok, safe = self._locate(x)
        cols = [self._table[safe, c] for c in range(4)]
        part = np.where(ok, _plateau_integral(x, *cols), 0.0)
        return np.where(ok, self._cum[safe], 0.0) + part

    @property
    def support(self) -> tuple[float, float]:
        return float(self._table[0, 0]), float(self._table[-1, 3])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pieces": self._table.tolist()}


class SmoothBump(PlateauFunction):
    """1 on ``|x - center| <= inner_radius``, 0 beyond ``outer_radius``."""

    kind = "bump"

    def __init__(self, center: float, inner_radius: float, outer_radius: float):
        self.center = float(center)
        self.inner_radius = float(inner_radius)
        self.outer_radius = float(outer_radius)
        super().__init__([Plateau.around(self.center, self.inner_radius, self.outer_radius)])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": self.center, "inner_radius": self.inner_radius,
                "outer_radius": self.outer_radius}


class WitnessBacked(TestFunction):
    """``phi(x) = int_{-inf}^x plateau``: nondecreasing, bounded by the plateau's
    L1 norm, with ``phi' = plateau``."""

    kind = "witness"

    def __init__(self, plateau: PlateauFunction, label: str = ""):
        self.plateau = plateau
        self.label = label

    def derivatives(self, x, order: int) -> np.ndarray:
        self.check_order(order)
        x = np.asarray(x, dtype=float)
        out = np.empty((order + 1,) + x.shape)
        out[0] = self.plateau.antiderivative(x)
        if order >= 1:
            out[1:] = self.plateau.derivatives(x, order - 1)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label, "derivative": self.plateau.to_dict()}


class PowerMoment(TestFunction):
    """``phi(x) = x**t`` on ``x > 0`` (the stationary law of a system with unit
    translations lives on ``[1, inf)``)."""

    kind = "power"

    def __init__(self, t: float):
        if not t > 0:
            raise ValueError("t must be > 0")
        self.t = float(t)

    def derivatives(self, x, order: int) -> np.ndarray:
        self.check_order(order)
        x = np.asarray(x, dtype=float)
        out = np.empty((order + 1,) + x.shape)
        coef = 1.0
        integer = self.t.is_integer()
        for k in range(order + 1):
            if integer and k > self.t:
                out[k] = 0.0
            else:
                out[k] = coef * x ** (self.t - k)
            coef *= self.t - k
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "t": self.t}


class CappedPolynomial(TestFunction):
    """``x**r`` up to ``x0``, continued so the r-th derivative decays smoothly
    from ``r!`` to 0 across ``[x0, x0 + width]``.

    Precisely ``phi^(r)(x) = r! (1 - psi((x - x0)/width))``, with all lower
    derivatives matching ``x**r`` at ``x0``. The function is C^inf, every
    derivative of order ``>= r`` is bounded, and beyond ``x0 + width`` it is a
    polynomial of degree ``r - 1``.
    """

    kind = "capped"

    def __init__(self, r: int, x0: float, width: float | None = None):
        if int(r) != r or r < 1:
            raise ValueError("r must be a positive integer")
        if not x0 > 0:
            raise ValueError("x0 must be > 0")
        self.r = int(r)
        self.x0 = float(x0)
        self.width = float(width) if width is not None else self.x0
        if not self.width > 0:
            raise ValueError("width must be > 0")

    @classmethod
    def for_ifs(cls, ifs, r: int, factor: float = 10.0, width: float | None = None):
        """Cap placed at ``factor * E[X]``."""
        from .moments import exact_moment

        return cls(r, factor * exact_moment(ifs, 1), width)

    def _cap_integral(self, u: np.ndarray, power: int) -> np.ndarray:
        # int_0^u (u - s)^power / power! * psi(s / width) ds, for u >= 0
        w = self.width
        top = np.minimum(u, w)
        s = 0.5 * top[..., None] * (_GL_NODES + 1.0)
        kern = (u[..., None] - s) ** power / math.factorial(power)
        vals = ramp_jet(s / w, 0)[0]
        part = 0.5 * top * np.sum(kern * vals * _GL_WEIGHTS, axis=-1)
        beyond = np.maximum(u - w, 0.0)
        return part + beyond ** (power + 1) / math.factorial(power + 1)

    def derivatives(self, x, order: int) -> np.ndarray:
        self.check_order(order)
        x = np.asarray(x, dtype=float)
        r = self.r
        out = np.empty((order + 1,) + x.shape)
        coef = 1.0
        for k in range(order + 1):
            out[k] = coef * x ** (r - k) if k <= r else 0.0
            coef *= r - k
        over = x > self.x0
        if np.any(over):
            u = x[over] - self.x0
            fact = math.factorial(r)
            for k in range(min(order, r - 1) + 1):
                out[k, over] -= fact * self._cap_integral(u, r - 1 - k)
            if order >= r:
                ramp = ramp_jet(u / self.width, order - r)
                for m in range(order - r + 1):
                    out[r + m, over] = fact * ((1.0 if m == 0 else 0.0) - ramp[m] / self.width**m)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "r": self.r, "x0": self.x0, "width": self.width}


class AffinePullback(TestFunction):
    """``phi(x) = base(scale * x + offset)``."""

    kind = "pullback"

    def __init__(self, base: TestFunction, scale: float, offset: float):
        self.base = base
        self.scale = float(scale)
        self.offset = float(offset)
        self.max_order = base.max_order

    def derivatives(self, x, order: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.base.derivatives(self.scale * x + self.offset, order)
        for k in range(1, order + 1):
            out[k] *= self.scale**k
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale, "offset": self.offset,
                "base": self.base.to_dict()}
