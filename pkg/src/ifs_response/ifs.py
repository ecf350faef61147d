"""Probabilistic affine IFS objects and their scalar characteristics.

An IFS here is a finite family of maps ``f_i(x) = ratio_i * x + translation_i``
chosen i.i.d. with probabilities ``probs``. The system is admissible when it
contracts on average, ``sum_i p_i log(ratio_i) < 0``; some ratios may exceed 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import (
    BadProbabilityVector,
    CommonFixedPoint,
    DegenerateRatio,
    EqualRatios,
    NoExpansion,
    NonPositiveRatio,
    NotContractingOnAverage,
    OutOfRange,
    UnsupportedIFS,
    ValidationError,
)

PROB_TOL = 1e-12
FIXED_POINT_RTOL = 1e-10
_NEAR_ONE = 1e-12


@dataclass(frozen=True)
class AffineMap:
    ratio: float
    translation: float

    def __post_init__(self):
        if not self.ratio > 0:
            raise NonPositiveRatio(f"ratio must be > 0, got {self.ratio!r}")

    def __call__(self, x):
        return self.ratio * x + self.translation

    @property
    def fixed_point(self) -> float:
        if self.ratio == 1.0:
            return math.inf if self.translation != 0 else math.nan
        return self.translation / (1.0 - self.ratio)


@dataclass(frozen=True)
class ProbabilisticIFS:
    """Validated affine IFS. Immutable; construct through :func:`validate_ifs`
    or :meth:`from_params`."""

    maps: tuple[AffineMap, ...]
    probs: tuple[float, ...]
    _validated: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        if not self._validated:
            _check(self.maps, self.probs)
            object.__setattr__(self, "_validated", True)

    @classmethod
    def from_params(cls, ratios, translations=None, probs=None) -> "ProbabilisticIFS":
        ratios = [float(r) for r in ratios]
        if translations is None:
            translations = [1.0] * len(ratios)
        if probs is None:
            probs = [1.0 / len(ratios)] * len(ratios)
        if len(translations) != len(ratios):
            raise ValidationError("ratios and translations differ in length")
        for r in ratios:
            if not r > 0:
                raise NonPositiveRatio(f"ratio must be > 0, got {r!r}")
        maps = tuple(AffineMap(r, float(d)) for r, d in zip(ratios, translations))
        return cls(maps, tuple(float(p) for p in probs))

    @property
    def k(self) -> int:
        return len(self.maps)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([m.ratio for m in self.maps])

    @property
    def translations(self) -> np.ndarray:
        return np.array([m.translation for m in self.maps])

    @property
    def prob_array(self) -> np.ndarray:
        return np.array(self.probs)

    @property
    def is_canonical(self) -> bool:
        """Two maps, equal weights, unit translations."""
        return (
            self.k == 2
            and self.probs == (0.5, 0.5)
            and all(m.translation == 1.0 for m in self.maps)
        )

    @property
    def is_two_map_uniform(self) -> bool:
        return self.k == 2 and self.probs == (0.5, 0.5)

    def replace(self, ratios=None, translations=None) -> "ProbabilisticIFS":
        return ProbabilisticIFS.from_params(
            self.ratios if ratios is None else ratios,
            self.translations if translations is None else translations,
            self.probs,
        )

    def to_dict(self) -> dict:
        return {
            "ratios": [m.ratio for m in self.maps],
            "translations": [m.translation for m in self.maps],
            "probs": list(self.probs),
        }


def _check(maps: Sequence[AffineMap], probs: Sequence[float]) -> None:
    if len(maps) < 2:
        raise ValidationError("need at least two maps")
    if len(probs) != len(maps):
        raise BadProbabilityVector("probability vector length does not match maps")
    p = np.asarray(probs, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise BadProbabilityVector(f"probabilities must be >= 0 and sum to 1: {list(probs)}")
    lam = np.array([m.ratio for m in maps])
    if np.any(lam <= 0):
        raise NonPositiveRatio("ratios must be positive")
    drift = float(np.dot(p, np.log(lam)))
    if not drift < 0:
        raise NotContractingOnAverage(f"sum p_i log ratio_i = {drift:.6g} is not < 0")
    near = np.abs(lam - 1.0)
    if np.any((near > 0) & (near < _NEAR_ONE)):
        raise DegenerateRatio("ratio within 1e-12 of 1; fixed point is numerically undefined")
    if np.all(lam != 1.0):
        fps = np.array([m.translation / (1.0 - m.ratio) for m in maps])
        scale = max(np.max(np.abs(fps)), 1e-300)
        if np.max(fps) - np.min(fps) <= FIXED_POINT_RTOL * scale:
            raise CommonFixedPoint(f"all maps share the fixed point {fps[0]:.12g}")


def validate_ifs(maps, probs) -> ProbabilisticIFS:
    """Build a validated IFS from ``AffineMap`` objects or ``(ratio, translation)``
    pairs."""
    built = []
    for m in maps:
        if isinstance(m, AffineMap):
            built.append(m)
        else:
            built.append(AffineMap(float(m[0]), float(m[1])))
    return ProbabilisticIFS(tuple(built), tuple(float(x) for x in probs))


def moment_growth(ifs: ProbabilisticIFS, s) -> float:
    """``sum_i p_i ratio_i**s``; equals 1 at ``s = 0``."""
    s = float(s)
    if s < 0:
        raise ValueError("s must be >= 0")
    if s == 0:
        return 1.0
    return float(np.dot(ifs.prob_array, ifs.ratios**s))


def _log_mgf(ifs, theta):
    # log sum p_i exp(theta * log ratio_i), computed stably
    logs = np.log(ifs.ratios)
    p = ifs.prob_array
    mask = p > 0
    a = theta * logs[mask] + np.log(p[mask])
    amax = np.max(a)
    return float(amax + np.log(np.sum(np.exp(a - amax))))


def tail_exponent(ifs: ProbabilisticIFS) -> float:
    """Positive root ``s0`` of ``moment_growth(ifs, s) = 1``.

    Raises :class:`NoExpansion` when no ratio exceeds 1 (the tail is then
    bounded and the exponent is infinite).
    """
    lam = ifs.ratios
    p = ifs.prob_array
    if not np.any((lam > 1.0) & (p > 0)):
        raise NoExpansion("all ratios <= 1; tail exponent is +inf")

    upper = 64.0
    while _log_mgf(ifs, upper) <= 0.0:
        upper *= 2.0
    # log f is convex, log f(0) = 0 with negative slope: its minimiser s1 has
    # log f(s1) < 0 and the root above s1 is unique
    res = optimize.minimize_scalar(
        lambda s: _log_mgf(ifs, s), bounds=(0.0, upper), method="bounded",
        options={"xatol": 1e-10},
    )
    s1 = float(res.x)
    root = optimize.brentq(
        lambda s: moment_growth(ifs, s) - 1.0, s1, upper, xtol=1e-15, rtol=1e-15, maxiter=500
    )
    return float(root)


def lyapunov_exponent(ifs: ProbabilisticIFS) -> float:
    return float(-np.dot(ifs.prob_array, np.log(ifs.ratios)))


def entropy(ifs: ProbabilisticIFS) -> float:
    p = ifs.prob_array
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class SpectralReport:
    lyapunov_exponent: float
    entropy: float
    lyapunov_dimension: float
    tail_exponent: float
    rate_available: bool

    def to_dict(self) -> dict:
        return {
            "lyapunov_exponent": self.lyapunov_exponent,
            "entropy": self.entropy,
            "lyapunov_dimension": self.lyapunov_dimension,
            "tail_exponent": self.tail_exponent,
            "rate_available": self.rate_available,
        }


def spectral_report(ifs: ProbabilisticIFS) -> SpectralReport:
    chi = lyapunov_exponent(ifs)
    h = entropy(ifs)
    try:
        s0 = tail_exponent(ifs)
    except NoExpansion:
        s0 = math.inf
    logs = np.log(ifs.ratios)[ifs.prob_array > 0]
    return SpectralReport(chi, h, h / chi, s0, bool(np.ptp(logs) > 0))


@dataclass(frozen=True)
class AffineChange:
    """The change of variables ``x -> scale * x + offset``."""

    scale: float
    offset: float

    def __post_init__(self):
        if self.scale == 0:
            raise ValidationError("scale must be nonzero")

    def __call__(self, x):
        return self.scale * x + self.offset

    def inverse(self, y):
        return (y - self.offset) / self.scale


def conjugate_to_unit_translations(ifs: ProbabilisticIFS):
    """Return ``(canonical, c)`` where ``canonical`` has both translations equal
    to 1 and ``c(f_i(x)) == g_i(c(x))`` with ``f_i`` the canonical maps and
    ``g_i`` the maps of ``ifs``. Consequently the stationary law of ``ifs`` is
    the push-forward of the canonical one under ``c``."""
    if ifs.k != 2:
        raise UnsupportedIFS("conjugation is defined for two-map systems")
    l1, l2 = (m.ratio for m in ifs.maps)
    d1, d2 = (m.translation for m in ifs.maps)
    if l1 == l2:
        raise EqualRatios("ratios must differ")
    # validation already rejected a common fixed point
    a = ((1.0 - l1) * d2 - (1.0 - l2) * d1) / (l2 - l1)
    b = (d2 - d1) / (l1 - l2)
    if a == 0:
        raise CommonFixedPoint("degenerate conjugation (common fixed point)")
    canonical = ProbabilisticIFS.from_params([l1, l2], [1.0, 1.0], ifs.probs)
    return canonical, AffineChange(a, b)


def cramer_rate(ifs: ProbabilisticIFS, y: float) -> float:
    """Large-deviation rate of the sample mean of ``log ratio``.

    ``I(y) = sup_theta (theta*y - log sum_i p_i ratio_i**theta)``. Valid for
    ``y`` in ``[min log ratio, max log ratio]``; zero at the mean, increasing
    away from it on both sides.
    """
    p = ifs.prob_array
    logs = np.log(ifs.ratios)
    support = logs[p > 0]
    lo, hi = float(np.min(support)), float(np.max(support))
    y = float(y)
    if not (lo <= y <= hi) or lo == hi:
        raise OutOfRange(f"y={y} outside [{lo}, {hi}]")
    mean = float(np.dot(p, logs))
    if y == mean:
        return 0.0
    if y == lo or y == hi:
        return float(-np.log(np.sum(p[(p > 0) & (logs == y)])))

    def slope(theta):
        a = theta * support + np.log(p[p > 0])
        w = np.exp(a - np.max(a))
        return float(np.dot(w, support) / np.sum(w)) - y

    # slope is increasing in theta, from lo at -inf to hi at +inf
    step = 1.0
    if y > mean:
        a, b = 0.0, step
        while slope(b) < 0:
            a, b = b, b * 2.0
    else:
        a, b = -step, 0.0
        while slope(a) > 0:
            a, b = a * 2.0, a
    theta = optimize.brentq(slope, a, b, xtol=1e-14, maxiter=500)
    return float(max(theta * y - _log_mgf(ifs, theta), 0.0))
