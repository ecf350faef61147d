"""Closed-form ground truth for integer moments and formal-derivative means.

Stationarity gives ``E[X^k] = sum_j p_j E[(ratio_j X + d_j)^k]``, a triangular
system solved bottom-up:

    E[X^k] (1 - sum_j p_j ratio_j^k)
        = sum_{m<k} C(k, m) (sum_j p_j ratio_j^m d_j^(k-m)) E[X^m].

Parameter derivatives are obtained by running the same recursion on truncated
Taylor jets in the perturbed parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import MomentDiverges, UnsupportedIFS
from .ifs import ProbabilisticIFS, moment_growth
from .sampler import ParamDirection


def _check_moments(ifs: ProbabilisticIFS, k: int) -> None:
    if k < 0 or int(k) != k:
        raise ValueError("k must be a nonnegative integer")
    for m in range(1, k + 1):
        g = moment_growth(ifs, m)
        if not g < 1.0:
            raise MomentDiverges(f"sum p_i ratio_i^{m} = {g:.6g} >= 1: E[X^{m}] is infinite")


def _moment_jets(ratios: np.ndarray, trans: np.ndarray, probs: np.ndarray, k: int) -> list:
    """Jets of ``E[X^0..X^k]`` given jets of every ratio and translation.

    ``ratios`` and ``trans`` have shape ``(order + 1, n_maps)``.
    """
    order = ratios.shape[0] - 1
    n_maps = ratios.shape[1]
    one = jets.constant(np.ones(n_maps), order)
    lam_pow = [one]
    d_pow = [one]
    for _ in range(k):
        lam_pow.append(jets.mul(lam_pow[-1], ratios))
        d_pow.append(jets.mul(d_pow[-1], trans))
    moments = [jets.constant(1.0, order)]
    for kk in range(1, k + 1):
        acc = jets.constant(0.0, order)
        for m in range(kk):
            coeff = jets.mul(lam_pow[m], d_pow[kk - m]) @ probs
            acc = acc + math.comb(kk, m) * jets.mul(coeff, moments[m])
        denom = jets.constant(1.0, order) - lam_pow[kk] @ probs
        moments.append(jets.div(acc, denom))
    return moments


def exact_moment(ifs: ProbabilisticIFS, k: int) -> float:
    """``E[X^k]`` under the stationary law."""
    _check_moments(ifs, k)
    ratios = jets.constant(ifs.ratios, 0)
    trans = jets.constant(ifs.translations, 0)
    return float(_moment_jets(ratios, trans, ifs.prob_array, k)[k][0])


def exact_moment_derivative(ifs: ProbabilisticIFS, k: int, direction: ParamDirection,
                            order: int) -> float:
    """``d^order/d theta^order E[X^k]`` where ``theta`` shifts the parameter
    named by ``direction``."""
    if order < 0:
        raise ValueError("order must be >= 0")
    direction.check(ifs)
    _check_moments(ifs, k)
    ratios = jets.constant(ifs.ratios, order)
    trans = jets.constant(ifs.translations, order)
    target = ratios if direction.kind == "ratio" else trans
    if order >= 1:
        target[1, direction.index] = 1.0
    jet = _moment_jets(ratios, trans, ifs.prob_array, k)[k]
    return float(jets.to_derivatives(jet)[order])


@dataclass(frozen=True)
class MomentTable:
    ifs: ProbabilisticIFS
    max_order: int
    values: tuple[float, ...]  # E[X^1] .. E[X^K]

    def to_dict(self) -> dict:
        return {"max_order": self.max_order, "values": list(self.values)}


def moment_table(ifs: ProbabilisticIFS, max_order: int) -> MomentTable:
    """All finite moments up to ``max_order``."""
    _check_moments(ifs, max_order)
    ratios = jets.constant(ifs.ratios, 0)
    trans = jets.constant(ifs.translations, 0)
    ms = _moment_jets(ratios, trans, ifs.prob_array, max_order)
    return MomentTable(ifs, max_order, tuple(float(m[0]) for m in ms[1:]))


def finite_moment_orders(ifs: ProbabilisticIFS, limit: int = 64) -> int:
    """Largest ``K <= limit`` with ``E[X^K]`` finite."""
    k = 0
    while k < limit and moment_growth(ifs, k + 1) < 1.0:
        k += 1
    return k


def _require_two_map_uniform(ifs: ProbabilisticIFS) -> None:
    if not ifs.is_two_map_uniform:
        raise UnsupportedIFS("closed form implemented for two maps with equal weights only")


def expected_weighted_product(ifs: ProbabilisticIFS, m: int, j: int, index: int = 0) -> float:
    """``E[Lambda_m C(o(m), j)]`` where ``o(m)`` counts symbol ``index`` among the
    first ``m``: equal to ``ratio_index^j (ratio_1 + ratio_2)^(m-j) C(m, j) / 2^m``."""
    _require_two_map_uniform(ifs)
    if m < 0 or j < 0:
        raise ValueError("m and j must be >= 0")
    if j > m:
        return 0.0
    lam = ifs.ratios
    return float(lam[index] ** j * (lam[0] + lam[1]) ** (m - j) * math.comb(m, j) / 2.0**m)


def expected_formal_derivative(ifs: ProbabilisticIFS, j: int, index: int = 0) -> float:
    """``E[X^(j)]`` in the ratio direction ``index``.

    Summing ``expected_weighted_product`` over ``m`` (each term weighted by the
    independent mean translation) gives ``dbar j! / (2^j (1 - a)^(j+1))`` with
    ``a`` the mean ratio.
    """
    _require_two_map_uniform(ifs)
    if j < 1:
        raise ValueError("j must be >= 1")
    a = float(np.mean(ifs.ratios))
    if not a < 1.0:
        raise MomentDiverges(f"mean ratio {a:.6g} >= 1: E[X^({j})] is infinite")
    dbar = float(np.mean(ifs.translations))
    return dbar * math.factorial(j) / (2.0**j * (1.0 - a) ** (j + 1))


def _falling(n: int, t: int) -> int:
    return math.perm(n, t) if n >= t else 0


def binomial_identity(j: int, t: int, lam1: float, lam2: float) -> tuple[float, float]:
    """Both sides of

        sum_k k(k-1)...(k-t+1) C(j, k) lam1^(k-t) lam2^(j-k)
            = j(j-1)...(j-t+1) (lam1 + lam2)^(j-t),

    with exact integer falling factorials and compensated summation.
    """
    if not 0 <= t <= j <= 60:
        raise ValueError("need 0 <= t <= j <= 60")
    terms = [
        _falling(k, t) * math.comb(j, k) * lam1 ** (k - t) * lam2 ** (j - k)
        for k in range(t, j + 1)
    ]
    lhs = math.fsum(terms)
    rhs = _falling(j, t) * (lam1 + lam2) ** (j - t)
    return float(lhs), float(rhs)
