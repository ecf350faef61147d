"""Smooth bounded observables whose response series diverges.

For a canonical two-map system (unit translations, equal weights,
``ratio_1 < 1 < ratio_2``) two parameter regimes admit a family of smooth
nonnegative functions ``phi_N`` with ``sum_N ||phi_N'||_1 < inf`` but
``sum_N h_N'(0) = inf``, where ``h_N'(0) = E[phi_N'(X) X^(1)]``:

* regime A, ``ratio_1 ratio_2 < 1/4``: ``phi_N'`` is a plateau around every
  value ``X_N`` can take at or above a threshold ``M(N)``;
* regime B, ``log2 ratio_2 > 1 + log_{1/ratio_1} ratio_2``: ``phi_N'`` is a
  plateau around the value of ``X_K`` on the word ``2^N 1^ceil(kappa N)``.

``h_N'(0)`` is estimated by conditioning on a symbol prefix ``w`` of length
``K``: with ``X'`` an independent copy of ``X`` and ``Y = X' - 1``,

    X     = X_K(w) + Lambda_K(w) Y,
    X^(1) = P_K(w) + Lambda_K(w) (o_K(w) Y / ratio_1 + X'^(1)),

where ``P_K(w) = (1/ratio_1) sum_{m=1}^{K} Lambda_m(w) o(m)``. Prefix sums are
exact; only the tail pair ``(X', X'^(1))`` is sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import stats

from .errors import EnumerationTooLarge, NoFeasibleM, UnsupportedIFS
from .ifs import ProbabilisticIFS, cramer_rate
from .rng import prefix_codes
from .sampler import (
    MCEstimate,
    Ratio,
    _moments,
    converged_truncation,
    empirical_quantile,
    map_chunks,
    summarize,
)
from .testfunctions import Plateau, PlateauFunction

ENUMERATION_CAP = 24
ATOM_TOL = 1e-12
SCHEMA = "ifs-witness/1"


def _require_canonical(ifs: ProbabilisticIFS) -> tuple[float, float]:
    if not ifs.is_canonical:
        raise UnsupportedIFS("witness construction needs two maps, equal weights, unit translations")
    l1, l2 = ifs.ratios
    if not l1 < 1.0 < l2:
        raise UnsupportedIFS("witness construction needs ratio_1 < 1 < ratio_2")
    return float(l1), float(l2)


def derivative_floor_constant(ifs: ProbabilisticIFS) -> float:
    """``c`` with ``X^(1) >= c X`` almost surely (derivative in ratio 1)."""
    l1, l2 = _require_canonical(ifs)
    return 1.0 / (l2 * (1.0 - l1) / (l2 - 1.0) + 1.0)


@dataclass(frozen=True)
class RegimeAParams:
    rho: float
    delta: float


@dataclass(frozen=True)
class RegimeBParams:
    kappa: float
    kappa_interval: tuple[float, float]
    rho: float  # ratio_2 * ratio_1**kappa
    growth: float  # 2^(-1-kappa) ratio_2, per-N growth of the lower bound


@dataclass(frozen=True)
class Regime:
    kind: str  # "A", "B", "Both" or "None"
    a: RegimeAParams | None = None
    b: RegimeBParams | None = None

    @property
    def has_a(self) -> bool:
        return self.a is not None

    @property
    def has_b(self) -> bool:
        return self.b is not None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.a:
            out["A"] = {"rho": self.a.rho, "delta": self.a.delta}
        if self.b:
            out["B"] = {"kappa": self.b.kappa, "kappa_interval": list(self.b.kappa_interval),
                        "rho": self.b.rho, "growth": self.b.growth}
        return out


def detect_regime(ifs: ProbabilisticIFS) -> Regime:
    """Which non-differentiability construction applies, with its parameters.

    Regime A uses ``rho`` = geometric mean of ``sqrt(ratio_1 ratio_2)`` and 1/2
    and ``delta`` = Cramer rate of the mean log-ratio at ``log rho``. Regime B
    uses ``kappa`` = midpoint of ``(log_{1/ratio_1} ratio_2, log2 ratio_2 - 1)``.
    """
    if ifs.k != 2 or ifs.probs != (0.5, 0.5):
        return Regime("None")
    l1, l2 = (float(v) for v in ifs.ratios)
    if not l1 < 1.0 < l2:
        return Regime("None")
    a = b = None
    if l1 * l2 < 0.25:
        rho = math.sqrt(math.sqrt(l1 * l2) * 0.5)
        a = RegimeAParams(rho, cramer_rate(ifs, math.log(rho)))
    lo = math.log(l2) / math.log(1.0 / l1)
    hi = math.log2(l2) - 1.0
    if hi > lo:
        kappa = 0.5 * (lo + hi)
        b = RegimeBParams(kappa, (lo, hi), l2 * l1**kappa, 2.0 ** (-1.0 - kappa) * l2)
    kind = {(True, True): "Both", (True, False): "A", (False, True): "B"}.get(
        (a is not None, b is not None), "None")
    return Regime(kind, a, b)


@dataclass(frozen=True)
class PrefixTable:
    """Every word of length ``K`` (index = base-2 code, symbol ``m`` is bit
    ``m``) with ``X_K``, ``Lambda_K``, the count of symbol 0 and ``P_K``."""

    K: int
    x: np.ndarray
    lam: np.ndarray
    ones: np.ndarray
    p1: np.ndarray

    @property
    def weight(self) -> float:
        return 2.0 ** -self.K


def _extend(ifs, x, lam, ones, p1, symbol):
    l1 = float(ifs.ratios[0])
    lam = lam * ifs.ratios[symbol]
    ones = ones + (symbol == 0)
    return x + lam, lam, ones, p1 + lam * ones / l1


def enumerate_prefixes(ifs: ProbabilisticIFS, K: int) -> PrefixTable:
    if not ifs.is_canonical:
        raise UnsupportedIFS("enumeration needs two maps, equal weights, unit translations")
    if K > ENUMERATION_CAP:
        raise EnumerationTooLarge(f"2^{K} words exceeds the cap 2^{ENUMERATION_CAP}")
    x = np.ones(1)
    lam = np.ones(1)
    ones = np.zeros(1, dtype=np.int64)
    p1 = np.zeros(1)
    for m in range(K):
        parts = [_extend(ifs, x, lam, ones, p1, s) for s in (0, 1)]
        # symbol m becomes bit m of the word code
        x, lam, ones, p1 = (np.concatenate([parts[0][i], parts[1][i]]) for i in range(4))
    return PrefixTable(K, x, lam, ones, p1)


def word_path(ifs: ProbabilisticIFS, word) -> tuple[float, float, int, float]:
    """``(X_K, Lambda_K, o_K, P_K)`` for one explicit word."""
    if not ifs.is_canonical:
        raise UnsupportedIFS("word sums need two maps, equal weights, unit translations")
    x, lam, ones, p1 = np.ones(1), np.ones(1), np.zeros(1, dtype=np.int64), np.zeros(1)
    for s in word:
        x, lam, ones, p1 = _extend(ifs, x, lam, ones, p1, int(s))
    return float(x[0]), float(lam[0]), int(ones[0]), float(p1[0])


@dataclass(frozen=True)
class AtomTable:
    N: int
    values: np.ndarray  # distinct attainable X_N values >= threshold, ascending
    counts: np.ndarray  # number of words per value
    threshold: float

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / 2.0**self.N

    @property
    def p_exact(self) -> Fraction:
        return Fraction(int(self.counts.sum()), 2**self.N)

    @property
    def p(self) -> float:
        return float(self.p_exact)


def _distinct(values: np.ndarray):
    order = np.sort(values)
    if len(order) == 0:
        return order, np.zeros(0, dtype=np.int64)
    # consecutive values within the tolerance collapse to one atom
    starts = np.concatenate([[True], np.diff(order) > ATOM_TOL])
    idx = np.flatnonzero(starts)
    counts = np.diff(np.concatenate([idx, [len(order)]]))
    return order[idx], counts


def enumerate_prefix_atoms(ifs: ProbabilisticIFS, N: int, threshold: float = 0.0) -> AtomTable:
    """Exact law of ``X_N`` restricted to ``[threshold, inf)``."""
    table = enumerate_prefixes(ifs, N)
    vals, counts = _distinct(table.x)
    keep = vals >= threshold
    return AtomTable(N, vals[keep], counts[keep], float(threshold))


@dataclass(frozen=True)
class WitnessA:
    N: int
    M_N: int
    atoms: tuple[float, ...]
    ball_radius: float
    support_radius: float
    r: float
    p_N: float
    p_N_exact: str  # dyadic fraction as text, empty for sampled estimates
    rho: float
    condition: str
    approximate: bool = False

    regime = "A"

    def bump(self) -> PlateauFunction:
        return PlateauFunction([Plateau.around(a, self.ball_radius, self.support_radius)
                                for a in self.atoms])

    def l1_bound(self) -> float:
        """``4 r rho^N #A_N``, the measure of the support neighbourhood."""
        return 2.0 * self.support_radius * len(self.atoms)

    def geometric_bound(self) -> float:
        """``8 r p_N (2 rho)^N``."""
        return 8.0 * self.r * self.p_N * (2.0 * self.rho) ** self.N

    def lower_bound(self, c: float) -> float:
        return c / 8.0 / math.sqrt(self.N)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["atoms"] = list(self.atoms)
        d["regime"] = "A"
        return d


@dataclass(frozen=True)
class WitnessB:
    N: int
    kappa_N: int
    center: float
    ball_radius: float
    support_radius: float
    r: float
    rho: float
    kappa: float
    word: tuple[int, ...]  # 0-based symbols of the focus prefix
    lambda_K: float

    regime = "B"

    def bump(self) -> PlateauFunction:
        return PlateauFunction([Plateau.around(self.center, self.ball_radius,
                                               self.support_radius)])

    def l1_bound(self) -> float:
        return 2.0 * self.support_radius

    def geometric_bound(self) -> float:
        return 4.0 * self.r * self.rho**self.N

    def lower_bound(self, c: float, ratio_2: float) -> float:
        return c / 8.0 * (2.0 ** (-1.0 - self.kappa) * ratio_2) ** self.N

    def to_dict(self) -> dict:
        d = asdict(self)
        d["word"] = list(self.word)
        d["regime"] = "B"
        return d


@lru_cache(maxsize=32)
def median_r(ifs: ProbabilisticIFS, replicas: int = 1_000_000, master_seed: int = 0,
             n: int | None = None) -> float:
    """Median of ``X - 1``, on a truncation deep enough for the series to have
    converged. Cached per system."""
    if n is None:
        n = converged_truncation(ifs, master_seed=master_seed)
    return float(empirical_quantile(ifs, 0.5, -1.0, n, replicas, master_seed))


def _cp_lower(k: int, n: int, alpha: float) -> float:
    return 0.0 if k == 0 else float(stats.beta.ppf(alpha, k, n - k + 1))


def _cp_upper(k: int, n: int, alpha: float) -> float:
    return 1.0 if k == n else float(stats.beta.ppf(1 - alpha, k + 1, n - k))


def find_M(ifs: ProbabilisticIFS, N: int, rho: float, delta: float, r: float,
           condition: str = "exact", replicas: int = 1_000_000, master_seed: int = 0,
           alpha: float = 1e-3) -> WitnessA:
    """Largest integer ``M`` with ``M p >= N^(-1/2)`` and ``p >= q`` where
    ``p = P{X_N >= M}``.

    ``condition="cramer"`` takes ``q = 2 exp(-delta N)``. ``condition="exact"``
    takes ``q = 2 P{Lambda_N >= rho^N}``, the probability that the Cramer
    bound controls; it is what the lower bound on ``h_N'(0)`` actually uses and
    it is far less conservative at moderate ``N``.

    Up to ``N = 24`` all probabilities are exact; beyond, they come from
    ``replicas`` samples with one-sided Clopper-Pearson bounds at level
    ``alpha`` (lower for ``p``, upper for the Lambda tail).
    """
    if condition not in ("exact", "cramer"):
        raise ValueError("condition must be 'exact' or 'cramer'")
    _require_canonical(ifs)
    approximate = N > ENUMERATION_CAP
    if not approximate:
        table = enumerate_prefixes(ifs, N)
        xs = table.x
        total = len(xs)
        lam_tail = np.count_nonzero(table.lam >= rho**N) / total
    else:
        parts = map_chunks(ifs, lambda b: (b.x.copy(), b.lam.copy()), N, replicas, master_seed)
        xs = np.concatenate([p[0] for p in parts])
        lam = np.concatenate([p[1] for p in parts])
        total = len(xs)
        lam_tail = _cp_upper(int(np.count_nonzero(lam >= rho**N)), total, alpha)
    q = 2.0 * math.exp(-delta * N) if condition == "cramer" else 2.0 * lam_tail
    sorted_x = np.sort(xs)
    ms = np.arange(1, int(math.floor(sorted_x[-1])) + 1)
    counts = total - np.searchsorted(sorted_x, ms, side="left")
    if approximate:
        p = np.array([_cp_lower(int(c), total, alpha) for c in counts])
    else:
        p = counts / total
    ok = (ms * p >= N**-0.5) & (p >= q)
    if not np.any(ok):
        later = None
        if not approximate:
            later = first_feasible_N(ifs, rho, delta, r, condition, start=N + 1)
        raise NoFeasibleM(f"no integer M satisfies both conditions at N={N} "
                          f"(threshold q={q:.4g})", smallest_feasible=later)
    best = int(np.flatnonzero(ok)[-1])
    M = int(ms[best])
    vals, _ = _distinct(sorted_x[sorted_x >= M])
    p_M = float(p[best])
    exact = "" if approximate else str(Fraction(int(counts[best]), total))
    # re-verify the defining inequalities on the returned value
    assert M * p_M >= N**-0.5 and p_M >= q
    return WitnessA(N, M, tuple(float(v) for v in vals), r * rho**N, 2.0 * r * rho**N, r,
                    p_M, exact, rho, condition, approximate)


def _feasible(ifs, N, rho, delta, condition) -> bool:
    table = enumerate_prefixes(ifs, N)
    if condition == "cramer":
        q = 2.0 * math.exp(-delta * N)
    else:
        q = 2.0 * np.count_nonzero(table.lam >= rho**N) / len(table.lam)
    xs = np.sort(table.x)
    ms = np.arange(1, int(math.floor(xs[-1])) + 1)
    p = (len(xs) - np.searchsorted(xs, ms, side="left")) / len(xs)
    return bool(np.any((ms * p >= N**-0.5) & (p >= q)))


def first_feasible_N(ifs: ProbabilisticIFS, rho: float, delta: float, r: float = 1.0,
                     condition: str = "exact", start: int = 1,
                     stop: int = ENUMERATION_CAP) -> int | None:
    """Smallest ``N`` in ``[start, stop]`` admitting some ``M(N)``, or None."""
    for N in range(start, stop + 1):
        if _feasible(ifs, N, rho, delta, condition):
            return N
    return None


def focus_word(N: int, kappa: float) -> tuple[int, ...]:
    """0-based word: ``N`` expanding symbols then ``ceil(kappa N)`` contracting."""
    return (1,) * N + (0,) * math.ceil(kappa * N)


def build_witness(ifs: ProbabilisticIFS, regime: Regime, N: int, r: float | None = None,
                  which: str | None = None, condition: str = "exact"):
    """``(witness, phi_N')`` for one ``N``; ``which`` picks A or B when both apply."""
    _require_canonical(ifs)
    if which is None:
        which = "A" if regime.has_a else "B"
    if r is None:
        r = median_r(ifs)
    if which == "A":
        if not regime.has_a:
            raise UnsupportedIFS("regime A does not hold for this system")
        w = find_M(ifs, N, regime.a.rho, regime.a.delta, r, condition)
    elif which == "B":
        if not regime.has_b:
            raise UnsupportedIFS("regime B does not hold for this system")
        kappa = regime.b.kappa
        word = focus_word(N, kappa)
        x, lam, _, _ = word_path(ifs, word)
        rho = regime.b.rho
        w = WitnessB(N, len(word) - N, x, r * rho**N, 2.0 * r * rho**N, r, rho, kappa, word, lam)
    else:
        raise ValueError("which must be 'A' or 'B'")
    return w, w.bump()


def _tail_samples(ifs, replicas, master_seed, n, threads):
    parts = map_chunks(ifs, lambda b: (b.x.copy(), b.derivs[:, 0].copy()), n, replicas,
                       master_seed, threads, order=1, direction=Ratio(0))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _stratified(ifs, strata, weight, fn, y, d1, block=1 << 22):
    """Per-tail-sample value ``sum_w weight * fn(X, X^(1) | w)``."""
    l1 = float(ifs.ratios[0])
    x, lam, ones, p1 = strata
    total = np.zeros(len(y))
    size = max(1, block // max(len(y), 1))
    for s in range(0, len(x), size):
        xs = x[s:s + size, None]
        ls = lam[s:s + size, None]
        xv = xs + ls * y[None, :]
        x1 = p1[s:s + size, None] + ls * (ones[s:s + size, None] * y[None, :] / l1 + d1[None, :])
        vals = fn(xv.ravel(), x1.ravel()).reshape(xv.shape)
        total += weight * np.sum(vals, axis=0)
    return total


def _strata_for(ifs, witness, bump):
    """Prefix strata relevant to ``bump`` plus the focus-word complement spec."""
    hi = bump.support[1]
    if isinstance(witness, WitnessA):
        table = enumerate_prefixes(ifs, witness.N)
        # X >= X_N(w), so prefixes starting beyond the support cannot contribute
        keep = table.x <= hi
        strata = (table.x[keep], table.lam[keep], table.ones[keep], table.p1[keep])
        return strata, table.weight, None
    x, lam, ones, p1 = word_path(ifs, witness.word)
    strata = (np.array([x]), np.array([lam]), np.array([ones]), np.array([p1]))
    return strata, 2.0 ** -len(witness.word), witness.word


def _complement(ifs, word, fn, replicas, master_seed, n, threads):
    K = len(word)
    code = sum(int(s) << m for m, s in enumerate(word))

    def work(batch):
        codes = prefix_codes(master_seed, batch.start, len(batch), K, ifs.probs)
        v = np.where(codes != code, fn(batch.x, batch.derivs[:, 0]), 0.0)
        return _moments(v)

    parts = map_chunks(ifs, work, n, replicas, master_seed, threads, order=1, direction=Ratio(0))
    mean, se, cnt = summarize(parts)
    return mean, se


@dataclass(frozen=True)
class StratifiedEstimate:
    estimate: MCEstimate
    stratified_part: float
    stratified_se: float
    complement_part: float
    complement_se: float


def _estimate(ifs, witness, bump, fn, replicas, master_seed, n, threads,
              complement_replicas=None) -> StratifiedEstimate:
    if n is None:
        n = converged_truncation(ifs, master_seed=master_seed)
    strata, weight, word = _strata_for(ifs, witness, bump)
    y, d1 = _tail_samples(ifs, replicas, master_seed, n, threads)
    y = y - 1.0
    v = _stratified(ifs, strata, weight, fn, y, d1)
    s_mean = float(np.mean(v))
    s_se = float(np.std(v, ddof=1) / math.sqrt(len(v)))
    c_mean = c_se = 0.0
    if word is not None:
        c_mean, c_se = _complement(ifs, word, fn, complement_replicas or replicas,
                                   master_seed + 1, n, threads)
    est = MCEstimate(s_mean + c_mean, math.hypot(s_se, c_se), replicas, n, master_seed)
    return StratifiedEstimate(est, s_mean, s_se, c_mean, c_se)


def estimate_hN_prime(ifs: ProbabilisticIFS, witness, bump: PlateauFunction,
                      replicas: int = 20_000, master_seed: int = 0, n: int | None = None,
                      threads: int = 1, complement_replicas: int | None = None) -> MCEstimate:
    """``E[phi_N'(X) X^(1)]`` by exact prefix strata and sampled tails.

    Regime A sums over every length-N prefix. Regime B isolates the focus
    word exactly and adds a plain Monte Carlo estimate over all other paths.
    """
    if not bump.pieces:
        return MCEstimate(0.0, 0.0, replicas, n or 0, master_seed)

    def fn(x, x1):
        return bump(x) * x1

    return _estimate(ifs, witness, bump, fn, replicas, master_seed, n, threads,
                     complement_replicas).estimate


def ball_probability(ifs: ProbabilisticIFS, witness, replicas: int = 20_000,
                     master_seed: int = 0, n: int | None = None, threads: int = 1,
                     complement_replicas: int | None = None) -> MCEstimate:
    """``P{X in B_N}``, the ``ball_radius``-neighbourhood of the atoms (A) or
    of the centre (B)."""
    centers = np.asarray(witness.atoms if isinstance(witness, WitnessA) else [witness.center])
    radius = witness.ball_radius

    def fn(x, x1):
        i = np.clip(np.searchsorted(centers, x), 1, len(centers) - 1) if len(centers) > 1 else 0
        if len(centers) == 1:
            dist = np.abs(x - centers[0])
        else:
            dist = np.minimum(np.abs(x - centers[i - 1]), np.abs(x - centers[i]))
        return (dist <= radius).astype(float)

    # the ball sits inside the bump's plateau, so the bump's strata cover it
    return _estimate(ifs, witness, witness.bump(), fn, replicas, master_seed, n, threads,
                     complement_replicas).estimate


def plain_hN_prime(ifs: ProbabilisticIFS, bump: PlateauFunction, replicas: int = 100_000,
                   master_seed: int = 0, n: int | None = None, threads: int = 1) -> MCEstimate:
    """Unstratified Monte Carlo of ``E[phi'(X) X^(1)]``, as a cross-check."""
    from .sampler import estimate_expectation

    if n is None:
        n = converged_truncation(ifs, master_seed=master_seed)
    return estimate_expectation(ifs, lambda b: bump(b.x) * b.derivs[:, 0], n, replicas,
                                master_seed, threads, order=1, direction=Ratio(0))


@dataclass(frozen=True)
class DivergenceRow:
    N: int
    h_prime: float
    h_prime_se: float
    lower_bound: float
    passed: bool
    partial_sum: float
    l1_norm: float
    l1_bound: float
    ball_probability: float | None = None
    ball_probability_se: float | None = None
    ball_bound: float | None = None
    M_N: int | None = None
    p_N: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DivergenceReport:
    regime: str
    c: float
    r: float
    parameters: dict
    rows: tuple[DivergenceRow, ...]
    infeasible: tuple[int, ...] = ()
    witnesses: tuple = ()

    @property
    def l1_total(self) -> float:
        return sum(row.l1_norm for row in self.rows)

    @property
    def l1_bound_total(self) -> float:
        return sum(row.l1_bound for row in self.rows)

    @property
    def all_passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "c": self.c,
            "r": self.r,
            "parameters": self.parameters,
            "rows": [row.to_dict() for row in self.rows],
            "infeasible": list(self.infeasible),
            "l1_total": self.l1_total,
            "l1_bound_total": self.l1_bound_total,
        }


def divergence_report(ifs: ProbabilisticIFS, N_range, replicas: int = 20_000,
                      master_seed: int = 0, which: str | None = None, z: float = 4.0,
                      condition: str = "exact", r: float | None = None, threads: int = 1,
                      complement_replicas: int | None = None,
                      with_ball: bool = True) -> DivergenceReport:
    """Per-N estimates of ``h_N'(0)`` against their lower bounds, partial sums
    and the L1 audit of ``phi_N'``. Infeasible N (no ``M(N)``) are listed, not
    raised, unless every N is infeasible."""
    regime = detect_regime(ifs)
    if regime.kind == "None":
        raise UnsupportedIFS("neither non-differentiability regime holds")
    which = which or ("A" if regime.has_a else "B")
    c = derivative_floor_constant(ifs)
    if r is None:
        r = median_r(ifs)
    l2 = float(ifs.ratios[1])
    rows, infeasible, witnesses = [], [], []
    partial = 0.0
    params = regime.to_dict()
    for N in N_range:
        try:
            w, bump = build_witness(ifs, regime, N, r, which, condition)
        except NoFeasibleM:
            infeasible.append(N)
            continue
        est = estimate_hN_prime(ifs, w, bump, replicas, master_seed + N, threads=threads,
                                complement_replicas=complement_replicas)
        if which == "A":
            bound = w.lower_bound(c)
            l1_bound = w.geometric_bound()
            ball_bound = w.p_N / 4.0
        else:
            bound = w.lower_bound(c, l2)
            l1_bound = w.geometric_bound()
            ball_bound = 2.0 ** -len(w.word) / 2.0
        ball = ball_probability(ifs, w, replicas, master_seed + N, threads=threads,
                                complement_replicas=complement_replicas) if with_ball else None
        partial += est.mean
        rows.append(DivergenceRow(
            N, est.mean, est.std_error, bound, bool(est.mean >= bound - z * est.std_error),
            partial, bump.l1_norm, l1_bound,
            None if ball is None else ball.mean, None if ball is None else ball.std_error,
            ball_bound,
            getattr(w, "M_N", None), getattr(w, "p_N", None),
        ))
        witnesses.append(w)
    if not rows and infeasible:
        raise NoFeasibleM(f"no feasible N in {list(N_range)}")
    return DivergenceReport(which, c, r, params, tuple(rows), tuple(infeasible), tuple(witnesses))


def family_to_json(ifs: ProbabilisticIFS, regime: Regime, witnesses, indent: int | None = 2) -> str:
    """Serialise a witness family; see the README for the schema."""
    doc = {
        "schema": SCHEMA,
        "ifs": ifs.to_dict(),
        "regime": regime.to_dict(),
        "witnesses": [w.to_dict() for w in witnesses],
    }
    return json.dumps(doc, indent=indent, sort_keys=True)


def family_from_json(text: str):
    """Inverse of :func:`family_to_json`: ``(ifs, witnesses)``."""
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    spec = doc["ifs"]
    ifs = ProbabilisticIFS.from_params(spec["ratios"], spec["translations"], spec["probs"])
    out = []
    for w in doc["witnesses"]:
        w = dict(w)
        kind = w.pop("regime")
        if kind == "A":
            w["atoms"] = tuple(w["atoms"])
            out.append(WitnessA(**w))
        else:
            w["word"] = tuple(w["word"])
            out.append(WitnessB(**w))
    return ifs, out
