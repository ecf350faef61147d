"""Symbol paths, truncated series and the Monte Carlo expectation engine.

Conventions (0-based symbols ``i_1, i_2, ...``; ``Lambda_m`` is the product of
the first ``m`` ratios):

* ``X_n = sum_{m=0}^{n} d_{i_{m+1}} Lambda_m`` uses ``n + 1`` symbols,
* ``Lambda_n = ratio_{i_1} ... ratio_{i_n}``,
* for a ratio direction ``q``,
  ``X_n^(j) = j!/ratio_q**j * sum_{m=1}^{n} d_{i_{m+1}} Lambda_m C(o(m), j)``
  where ``o(m)`` counts occurrences of ``q`` among ``i_1..i_m``; this is the
  exact j-th derivative of ``X_n`` in ``ratio_q``,
* for a translation direction ``q`` the first derivative is
  ``sum_{m=0}^{n} Lambda_m [i_{m+1} = q]`` and higher ones vanish.

Then ``X_{n+m} = X_n + Lambda_n * (Z_m - d_{i_{n+1}})`` exactly, where ``Z_m`` is
the truncated series of the path shifted by ``n`` symbols.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateDistribution, InadmissiblePerturbation, NonFiniteSample
from .ifs import ProbabilisticIFS
from .rng import seed_to_u64, symbol_thresholds, symbols as _symbols

DEFAULT_TRUNCATION = 200
CHUNK = 1 << 15
CONVERGED_LAMBDA = 1e-30


@dataclass(frozen=True)
class ParamDirection:
    """Which parameter is perturbed: ``kind`` is ``"ratio"`` or ``"translation"``,
    ``index`` is 0-based."""

    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in ("ratio", "translation"):
            raise ValueError(f"unknown direction kind {self.kind!r}")
        if self.index < 0:
            raise ValueError("index must be >= 0")

    def check(self, ifs: ProbabilisticIFS) -> None:
        if self.index >= ifs.k:
            raise ValueError(f"direction index {self.index} out of range for {ifs.k} maps")

    def __str__(self):
        return f"{self.kind}:{self.index + 1}"

    @classmethod
    def parse(cls, text: str) -> "ParamDirection":
        """Parse ``"ratio:1"`` / ``"translation:2"`` (1-based, as in the maths)."""
        kind, _, idx = text.strip().partition(":")
        kind = kind.strip().lower()
        kind = {"lambda": "ratio", "d": "translation"}.get(kind, kind)
        return cls(kind, int(idx or 1) - 1)


def Ratio(index: int = 0) -> ParamDirection:
    return ParamDirection("ratio", index)


def Translation(index: int = 0) -> ParamDirection:
    return ParamDirection("translation", index)


def perturbed_params(ifs: ProbabilisticIFS, eps: float, direction: ParamDirection):
    direction.check(ifs)
    ratios = ifs.ratios.copy()
    trans = ifs.translations.copy()
    if direction.kind == "ratio":
        ratios[direction.index] = ratios[direction.index] + eps
        if not ratios[direction.index] > 0:
            raise InadmissiblePerturbation(
                f"perturbed ratio {ratios[direction.index]} is not positive"
            )
    else:
        trans[direction.index] = trans[direction.index] + eps
    return ratios, trans


def perturbed_ifs(ifs: ProbabilisticIFS, eps: float, direction: ParamDirection) -> ProbabilisticIFS:
    """The perturbed system, which must still contract on average."""
    ratios, trans = perturbed_params(ifs, eps, direction)
    try:
        return ProbabilisticIFS.from_params(ratios, trans, ifs.probs)
    except Exception as exc:  # validation failure means no stationary measure
        raise InadmissiblePerturbation(f"eps={eps}: {exc}") from exc


@dataclass(frozen=True)
class TruncatedPath:
    symbols: np.ndarray  # i_1 .. i_{n+1}
    partial_products: np.ndarray  # Lambda_0 .. Lambda_n
    one_counts: np.ndarray  # o(0) .. o(n)
    x_n: float
    seed_id: int
    count_index: int = 0

    @property
    def n(self) -> int:
        return len(self.partial_products) - 1

    @property
    def lambda_n(self) -> float:
        return float(self.partial_products[-1])


def path_from_symbols(ifs: ProbabilisticIFS, word: Sequence[int], seed_id: int = -1,
                      count_index: int = 0) -> TruncatedPath:
    """Deterministic path for an explicit word of length ``n + 1``."""
    word = np.asarray(word, dtype=np.int64)
    if word.ndim != 1 or len(word) < 1:
        raise ValueError("word must be a nonempty 1-d sequence")
    if np.any(word < 0) or np.any(word >= ifs.k):
        raise ValueError("symbol out of range")
    n = len(word) - 1
    ratios = ifs.ratios
    lam = np.empty(n + 1)
    counts = np.zeros(n + 1, dtype=np.int64)
    lam[0] = 1.0
    for m in range(1, n + 1):
        lam[m] = lam[m - 1] * ratios[word[m - 1]]
        counts[m] = counts[m - 1] + (word[m - 1] == count_index)
    x = _series(word, ratios, ifs.translations)
    return TruncatedPath(word, lam, counts, x, seed_id, count_index)


def _series(word, ratios, trans) -> float:
    # same operation order as the compiled kernel
    x = 0.0
    lam = 1.0
    n = len(word) - 1
    for m in range(n + 1):
        s = word[m]
        x = x + float(trans[s]) * lam
        if m < n:
            lam = lam * float(ratios[s])
    return x


def sample_path(ifs: ProbabilisticIFS, n: int, master_seed: int, replica_index: int,
                count_index: int = 0) -> TruncatedPath:
    """Reconstruct replica ``replica_index`` of the stream ``master_seed``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    word = _symbols(master_seed, replica_index, n + 1, ifs.probs)
    return path_from_symbols(ifs, word, replica_index, count_index)


def eval_series(path: TruncatedPath, ifs: ProbabilisticIFS, eps: float,
                direction: ParamDirection) -> float:
    """``X_n(eps)`` on the symbols of ``path``."""
    if eps == 0:
        return path.x_n
    ratios, trans = perturbed_params(ifs, eps, direction)
    return _series(path.symbols, ratios, trans)


@dataclass(frozen=True)
class FormalDerivatives:
    order: int
    values: np.ndarray
    direction: ParamDirection


def eval_formal_derivatives(path: TruncatedPath, ifs: ProbabilisticIFS, order: int,
                            direction: ParamDirection) -> FormalDerivatives:
    if order < 1:
        raise ValueError("order must be >= 1")
    direction.check(ifs)
    word = path.symbols
    n = path.n
    ratios = ifs.ratios
    trans = ifs.translations
    q = direction.index
    der = [0.0] * (order + 1)
    if direction.kind == "ratio":
        binom = [1] + [0] * order
        lam = 1.0
        for m in range(n + 1):
            s = word[m]
            if m >= 1:
                base = float(trans[s]) * lam
                for j in range(1, order + 1):
                    der[j] = der[j] + base * float(binom[j])
            if m < n:
                lam = lam * float(ratios[s])
                if s == q:
                    for j in range(order, 0, -1):
                        binom[j] = binom[j] + binom[j - 1]
        scale = 1.0
        out = np.empty(order)
        for j in range(1, order + 1):
            scale = scale * j / float(ratios[q])
            out[j - 1] = der[j] * scale
    else:
        lam = 1.0
        for m in range(n + 1):
            s = word[m]
            if s == q:
                der[1] = der[1] + lam
            if m < n:
                lam = lam * float(ratios[s])
        out = np.zeros(order)
        out[0] = der[1]
    return FormalDerivatives(order, out, direction)


@dataclass(frozen=True)
class PathBatch:
    """Per-replica arrays for one chunk of replicas.

    ``x_sets[:, p]`` holds ``X_n`` under parameter set ``p`` (set 0 is the
    unperturbed system, so ``x_sets[:, 0] is x``); ``derivs[:, j-1]`` holds the
    j-th formal derivative.
    """

    start: int
    x: np.ndarray
    lam: np.ndarray
    derivs: np.ndarray | None
    x_sets: np.ndarray

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    replicas: int
    truncation_n: int
    master_seed: int
    converged_fraction: float | None = None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "replicas": self.replicas,
            "truncation_n": self.truncation_n,
            "master_seed": self.master_seed,
            "converged_fraction": self.converged_fraction,
        }


def _param_arrays(ifs, param_sets):
    ratios = [ifs.ratios]
    trans = [ifs.translations]
    for r, d in param_sets or ():
        ratios.append(np.asarray(r, dtype=float))
        trans.append(np.asarray(d, dtype=float))
    return np.ascontiguousarray(np.vstack(ratios)), np.ascontiguousarray(np.vstack(trans))


def sample_batch(ifs: ProbabilisticIFS, n: int, master_seed: int, start: int, count: int,
                 order: int = 0, direction: ParamDirection | None = None,
                 param_sets=None) -> PathBatch:
    """Evaluate replicas ``start .. start+count-1`` in one compiled call."""
    ratios, trans = _param_arrays(ifs, param_sets)
    n_sets = ratios.shape[0]
    if order > 0:
        if direction is None:
            direction = Ratio(0)
        direction.check(ifs)
        kind = _kernels.DIR_RATIO if direction.kind == "ratio" else _kernels.DIR_TRANSLATION
        index = direction.index
    else:
        kind, index = _kernels.DIR_NONE, 0
    thresholds = symbol_thresholds(ifs.probs)
    if kind == _kernels.DIR_NONE and n_sets == 1:
        out_x = np.empty(count)
        out_lam = np.empty(count)
        _kernels.x_kernel(seed_to_u64(master_seed), np.int64(start), np.int64(count),
                          np.int64(n), thresholds, ratios[0], trans[0], out_x, out_lam)
        return PathBatch(start, out_x, out_lam, None, out_x[:, None])
    out_x = np.empty((count, n_sets))
    out_lam = np.empty((count, n_sets))
    out_der = np.empty((count, max(order, 1)))
    _kernels.path_kernel(
        seed_to_u64(master_seed), np.int64(start), np.int64(count), np.int64(n),
        thresholds, ratios, trans, np.int64(kind), np.int64(index),
        np.int64(order), out_x, out_lam, out_der,
    )
    return PathBatch(start, out_x[:, 0], out_lam[:, 0], out_der if order > 0 else None, out_x)


def map_chunks(ifs, fn: Callable[[PathBatch], object], n: int, replicas: int, master_seed: int,
               threads: int = 1, order: int = 0, direction=None, param_sets=None,
               chunk: int = CHUNK) -> list:
    """Apply ``fn`` to every fixed-size chunk of replicas; results in chunk order.

    Chunk boundaries depend only on ``replicas`` and ``chunk``, never on
    ``threads``, so any reduction over the returned list is thread-count
    independent.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    starts = list(range(0, replicas, chunk))

    def work(start):
        count = min(chunk, replicas - start)
        batch = sample_batch(ifs, n, master_seed, start, count, order, direction, param_sets)
        return fn(batch)

    if threads <= 1 or len(starts) == 1:
        return [work(s) for s in starts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, starts))


def _moments(values: np.ndarray):
    cnt = len(values)
    mean = float(np.sum(values)) / cnt
    m2 = float(np.sum((values - mean) ** 2))
    return cnt, mean, m2


def _combine(a, b):
    na, ma, qa = a
    nb_, mb, qb = b
    n = na + nb_
    delta = mb - ma
    return n, ma + delta * (nb_ / n), qa + qb + delta * delta * (na * nb_ / n)


def tree_reduce(parts: list, op):
    """Fixed-shape pairwise reduction."""
    if not parts:
        raise ValueError("nothing to reduce")
    while len(parts) > 1:
        nxt = [op(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def summarize(parts: list):
    """Combine per-chunk ``(count, mean, M2)`` triples into ``(mean, std_error, count)``."""
    cnt, mean, m2 = tree_reduce(parts, _combine)
    var = m2 / (cnt - 1) if cnt > 1 else 0.0
    return mean, math.sqrt(max(var, 0.0) / cnt), cnt


def estimate_expectation(ifs: ProbabilisticIFS, functional: Callable[[PathBatch], np.ndarray],
                         n: int = DEFAULT_TRUNCATION, replicas: int = 100_000,
                         master_seed: int = 0, threads: int = 1, order: int = 0,
                         direction: ParamDirection | None = None, param_sets=None,
                         chunk: int = CHUNK) -> MCEstimate:
    """Monte Carlo mean of ``functional`` over ``replicas`` independent paths.

    ``functional`` receives a :class:`PathBatch` and returns one value per
    replica. Request formal derivatives with ``order``/``direction`` and
    additional parameter sets (common random numbers) with ``param_sets``, a
    list of ``(ratios, translations)``.
    """
    if replicas < 2:
        raise ValueError("replicas must be >= 2")

    def fn(batch):
        v = np.asarray(functional(batch), dtype=float)
        if v.shape == ():
            v = np.full(len(batch), float(v))
        if v.shape != (len(batch),):
            raise ValueError(f"functional returned shape {v.shape}, expected ({len(batch)},)")
        bad = ~np.isfinite(v)
        if np.any(bad):
            rid = batch.start + int(np.argmax(bad))
            raise NonFiniteSample(f"non-finite functional value at replica {rid}", seed_id=rid)
        conv = int(np.count_nonzero(batch.lam <= CONVERGED_LAMBDA))
        return _moments(v), conv

    results = map_chunks(ifs, fn, n, replicas, master_seed, threads, order, direction,
                         param_sets, chunk)
    mean, se, cnt = summarize([r[0] for r in results])
    conv = sum(r[1] for r in results)
    return MCEstimate(mean, se, cnt, n, master_seed, conv / cnt)


@dataclass(frozen=True)
class TailPoint:
    threshold: float
    probability: float
    std_error: float
    count: int


def empirical_tail(ifs: ProbabilisticIFS, thresholds: Sequence[float], n: int = DEFAULT_TRUNCATION,
                   replicas: int = 100_000, master_seed: int = 0, threads: int = 1) -> list[TailPoint]:
    """Empirical ``P(X_n >= R)`` for each threshold, with binomial standard errors."""
    r = np.asarray(thresholds, dtype=float)
    if np.any(r <= 0):
        raise ValueError("thresholds must be > 0")

    def fn(batch):
        return np.count_nonzero(batch.x[:, None] >= r[None, :], axis=0)

    counts = np.sum(map_chunks(ifs, fn, n, replicas, master_seed, threads), axis=0)
    out = []
    for thr, c in zip(r, counts):
        p = c / replicas
        out.append(TailPoint(float(thr), float(p), math.sqrt(p * (1 - p) / replicas), int(c)))
    return out


def sample_values(ifs: ProbabilisticIFS, n: int = DEFAULT_TRUNCATION, replicas: int = 100_000,
                  master_seed: int = 0, threads: int = 1) -> np.ndarray:
    """All ``X_n`` values, in replica order."""
    parts = map_chunks(ifs, lambda b: b.x.copy(), n, replicas, master_seed, threads)
    return np.concatenate(parts)


def empirical_quantile(ifs: ProbabilisticIFS, q, shift: float = 0.0, n: int = DEFAULT_TRUNCATION,
                       replicas: int = 100_000, master_seed: int = 0, threads: int = 1):
    """Empirical q-quantile(s) of ``X_n + shift``; ``q`` may be a sequence."""
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any((qs <= 0) | (qs >= 1)):
        raise ValueError("q must lie in (0, 1)")
    x = sample_values(ifs, n, replicas, master_seed, threads) + shift
    scale = max(abs(float(np.median(x))), 1.0)
    if np.ptp(x) <= 1e-12 * scale:
        raise DegenerateDistribution("sample has no spread (degenerate stationary law)")
    vals = np.quantile(x, qs, method="inverted_cdf")
    return float(vals[0]) if np.ndim(q) == 0 else vals


@dataclass(frozen=True)
class TiltedTailPoint:
    threshold: float
    probability: float
    std_error: float
    unfinished: int  # replicas that had not passed the level within max_steps


def tilted_tail(ifs: ProbabilisticIFS, thresholds: Sequence[float], replicas: int = 100_000,
                master_seed: int = 0, threads: int = 1, max_steps: int = 100_000,
                switch: float = 0.5, chunk: int = CHUNK) -> list[TiltedTailPoint]:
    """Unbiased estimates of ``P(X > R)`` that stay accurate far into the tail.

    Symbols are drawn from the tilted law ``q_i = p_i ratio_i**s0`` (a
    probability vector because ``s0`` solves ``sum p_i ratio_i**s = 1``), under
    which ``log Lambda_n`` drifts upward, until ``X_n`` first reaches
    ``switch * R``; the series is then completed under the original law. The
    score is the likelihood ratio ``Lambda_tau**-s0`` of the tilted symbols
    times ``1{X > R}``. Paths that never reach ``switch * R`` cannot exceed
    ``R`` because ``X_n`` is nondecreasing for positive translations, so the
    estimate is exact in mean.

    Scoring the first passage over ``R`` itself would also be unbiased, but a
    crossing by a tiny last increment carries a huge weight and the second
    moment is infinite for ``s0 >= 1``. Completing the series under the
    original law caps the contribution of such paths by the tail of ``X`` at
    ``(1 - switch) R / Lambda_tau``, which keeps the relative error bounded
    in ``R``.
    """
    from .ifs import tail_exponent

    levels = np.sort(np.asarray(thresholds, dtype=float))
    if np.any(levels <= 0):
        raise ValueError("thresholds must be > 0")
    if not 0 < switch < 1:
        raise ValueError("switch must lie in (0, 1)")
    if np.any(ifs.translations <= 0):
        raise ValueError("tilted tail estimator needs positive translations")
    s0 = tail_exponent(ifs)
    tilted = ifs.prob_array * ifs.ratios**s0
    tilted = symbol_thresholds(tilted / tilted.sum())
    plain = symbol_thresholds(ifs.prob_array)
    ratios = np.ascontiguousarray(ifs.ratios)
    trans = np.ascontiguousarray(ifs.translations)
    starts = list(range(0, replicas, chunk))

    def work(start):
        count = min(chunk, replicas - start)
        w = np.empty((count, len(levels)))
        still_open = np.empty((count, len(levels)), dtype=np.bool_)
        _kernels.passage_kernel(seed_to_u64(master_seed), np.int64(start), np.int64(count),
                                tilted, plain, ratios, trans, levels, float(s0),
                                float(switch), np.int64(max_steps), w, still_open)
        return [_moments(w[:, j]) for j in range(len(levels))], still_open.sum(axis=0)

    if threads <= 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    out = []
    for j, level in enumerate(levels):
        mean, se, _ = summarize([p[0][j] for p in parts])
        out.append(TiltedTailPoint(float(level), mean, se, int(sum(p[1][j] for p in parts))))
    return out


def converged_truncation(ifs: ProbabilisticIFS, target: float = 0.99, pilot: int = 4096,
                         master_seed: int = 0, start: int = DEFAULT_TRUNCATION,
                         cap: int = 1 << 18) -> int:
    """Smallest depth on the doubling ladder ``start, 2*start, ...`` at which a
    pilot run has ``Lambda_n <= CONVERGED_LAMBDA`` in at least ``target`` of
    its replicas. Systems that barely contract on average need thousands of
    terms; the default depth suffices for most others."""
    n = start
    while True:
        parts = map_chunks(ifs, lambda b: int(np.count_nonzero(b.lam <= CONVERGED_LAMBDA)),
                           n, pilot, master_seed)
        if sum(parts) >= target * pilot or n >= cap:
            return n
        n *= 2
