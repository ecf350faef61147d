"""Compiled per-replica path evaluation.

Plain left-to-right accumulation, no fastmath, so every replica's numbers are
reproducible bit for bit by the pure-Python path code in ``sampler``. Symbol
selection and derivative bookkeeping are branch-free; random symbols defeat
the branch predictor otherwise.
"""

import numba as nb
import numpy as np

from .rng import GAMMA, mix64, stream_key

_ONE = np.uint64(1)
_S32 = np.uint64(32)
_LOW = np.uint64(0xFFFFFFFF)

DIR_NONE = 0
DIR_RATIO = 1
DIR_TRANSLATION = 2


@nb.njit(nogil=True, cache=True, inline="always")
def _symbol(key, m, thresholds):
    word = mix64(key + (np.uint64(m >> 1) + _ONE) * GAMMA)
    u = (word >> (_S32 * np.uint64(m & 1))) & _LOW
    s = 0
    for i in range(thresholds.shape[0] - 1):
        s += u >= thresholds[i]
    return s


@nb.njit(nogil=True, cache=True)
def path_kernel(seed, start, count, n, thresholds, ratios, trans, dir_kind, dir_index,
                order, out_x, out_lam, out_der):
    """Fill ``out_x[r, p]`` with X_n under parameter set ``p`` and ``out_der[r, j-1]``
    with the j-th formal derivative (parameter set 0) for replicas
    ``start .. start + count - 1``."""
    n_sets = ratios.shape[0]
    lam = np.empty(n_sets)
    x = np.empty(n_sets)
    binom = np.zeros(order + 1)
    der = np.zeros(order + 1)
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        for p in range(n_sets):
            lam[p] = 1.0
            x[p] = 0.0
        binom[:] = 0.0
        binom[0] = 1.0
        der[:] = 0.0
        for m in range(n + 1):
            s = _symbol(key, m, thresholds)
            for p in range(n_sets):
                x[p] = x[p] + trans[p, s] * lam[p]
            if dir_kind == DIR_RATIO:
                if m >= 1:
                    base = trans[0, s] * lam[0]
                    for j in range(1, order + 1):
                        der[j] = der[j] + base * binom[j]
                if m < n:
                    hit = 1.0 if s == dir_index else 0.0
                    for j in range(order, 0, -1):
                        binom[j] = binom[j] + hit * binom[j - 1]
            elif dir_kind == DIR_TRANSLATION:
                hit = 1.0 if s == dir_index else 0.0
                der[1] = der[1] + hit * lam[0]
            if m < n:
                for p in range(n_sets):
                    lam[p] = lam[p] * ratios[p, s]
        for p in range(n_sets):
            out_x[r, p] = x[p]
            out_lam[r, p] = lam[p]
        if dir_kind == DIR_RATIO:
            scale = 1.0
            pivot = ratios[0, dir_index]
            for j in range(1, order + 1):
                scale = scale * j / pivot
                out_der[r, j - 1] = der[j] * scale
        elif dir_kind == DIR_TRANSLATION:
            out_der[r, 0] = der[1]
            for j in range(1, order):
                out_der[r, j] = 0.0


@nb.njit(nogil=True, cache=True)
def x_kernel(seed, start, count, n, thresholds, ratio_row, trans_row, out_x, out_lam):
    """Single parameter set, no derivatives: the hot path for plain sampling."""
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        x = 0.0
        lam = 1.0
        for m in range(n):
            s = _symbol(key, m, thresholds)
            x = x + trans_row[s] * lam
            lam = lam * ratio_row[s]
        s = _symbol(key, n, thresholds)
        x = x + trans_row[s] * lam
        out_x[r] = x
        out_lam[r] = lam


@nb.njit(nogil=True, cache=True)
def passage_kernel(seed, start, count, tilted, plain, ratios, trans, levels, s0, switch,
                   max_steps, out_w, out_open):
    """Tilted approach to ``switch * level`` then a plain continuation.

    For each level ``R`` symbols follow the ``tilted`` law until the first
    ``n`` with ``X_n >= switch * R`` and the ``plain`` law afterwards.
    ``out_w[r, j]`` is ``Lambda_{tau} ** -s0`` (the likelihood ratio of the
    tilted symbols) when the completed series exceeds ``R``, else 0.
    ``out_open[r, j]`` flags replicas that hit ``max_steps`` undecided.
    """
    n_levels = levels.shape[0]
    for r in range(count):
        base = stream_key(seed, np.uint64(start + r))
        for j in range(n_levels):
            key = stream_key(base, np.uint64(j))
            level = levels[j]
            x = 0.0
            lam = 1.0
            weight = 0.0
            tilting = True
            out_w[r, j] = 0.0
            out_open[r, j] = True
            for m in range(max_steps):
                if tilting:
                    s = _symbol(key, m, tilted)
                else:
                    s = _symbol(key, m, plain)
                x = x + trans[s] * lam
                lam = lam * ratios[s]
                if tilting and x >= switch * level:
                    tilting = False
                    weight = lam ** -s0
                if not tilting:
                    if x > level:
                        out_w[r, j] = weight
                        out_open[r, j] = False
                        break
                    if lam < 1e-13 * (level - x):
                        out_open[r, j] = False
                        break
