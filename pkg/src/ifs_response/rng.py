"""Counter-based symbol stream.

Every symbol is a pure function of ``(master_seed, replica_index, position)``:
a 64-bit stream key is derived from the seed and replica, and the word for
position block ``b`` is ``mix64(key + (b + 1) * GAMMA)`` (the SplitMix64
output function applied to a Weyl sequence). Each 64-bit word yields two
32-bit uniforms, low half first. Replicas can therefore be regenerated in any
order and on any worker.
"""

from __future__ import annotations

import numba as nb
import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_LOW = np.uint64(0xFFFFFFFF)


def _u64(x) -> np.uint64:
    return np.uint64(int(x) & 0xFFFFFFFFFFFFFFFF)


@nb.njit(nb.uint64(nb.uint64), nogil=True, cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nb.uint64(nb.uint64, nb.uint64), nogil=True, cache=True)
def stream_key(seed, replica):
    return mix64(mix64(seed ^ _SEED_SALT) + replica * GAMMA)


@nb.njit(nogil=True, cache=True)
def draw_symbol(key, position, thresholds):
    word = mix64(key + (np.uint64(position >> 1) + np.uint64(1)) * GAMMA)
    if position & 1:
        u = word >> _S32
    else:
        u = word & _LOW
    k = thresholds.shape[0]
    for i in range(k - 1):
        if u < thresholds[i]:
            return i
    return k - 1


def symbol_thresholds(probs) -> np.ndarray:
    """Integer cut points on ``[0, 2**32)``: symbol ``i`` is drawn when the
    32-bit uniform falls below ``thresholds[i]`` and not below the previous one."""
    cum = np.cumsum(np.asarray(probs, dtype=float))
    cut = np.array([min(int(round(c * 2**32)), 2**32) for c in cum], dtype=np.uint64)
    cut[-1] = np.uint64(2**32)
    return cut


def seed_to_u64(seed) -> np.uint64:
    return _u64(seed)


@nb.njit(nogil=True, cache=True)
def _fill_symbols(seed, replica, thresholds, out):
    key = stream_key(seed, replica)
    for m in range(out.shape[0]):
        out[m] = draw_symbol(key, m, thresholds)


def symbols(master_seed, replica_index, length, probs) -> np.ndarray:
    """The first ``length`` symbols (0-based alphabet) of one replica."""
    out = np.empty(length, dtype=np.int64)
    _fill_symbols(seed_to_u64(master_seed), _u64(replica_index), symbol_thresholds(probs), out)
    return out


@nb.njit(nogil=True, cache=True)
def _prefix_codes(seed, start, count, length, thresholds, out):
    k = thresholds.shape[0]
    for r in range(count):
        key = stream_key(seed, np.uint64(start + r))
        code = 0
        scale = 1
        for m in range(length):
            code += draw_symbol(key, m, thresholds) * scale
            scale *= k
        out[r] = code


def prefix_codes(master_seed, start, count, length, probs) -> np.ndarray:
    """Base-k integer code of the first ``length`` symbols of each replica in
    ``start .. start+count-1`` (symbol ``m`` is digit ``m``)."""
    k = len(probs)
    if k**length >= 2**63:
        raise ValueError("prefix too long to encode in 63 bits")
    out = np.empty(count, dtype=np.int64)
    _prefix_codes(seed_to_u64(master_seed), np.int64(start), np.int64(count), np.int64(length),
                  symbol_thresholds(probs), out)
    return out
