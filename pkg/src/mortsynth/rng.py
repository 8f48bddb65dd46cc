"""Counter-based random numbers and exact Poisson sampling.

The generator is Philox4x32-10, a keyed bijection from a 128-bit counter to
128 random bits.  Every draw attempt is addressed by the tuple
``(seed, cell, replicate, attempt)``, so any draw can be produced in
isolation: results never depend on how work is batched or parallelized.

Poisson variates use two exact samplers:

* intensities below 10: inversion by sequential search (one uniform per
  variate, walking the CDF term by term);
* intensities of 10 and above: Hormann's transformed rejection with
  squeeze (PTRS), two uniforms per attempt, acceptance checked against the
  exact log-pmf.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import InvalidIntensityError

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_ROUNDS = 10

# Domain separator in the fourth counter word, so other consumers of the
# same seed can carve out disjoint streams.
_POISSON_TAG = 0x706F6973  # "pois"

# Cells per chunk when vectorizing over a (cells x replicates) grid.
_CHUNK_LANES = 1 << 21


def philox4x32(
    c0: np.ndarray, c1: np.ndarray, c2: np.ndarray, c3: np.ndarray,
    key0: int, key1: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Philox4x32-10 block function, vectorized over counter arrays.

    Counters are uint64 arrays holding 32-bit values; returns four uint64
    arrays of 32-bit words.
    """
    x0 = np.asarray(c0, dtype=np.uint64) & _MASK32
    x1 = np.asarray(c1, dtype=np.uint64) & _MASK32
    x2 = np.asarray(c2, dtype=np.uint64) & _MASK32
    x3 = np.asarray(c3, dtype=np.uint64) & _MASK32
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    x0, x1, x2, x3 = (np.ascontiguousarray(a) for a in (x0, x1, x2, x3))
    for r in range(_ROUNDS):
        k0 = np.uint64((key0 + r * _W0) & 0xFFFFFFFF)
        k1 = np.uint64((key1 + r * _W1) & 0xFFFFFFFF)
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        x0 = hi1 ^ x1 ^ k0
        x1 = lo1
        x2 = hi0 ^ x3 ^ k1
        x3 = lo0
    return x0, x1, x2, x3


def _split_seed(seed: int) -> tuple[int, int]:
    s = int(seed) & 0xFFFFFFFFFFFFFFFF
    return s & 0xFFFFFFFF, s >> 32


def block_uniforms(
    seed: int,
    cell: np.ndarray,
    replicate: np.ndarray,
    attempt: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Two doubles in (0, 1) for each (cell, replicate) lane at ``attempt``.

    Each double carries 53 random bits assembled from two 32-bit words; the
    half-step offset keeps values strictly inside the open interval.
    """
    k0, k1 = _split_seed(seed)
    w0, w1, w2, w3 = philox4x32(attempt, replicate, cell, _POISSON_TAG, k0, k1)
    a = ((w0 << np.uint64(32)) | w1) >> np.uint64(11)
    b = ((w2 << np.uint64(32)) | w3) >> np.uint64(11)
    scale = 2.0 ** -53
    return (a + 0.5) * scale, (b + 0.5) * scale


def _poisson_inversion(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sequential-search CDF inversion; exact for small intensities.

    Walks k = 0, 1, 2, ... accumulating pmf terms until the running CDF
    passes the uniform.  One uniform per variate.
    """
    p = np.exp(-lam)
    cdf = p.copy()
    k = np.zeros(lam.shape, dtype=np.int64)
    active = u > cdf
    # Hard stop far beyond any realistic quantile for lam < 10.
    for step in range(1, 400):
        if not active.any():
            break
        p = np.where(active, p * lam / step, p)
        cdf = np.where(active, cdf + p, cdf)
        k = np.where(active, step, k)
        active = active & (u > cdf)
    return k


def _poisson_ptrs(lam: np.ndarray, seed: int, cell: np.ndarray,
                  replicate: np.ndarray) -> np.ndarray:
    """Transformed rejection with squeeze; exact for intensities >= 10."""
    b = 0.931 + 2.53 * np.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = np.log(lam)

    out = np.full(lam.shape, -1, dtype=np.int64)
    unresolved = np.ones(lam.shape, dtype=bool)
    attempt = 0
    while unresolved.any():
        idx = np.nonzero(unresolved)[0]
        u, v = block_uniforms(seed, cell[idx], replicate[idx], attempt)
        uu = u - 0.5
        us = 0.5 - np.abs(uu)
        k = np.floor((2.0 * a[idx] / us + b[idx]) * uu + lam[idx] + 0.43).astype(np.int64)

        accept = (us >= 0.07) & (v <= v_r[idx])
        reject = (k < 0) | ((us < 0.013) & (v > us))
        need_test = ~(accept | reject)
        if need_test.any():
            j = np.nonzero(need_test)[0]
            kf = k[j].astype(float)
            lhs = np.log(v[j] * inv_alpha[idx][j] / (a[idx][j] / (us[j] * us[j]) + b[idx][j]))
            rhs = kf * log_lam[idx][j] - lam[idx][j] - gammaln(kf + 1.0)
            accept[j] = lhs <= rhs

        out[idx[accept]] = k[accept]
        unresolved[idx[accept]] = False
        attempt += 1
        if attempt > 10_000:  # pragma: no cover - astronomically unlikely
            raise RuntimeError("Poisson rejection sampler failed to terminate")
    return out


def poisson_matrix(seed: int, lam: np.ndarray, replicates: int) -> np.ndarray:
    """Independent Poisson draws for each intensity, shape (cells, replicates).

    Draw (i, j) is a pure function of ``(seed, i, j)``; chunking below is
    purely a memory bound.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size and (np.any(lam < 0) or not np.all(np.isfinite(lam))):
        raise InvalidIntensityError("Poisson intensities must be finite and >= 0")
    if replicates < 1:
        raise InvalidIntensityError("replicate count must be at least 1")

    n = lam.size
    out = np.zeros((n, replicates), dtype=np.int64)
    chunk = max(1, _CHUNK_LANES // max(1, replicates))
    rep_idx = np.arange(replicates, dtype=np.uint64)

    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        lam_c = lam[start:stop]
        cells = np.arange(start, stop, dtype=np.uint64)
        cell_grid = np.repeat(cells, replicates)
        rep_grid = np.tile(rep_idx, stop - start)
        lam_grid = np.repeat(lam_c, replicates)

        res = np.zeros(lam_grid.shape, dtype=np.int64)
        small = (lam_grid > 0) & (lam_grid < 10.0)
        big = lam_grid >= 10.0
        if small.any():
            u, _ = block_uniforms(seed, cell_grid[small], rep_grid[small], 0)
            res[small] = _poisson_inversion(lam_grid[small], u)
        if big.any():
            res[big] = _poisson_ptrs(
                lam_grid[big], seed, cell_grid[big], rep_grid[big]
            )
        out[start:stop, :] = res.reshape(stop - start, replicates)
    return out
