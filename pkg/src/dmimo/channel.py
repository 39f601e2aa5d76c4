"""Mean observations and seeded Poisson count generation."""
from __future__ import annotations

import numpy as np


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator keyed by ``(seed, stream)``.

    Streams are SeedSequence children, so trial ``i`` of a run draws the same
    numbers whether trials run serially, in parallel, or alone.
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))


def mean_observations(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``X.T @ C``: expected counts, one row per usable symbol, one column per receiver."""
    X = np.asarray(X, dtype=float)
    C = np.asarray(C, dtype=float)
    if X.ndim != 2 or C.shape[0] != X.shape[0]:
        raise ValueError(f"design rows {X.shape[0]} != CIR rows {C.shape[0]}")
    return X.T @ C


def sample_observations(means, rng: np.random.Generator) -> np.ndarray:
    means = np.asarray(means, dtype=float)
    if np.any(means < 0) or np.any(~np.isfinite(means)):
        raise ValueError("Poisson means must be finite and >= 0")
    return rng.poisson(means).astype(np.int64)


def convolve_means(bits: np.ndarray, C: np.ndarray, L: int) -> np.ndarray:
    """Direct double-sum form of the mean counts, for cross-checking.

    ``bits`` is ``(M, K)``; returns ``(K - L + 1, M)``.
    """
    M, K = bits.shape
    out = np.zeros((K - L + 1, M))
    for j in range(M):
        for row, k in enumerate(range(L - 1, K)):
            total = C[-1, j]
            for i in range(M):
                for ell in range(L):
                    total += C[ell * M + i, j] * bits[i, k - ell]
            out[row, j] = total
    return out
