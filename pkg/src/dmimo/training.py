"""Binary training sequences and the stacked convolution (design) matrix."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def as_bits(seq) -> np.ndarray:
    """Coerce a bit-string like ``"1101"`` or an iterable of 0/1 to an int8 array."""
    if isinstance(seq, str):
        if not seq or set(seq) - {"0", "1"}:
            raise ValueError(f"not a bit-string: {seq!r}")
        return np.frombuffer(seq.encode(), dtype=np.uint8).astype(np.int8) - ord("0")
    bits = np.asarray(seq)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError("a training sequence is a non-empty 1-d array of bits")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError(f"training sequence entries must be 0 or 1: {bits}")
    return bits.astype(np.int8)


def to_bitstring(seq) -> str:
    return "".join(str(int(b)) for b in as_bits(seq))


@dataclass(frozen=True)
class SequenceConstraints:
    """Feasibility limits on a training sequence.

    ``max_ones=None`` means ``floor(K/2)`` for whatever length is validated.
    """

    max_ones: int | None = None
    max_zero_run: int = 4

    def __post_init__(self):
        if self.max_zero_run < 1:
            raise ValueError("max_zero_run must be >= 1")
        if self.max_ones is not None and self.max_ones < 0:
            raise ValueError("max_ones must be >= 0")

    def ones_budget(self, K: int) -> int:
        budget = K // 2 if self.max_ones is None else self.max_ones
        if budget > K:
            raise ValueError(f"max_ones={budget} exceeds sequence length {K}")
        return budget


def longest_zero_run(seq) -> int:
    bits = as_bits(seq)
    # Pad with ones so every zero run is bracketed.
    edges = np.flatnonzero(np.diff(np.concatenate(([1], bits, [1]))) != 0)
    if edges.size == 0:
        return 0
    return int((edges[1::2] - edges[::2]).max())


def validate_sequence(seq, constraints: SequenceConstraints = SequenceConstraints()) -> bool:
    bits = as_bits(seq)
    return (
        int(bits.sum()) <= constraints.ones_budget(bits.size)
        and longest_zero_run(bits) <= constraints.max_zero_run
    )


def concatenate(seq, times: int) -> np.ndarray:
    if int(times) != times or times < 1:
        raise ValueError(f"times must be a positive integer, got {times}")
    return np.tile(as_bits(seq), int(times))


def build_design_matrix(seqs: Sequence, L: int) -> np.ndarray:
    """Stack M equal-length sequences into the ``(M*L + 1, K - L + 1)`` matrix.

    Column for symbol ``k`` (1-based, ``L <= k <= K``) is
    ``[x(k), x(k-1), ..., x(k-L+1), 1]`` where ``x(k)`` holds all M
    transmitters' bits at time ``k``.
    """
    bits = np.array([as_bits(s) for s in seqs]) if len(seqs) else None
    if bits is None or bits.ndim != 2:
        raise ValueError("need at least one sequence, all of equal length")
    M, K = bits.shape
    if L < 1 or K < L:
        raise ValueError(f"need 1 <= L <= K, got L={L}, K={K}")
    n = K - L + 1
    X = np.ones((M * L + 1, n))
    for ell in range(L):
        # x(k - ell) for k = L..K  ->  0-based columns L-1-ell .. K-1-ell
        X[ell * M:(ell + 1) * M] = bits[:, L - 1 - ell:K - ell]
    return X


def unstack(X: np.ndarray, M: int, L: int) -> np.ndarray:
    """Recover the ``(M, K)`` bit array from a design matrix."""
    n = X.shape[1]
    K = n + L - 1
    bits = np.empty((M, K), dtype=np.int8)
    bits[:, L - 1:] = X[:M]
    for ell in range(1, L):
        bits[:, L - 1 - ell] = X[ell * M:(ell + 1) * M, 0]
    return bits
