"""Search for training sequences minimizing the receivers' CRBs.

The CRB of every receiver depends on all transmitters' sequences, so the
search runs over M-tuples of feasible sequences. Tuples are ranked by the
worst receiver's CRB, then the sum over receivers, then lexicographically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .channel import rng_stream
from .estimators import COND_LIMIT, SingularDesignError
from .training import SequenceConstraints, as_bits, build_design_matrix

MAX_ENUM_K = 24
MAX_EXHAUSTIVE = 10**8


@dataclass(frozen=True)
class DesignProblem:
    nominal: np.ndarray
    K1: int
    L: int
    constraints: SequenceConstraints = SequenceConstraints()
    strategy: Literal["auto", "exhaustive", "local-search"] = "auto"
    seed: int = 0
    restarts: int = 50
    # Keep zero runs legal across the seam when the design is repeated.
    cyclic: bool = True

    @property
    def M(self) -> int:
        return self.nominal.shape[1]

    def __post_init__(self):
        if self.K1 < self.L:
            raise ValueError(f"K1={self.K1} shorter than the tap count L={self.L}")
        if self.nominal.shape[0] != self.M * self.L + 1:
            raise ValueError(
                f"nominal CIR has {self.nominal.shape[0]} rows, expected M*L+1"
            )
        unknowns = self.nominal.shape[0]
        if self.K1 - self.L + 1 < unknowns:
            raise SingularDesignError(
                f"K1={self.K1} gives {self.K1 - self.L + 1} usable samples for "
                f"{unknowns} unknowns; need K1 >= {unknowns + self.L - 1}"
            )


@dataclass
class DesignResult:
    sequences: np.ndarray  # (M, K1) bits
    crbs: np.ndarray
    scalar_objective: float
    evaluations: int
    strategy: str = ""
    history: list = field(default_factory=list, repr=False)


def _zero_run_ok(bits: np.ndarray, max_run: int) -> np.ndarray:
    """Row-wise check that no run of zeros is longer than ``max_run``."""
    run = np.zeros(bits.shape[0], dtype=np.int32)
    worst = np.zeros_like(run)
    for col in bits.T:
        run = np.where(col == 0, run + 1, 0)
        np.maximum(worst, run, out=worst)
    return worst <= max_run


def feasible_mask(
    bits: np.ndarray, constraints: SequenceConstraints, cyclic: bool = False
) -> np.ndarray:
    """Row-wise feasibility. ``cyclic`` also counts zero runs across the wrap,
    so every repetition of a passing row passes too."""
    bits = np.atleast_2d(bits)
    ones_ok = bits.sum(axis=1) <= constraints.ones_budget(bits.shape[1])
    runs = np.concatenate([bits, bits], axis=1) if cyclic else bits
    return ones_ok & _zero_run_ok(runs, constraints.max_zero_run)


def enumerate_feasible(
    K1: int, constraints: SequenceConstraints = SequenceConstraints(), cyclic: bool = False
):
    """All feasible length-``K1`` sequences as an ``(n, K1)`` array, lexicographic."""
    if K1 < 1:
        raise ValueError("K1 must be >= 1")
    if K1 > MAX_ENUM_K:
        raise ValueError(
            f"K1={K1} is too long to enumerate (limit {MAX_ENUM_K}); use local-search"
        )
    chunks = []
    step = 1 << 20
    shifts = np.arange(K1 - 1, -1, -1, dtype=np.int64)
    for start in range(0, 1 << K1, step):
        codes = np.arange(start, min(start + step, 1 << K1), dtype=np.int64)
        bits = ((codes[:, None] >> shifts) & 1).astype(np.int8)
        chunks.append(bits[feasible_mask(bits, constraints, cyclic)])
    return np.concatenate(chunks)


def design_matrices(seqs: np.ndarray, L: int) -> np.ndarray:
    """Batched design matrices: ``seqs`` is ``(B, M, K)``, result ``(B, M*L+1, K-L+1)``."""
    B, M, K = seqs.shape
    n = K - L + 1
    X = np.ones((B, M * L + 1, n))
    for ell in range(L):
        X[:, ell * M:(ell + 1) * M] = seqs[:, :, L - 1 - ell:K - ell]
    return X


def crb_table(seqs: np.ndarray, nominal: np.ndarray, L: int) -> np.ndarray:
    """``(B, M)`` CRBs for a batch of sequence tuples; ``inf`` where singular."""
    X = design_matrices(np.asarray(seqs, dtype=float), L)
    mu = np.einsum("bpn,pm->bmn", X, nominal)
    if np.any(mu <= 0):
        raise ValueError("nominal CIR gives a zero mean count")
    F = np.einsum("bpn,bmn,bqn->bmpq", X, 1.0 / mu, X)
    cond = np.linalg.cond(F)
    bad = ~(cond <= COND_LIMIT)
    F[bad] = np.eye(F.shape[-1])
    out = np.trace(np.linalg.inv(F), axis1=-2, axis2=-1)
    out[bad] = np.inf
    return out


def evaluate_design(sequences, nominal, L: int) -> np.ndarray:
    """Per-receiver CRB of one sequence tuple at the nominal CIR."""
    seqs = np.array([as_bits(s) for s in sequences])
    if seqs.shape[0] != nominal.shape[1]:
        raise ValueError(f"{seqs.shape[0]} sequences for {nominal.shape[1]} transmitters")
    crbs = crb_table(seqs[None], nominal, L)[0]
    if not np.all(np.isfinite(crbs)):
        raise SingularDesignError(
            "design " + ",".join("".join(map(str, s)) for s in seqs) + " is non-identifying"
        )
    return crbs


def _rank(crbs: np.ndarray):
    return crbs.max(axis=-1), crbs.sum(axis=-1)


def _better(a, b):
    """Strict order on (max, sum, bits) keys."""
    if a[0] != b[0]:
        return a[0] < b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def _key(crbs, seqs):
    return (float(crbs.max()), float(crbs.sum()), tuple(np.asarray(seqs).ravel().tolist()))


def _swap_symmetric(nominal: np.ndarray, M: int, L: int) -> bool:
    """True if relabelling the two links leaves the nominal CIR unchanged."""
    if M != 2:
        return False
    perm = np.concatenate([np.arange(L)[:, None] * 2 + [1, 0]]).ravel().tolist() + [2 * L]
    return np.allclose(nominal[perm][:, ::-1], nominal, rtol=1e-12, atol=0)


def exhaustive(problem: DesignProblem, chunk: int = 20000) -> DesignResult:
    pool = enumerate_feasible(problem.K1, problem.constraints, problem.cyclic)
    n, M = len(pool), problem.M
    pruned = _swap_symmetric(problem.nominal, M, problem.L)
    total = n * (n + 1) // 2 if pruned else n**M
    if total > MAX_EXHAUSTIVE:
        raise ValueError(
            f"{total} candidate designs exceed the exhaustive limit; use local-search"
        )
    if pruned:
        idx = np.column_stack(np.triu_indices(n))
    else:
        idx = np.stack(np.meshgrid(*[np.arange(n)] * M, indexing="ij"), -1).reshape(-1, M)
    # idx is in lexicographic order of the index tuples, hence of the bit tuples.
    best = None
    for start in range(0, len(idx), chunk):
        part = idx[start:start + chunk]
        crbs = crb_table(pool[part], problem.nominal, problem.L)
        mx, sm = _rank(crbs)
        order = np.lexsort((np.arange(len(part)), sm, mx))
        i = order[0]
        if not np.isfinite(mx[i]):
            continue
        cand = _key(crbs[i], pool[part[i]])
        if best is None or _better(cand, best[0]):
            best = (cand, pool[part[i]], crbs[i])
    if best is None:
        raise SingularDesignError("no feasible design identifies the channel")
    return DesignResult(best[1].copy(), best[2], best[0][0], len(idx), "exhaustive")


def _neighbours(seqs: np.ndarray) -> np.ndarray:
    """Single-bit flips and within-sequence swaps of unequal bits."""
    M, K = seqs.shape
    out = []
    for m in range(M):
        flips = np.repeat(seqs[None], K, axis=0)
        flips[np.arange(K), m, np.arange(K)] ^= 1
        out.append(flips)
        ones = np.flatnonzero(seqs[m] == 1)
        zeros = np.flatnonzero(seqs[m] == 0)
        if ones.size and zeros.size:
            a, b = np.meshgrid(ones, zeros, indexing="ij")
            a, b = a.ravel(), b.ravel()
            sw = np.repeat(seqs[None], a.size, axis=0)
            r = np.arange(a.size)
            sw[r, m, a] = 0
            sw[r, m, b] = 1
            out.append(sw)
    return np.concatenate(out)


def _random_start(rng, K1, M, constraints, L, nominal, cyclic, tries=10000):
    for _ in range(tries):
        seqs = rng.integers(0, 2, size=(M, K1), dtype=np.int8)
        if feasible_mask(seqs, constraints, cyclic).all():
            crbs = crb_table(seqs[None], nominal, L)[0]
            if np.all(np.isfinite(crbs)):
                return seqs, crbs
    raise SingularDesignError("could not draw an identifying feasible starting design")


def local_search(problem: DesignProblem, start=None) -> DesignResult:
    """Best-improvement descent from seeded random starts.

    Restart ``r`` draws from its own stream, so results do not depend on how
    restarts are scheduled. ``start`` replaces the first restart's random draw.
    """
    M, K1, L = problem.M, problem.K1, problem.L
    best = None
    evaluations = 0
    history = []
    for r in range(problem.restarts):
        rng = rng_stream(problem.seed, r)
        if r == 0 and start is not None:
            seqs = np.array([as_bits(s) for s in start])
            crbs = crb_table(seqs[None], problem.nominal, L)[0]
        else:
            seqs, crbs = _random_start(
                rng, K1, M, problem.constraints, L, problem.nominal, problem.cyclic
            )
        evaluations += 1
        cur = _key(crbs, seqs)
        while True:
            nb = _neighbours(seqs)
            ok = feasible_mask(nb.reshape(-1, K1), problem.constraints, problem.cyclic)
            nb = nb[ok.reshape(-1, M).all(axis=1)]
            if nb.size == 0:
                break
            table = crb_table(nb, problem.nominal, L)
            evaluations += len(nb)
            mx, sm = _rank(table)
            i = np.lexsort((sm, mx))[0]
            cand = _key(table[i], nb[i])
            if not _better(cand, cur):
                break
            seqs, crbs, cur = nb[i], table[i], cand
        history.append(cur[0])
        if best is None or _better(cur, best[0]):
            best = (cur, seqs.copy(), crbs.copy())
    return DesignResult(best[1], best[2], best[0][0], evaluations, "local-search", history)


def design(problem: DesignProblem) -> DesignResult:
    strategy = problem.strategy
    if strategy == "auto":
        try:
            return exhaustive(problem)
        except ValueError as err:
            if isinstance(err, SingularDesignError):
                raise
            return local_search(problem)
    if strategy == "exhaustive":
        return exhaustive(problem)
    if strategy == "local-search":
        return local_search(problem)
    raise ValueError(f"unknown strategy {strategy!r}")


def random_feasible_designs(K1, M, count, constraints, rng) -> np.ndarray:
    """Uniform draws from the feasible M-tuples, ``(count, M, K1)``."""
    pool = enumerate_feasible(K1, constraints)
    return pool[rng.integers(0, len(pool), size=(count, M))]
