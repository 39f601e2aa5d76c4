"""Per-receiver CIR estimators (Poisson ML, least squares) and the CRB.

Shapes: ``X`` is the ``(P, n)`` design matrix with ``P = M*L + 1`` and
``n = K - L + 1``; a receiver's counts ``y`` have length ``n`` and its CIR
column ``c`` has length ``P``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

COND_LIMIT = 1e12
DENOM_FLOOR = 1e-12


class SingularDesignError(ValueError):
    """The training design does not identify every CIR entry."""


@dataclass
class Estimate:
    cir_column: np.ndarray
    iterations: int
    converged: bool
    final_gradient_norm: float


def _check(X, c=None, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("design matrix must be 2-d")
    if c is not None and np.shape(c)[-1] != X.shape[0]:
        raise ValueError(f"CIR length {np.shape(c)[-1]} != design rows {X.shape[0]}")
    if y is not None and np.shape(y)[-1] != X.shape[1]:
        raise ValueError(f"{np.shape(y)[-1]} counts for {X.shape[1]} design columns")
    return X


def log_likelihood(y, X, c) -> float:
    """Poisson log-likelihood without the ``-log(y!)`` constant.

    Returns ``-inf`` if a positive count has zero mean.
    """
    X = _check(X, c, y)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(c, dtype=float) @ X
    if np.any(mu < 0):
        raise ValueError("negative mean count; CIR entries must be >= 0")
    pos = y > 0
    if np.any(mu[pos] == 0):
        return -np.inf
    # fsum keeps round-off well below per-iteration likelihood gains
    return math.fsum(np.concatenate([-mu, y[pos] * np.log(mu[pos])]))


def log_likelihood_change(y, X, c_old, c_new) -> float:
    """``log_likelihood(c_new) - log_likelihood(c_old)`` without cancellation.

    Differencing two totals of order 1e4 loses everything below ~1e-12; here
    each sample's change is formed first.
    """
    X = _check(X, c_old, y)
    y = np.asarray(y, dtype=float)
    mu0 = np.asarray(c_old, dtype=float) @ X
    mu1 = np.asarray(c_new, dtype=float) @ X
    dmu = (np.asarray(c_new, dtype=float) - np.asarray(c_old, dtype=float)) @ X
    pos = y > 0
    if np.any(mu0[pos] <= 0) or np.any(mu1[pos] <= 0):
        raise ValueError("log-likelihood change needs positive means where y > 0")
    return math.fsum(np.concatenate([-dmu, y[pos] * np.log1p(dmu[pos] / mu0[pos])]))


def score(y, X, c) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``c``."""
    X = _check(X, c, y)
    mu = np.asarray(c, dtype=float) @ X
    return X @ (np.asarray(y, dtype=float) / mu - 1.0)


def fisher_matrix(X, c) -> np.ndarray:
    X = _check(X, c)
    mu = np.asarray(c, dtype=float) @ X
    if np.any(mu <= 0):
        raise ValueError("Fisher information needs strictly positive mean counts")
    F = (X / mu) @ X.T
    # exact symmetry regardless of BLAS summation order
    return 0.5 * (F + F.T)


def _inv_trace(F, what="design"):
    if np.linalg.cond(F) > COND_LIMIT:
        raise SingularDesignError(f"{what} is non-identifying (Fisher matrix singular)")
    return float(np.trace(np.linalg.inv(F)))


def crb(X, c) -> float:
    """Trace of the inverse Fisher matrix: bound on total MSE of ``c``."""
    return _inv_trace(fisher_matrix(X, c))


def crb_batch(X, C) -> np.ndarray:
    """CRBs for many CIR columns at once; ``C`` is ``(B, P)``."""
    X = _check(X, C)
    mu = np.asarray(C, dtype=float) @ X
    if np.any(mu <= 0):
        raise ValueError("Fisher information needs strictly positive mean counts")
    F = np.einsum("pn,bn,qn->bpq", X, 1.0 / mu, X)
    if np.any(np.linalg.cond(F) > COND_LIMIT):
        raise SingularDesignError("design is non-identifying (Fisher matrix singular)")
    return np.trace(np.linalg.inv(F), axis1=1, axis2=2)


def _gram(X):
    G = X @ X.T
    if np.linalg.matrix_rank(X) < X.shape[0] or np.linalg.cond(G) > COND_LIMIT:
        raise SingularDesignError(
            f"design of shape {X.shape} is rank deficient; X X^T is not invertible"
        )
    return G


def ls_estimate(X, Y, clamp: bool = True) -> np.ndarray:
    """Normal-equation least squares for all receivers at once.

    ``Y`` is ``(n, M)`` (or ``(n,)`` for one receiver); returns ``(P, M)``
    (or ``(P,)``) with negative entries zeroed when ``clamp``.
    """
    X = _check(X)
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != X.shape[1]:
        raise ValueError(f"{Y.shape[0]} observation rows for {X.shape[1]} design columns")
    C = np.linalg.solve(_gram(X), X @ Y)
    return np.maximum(C, 0.0) if clamp else C


def ml_init(X, Y) -> np.ndarray:
    """Clamped LS, floored strictly inside the positive orthant."""
    C = ls_estimate(X, Y)
    floor = 1e-3 * np.maximum(C.max(axis=0), 1.0)
    return np.maximum(C, floor)


def projected_gradient_norm(y, X, c) -> float:
    """Max-norm of the first-order optimality residual on ``c >= 0``.

    Free entries contribute ``|score|``; entries pinned at the boundary only
    count if the score points back into the orthant.
    """
    g = score(y, X, c)
    c = np.asarray(c)
    scale = max(float(np.max(c)), 1.0)
    active = c > 1e-9 * scale
    resid = np.where(active, np.abs(g), np.maximum(g, 0.0))
    return float(resid.max())


def ml_estimate_batch(Y, X, init=None, tol=1e-8, max_iter=20000, callback=None):
    """EM iterations for many receivers sharing one design.

    ``Y`` is ``(B, n)``; returns ``(C, iterations, converged)`` with ``C``
    of shape ``(B, P)``. Each row stops on its own once the max-norm
    parameter change relative to the largest entry drops below ``tol``, or
    the score on its free entries drops below ``tol``.
    ``callback(it, C)`` is invoked after every update, for diagnostics.
    """
    X = _check(X)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != X.shape[1]:
        raise ValueError(f"{Y.shape[1]} counts for {X.shape[1]} design columns")
    if not tol > 0:
        raise ValueError("tol must be positive")
    weight = X.sum(axis=1)
    if np.any(weight == 0):
        raise SingularDesignError("a design row is identically zero")
    if init is None:
        C = ml_init(X, Y.T).T.copy()
    else:
        C = np.array(np.broadcast_to(init, (Y.shape[0], X.shape[0])), dtype=float)
        if np.any(C <= 0):
            raise ValueError("ML initial point must be strictly positive")

    B = Y.shape[0]
    iterations = np.zeros(B, dtype=int)
    converged = np.zeros(B, dtype=bool)
    live = np.arange(B)
    for it in range(1, max_iter + 1):
        c = C[live]
        mu = np.maximum(c @ X, DENOM_FLOOR)
        ratio = Y[live] / mu
        new = c * (ratio @ X.T) / weight
        C[live] = new
        iterations[live] = it
        if callback is not None:
            callback(it, C)

        step = np.abs(new - c).max(axis=1) / np.maximum(new.max(axis=1), DENOM_FLOOR)
        mu_new = np.maximum(new @ X, DENOM_FLOOR)
        g = (Y[live] / mu_new - 1.0) @ X.T
        free = new > 1e-9 * np.maximum(new.max(axis=1, keepdims=True), 1.0)
        resid = np.where(free, np.abs(g), np.maximum(g, 0.0)).max(axis=1)
        done = (step < tol) | (resid < tol)
        converged[live[done]] = True
        live = live[~done]
        if live.size == 0:
            break
    return C, iterations, converged


def ml_estimate(y, X, init=None, tol=1e-8, max_iter=20000, callback=None) -> Estimate:
    """Nonnegative Poisson ML estimate of one receiver's CIR column."""
    X = _check(X, y=y)
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (X.shape[0],) or np.any(init <= 0):
            raise ValueError("ML initial point must be a strictly positive CIR vector")
    y = np.asarray(y, dtype=float)
    C, its, conv = ml_estimate_batch(y[None], X, init, tol, max_iter, callback)
    c = C[0]
    return Estimate(c, int(its[0]), bool(conv[0]), projected_gradient_norm(y, X, c))
