"""Monte Carlo MSE-vs-K experiment and its CSV output."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import rng_stream, sample_observations
from .cir import build_cir, jitter, sampling_times
from .config import ExperimentConfig
from .design import DesignProblem, design
from .estimators import crb_batch, ls_estimate, ml_estimate_batch
from .training import build_design_matrix, concatenate, validate_sequence

log = logging.getLogger(__name__)

ESTIMATORS = ("LS", "ML")
CSV_HEADER = ["K", "receiver", "estimator", "mse_db", "nmse_db", "crb_db", "trials", "failures"]
MAX_FAILURE_RATE = 0.01


class ExperimentAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    K: int
    receiver: int  # 1-based
    estimator: str
    mse_db: float
    nmse_db: float
    crb_db: float
    trials: int
    failures: int = 0


@dataclass
class MseCurve:
    points: list = field(default_factory=list)
    sequences: np.ndarray | None = None

    def sorted(self) -> list:
        return sorted(self.points, key=lambda p: (p.K, p.receiver, p.estimator))

    def get(self, K, receiver, estimator) -> CurvePoint:
        for p in self.points:
            if (p.K, p.receiver, p.estimator) == (K, receiver, estimator):
                return p
        raise KeyError((K, receiver, estimator))

    @property
    def Ks(self) -> list:
        return sorted({p.K for p in self.points})

    @property
    def receivers(self) -> list:
        return sorted({p.receiver for p in self.points})

    def series(self, receiver, estimator, attr="mse_db") -> np.ndarray:
        return np.array([getattr(self.get(K, receiver, estimator), attr) for K in self.Ks])


def to_db(x):
    return 10.0 * np.log10(x)


def mse_db(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("mse_db of an empty error list")
    return float(to_db(errors.mean()))


def nmse_db(errors, true_cirs) -> float:
    """MSE normalised by the squared norm of the trial-averaged true CIR."""
    true_cirs = np.atleast_2d(np.asarray(true_cirs, dtype=float))
    denom = float(np.sum(true_cirs.mean(axis=0) ** 2))
    if denom <= 0:
        raise ValueError("NMSE denominator is zero: mean true CIR vanishes")
    return mse_db(errors) - float(to_db(denom))


def base_sequences(config: ExperimentConfig) -> np.ndarray:
    """Configured base sequences, or a fresh design at the nominal channel."""
    if config.base_sequences is not None:
        return config.base_sequences
    nominal = build_cir(config.topology, config.diffusion, config.noise)
    d = config.design
    problem = DesignProblem(
        nominal, config.K1, config.diffusion.L, d.constraints, d.strategy, d.seed, d.restarts
    )
    result = design(problem)
    log.info("designed sequences with objective %.6g", result.scalar_objective)
    return result.sequences


def training_for(seqs: np.ndarray, K: int) -> list:
    reps = K // seqs.shape[1]
    return [concatenate(s, reps) for s in seqs]


def run_montecarlo(config: ExperimentConfig, sequences=None) -> MseCurve:
    """Jittered-channel Monte Carlo of ML and LS estimation error vs K.

    Trial ``t`` owns the random stream ``(seed, t)``: it first jitters the
    geometry, then draws observations for each K in ascending order.
    """
    M, L = config.M, config.diffusion.L
    seqs = base_sequences(config) if sequences is None else np.asarray(sequences)
    constraints = config.design.constraints
    for K in config.K_list:
        for s in training_for(seqs, K):
            if not validate_sequence(s, constraints):
                log.warning("training sequence violates constraints at K=%d", K)

    designs = {K: build_design_matrix(training_for(seqs, K), L) for K in config.K_list}
    times = sampling_times(config.topology, config.diffusion)

    T = config.trials
    P = M * L + 1
    cirs = np.full((T, P, M), np.nan)
    obs = {K: np.zeros((T, X.shape[1], M), dtype=np.int64) for K, X in designs.items()}
    ok = np.ones(T, dtype=bool)
    for t in range(T):
        rng = rng_stream(config.seed, t)
        try:
            topo = jitter(config.topology, config.sigma_jitter, rng)
            cirs[t] = build_cir(topo, config.diffusion, config.noise, sample_times=times)
        except ValueError as err:
            log.warning("trial %d: degenerate geometry (%s)", t, err)
            ok[t] = False
            continue
        for K in config.K_list:
            obs[K][t] = sample_observations(designs[K].T @ cirs[t], rng)

    curve = MseCurve(sequences=seqs)
    for K in config.K_list:
        X = designs[K]
        valid = ok.copy()
        idx = np.flatnonzero(valid)
        truth = cirs[idx].transpose(0, 2, 1).reshape(-1, P)  # row = (trial, receiver)
        Y = obs[K][idx].transpose(0, 2, 1).reshape(-1, X.shape[1])

        C_ls = ls_estimate(X, Y.T).T
        C_ml, _, conv = ml_estimate_batch(Y, X)
        crbs = crb_batch(X, truth)
        good = (
            conv.reshape(-1, M).all(axis=1)
            & np.isfinite(C_ml).reshape(-1, M * P).all(axis=1)
            & np.isfinite(crbs).reshape(-1, M).all(axis=1)
        )
        valid[idx[~good]] = False
        failures = int(T - valid.sum())
        if failures > MAX_FAILURE_RATE * T:
            raise ExperimentAborted(
                f"{failures} of {T} trials failed at K={K}; more than "
                f"{MAX_FAILURE_RATE:.0%} allowed"
            )

        keep = np.repeat(good, M)
        shape = (-1, M)
        true_j = cirs[valid]  # (T', P, M)
        crb_j = crbs[keep].reshape(shape)
        errors = {
            "LS": ((C_ls - truth)[keep] ** 2).sum(axis=1).reshape(shape),
            "ML": ((C_ml - truth)[keep] ** 2).sum(axis=1).reshape(shape),
        }
        for j in range(M):
            crb_db = float(to_db(crb_j[:, j].mean()))
            for name in ESTIMATORS:
                e = errors[name][:, j]
                curve.points.append(
                    CurvePoint(
                        K=K,
                        receiver=j + 1,
                        estimator=name,
                        mse_db=mse_db(e),
                        nmse_db=nmse_db(e, true_j[:, :, j]),
                        crb_db=crb_db,
                        trials=int(valid.sum()),
                        failures=failures,
                    )
                )
    return curve


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def curve_to_csv(curve: MseCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in curve.sorted():
        w.writerow([_fmt(getattr(p, name)) for name in CSV_HEADER])
    return buf.getvalue()


def emit_csv(curve: MseCurve, path) -> Path:
    path = Path(path)
    try:
        path.write_text(curve_to_csv(curve))
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror}") from err
    return path


def read_csv(path) -> MseCurve:
    curve = MseCurve()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            curve.points.append(
                CurvePoint(
                    K=int(row["K"]),
                    receiver=int(row["receiver"]),
                    estimator=row["estimator"],
                    mse_db=float(row["mse_db"]),
                    nmse_db=float(row["nmse_db"]),
                    crb_db=float(row["crb_db"]),
                    trials=int(row["trials"]),
                    failures=int(row["failures"]),
                )
            )
    return curve
