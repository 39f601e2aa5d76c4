"""Exit criteria for the package, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline;
they are also repeated in the end-of-session summary.
"""
import time

import numpy as np
import pytest

from dmimo.channel import rng_stream
from dmimo.cir import DiffusionParams, NoiseModel, build_cir, paired_grid
from dmimo.cli import main
from dmimo.config import paper2x2
from dmimo.design import (
    DesignProblem,
    crb_table,
    design,
    exhaustive,
    random_feasible_designs,
)
from dmimo.estimators import (
    crb,
    fisher_matrix,
    log_likelihood,
    log_likelihood_change,
    ls_estimate,
    ml_estimate,
    ml_init,
    score,
)
from dmimo.harness import run_montecarlo, training_for
from dmimo.training import (
    SequenceConstraints,
    build_design_matrix,
    concatenate,
    validate_sequence,
)

from conftest import PAPER_C1, PAPER_X1, PAPER_X2, record

SWAP = [1, 0, 3, 2, 5, 4, 6]


@pytest.fixture(scope="module")
def sweep():
    """Full 1000-trial jittered sweep, K = 16..112, published sequences."""
    cfg = paper2x2()
    assert cfg.trials == 1000 and cfg.K_list == [16, 32, 48, 64, 80, 96, 112]
    assert cfg.sigma_jitter == pytest.approx(50e-9)
    return cfg, run_montecarlo(cfg)


@pytest.fixture(scope="module")
def designed_pair():
    cfg = paper2x2()
    nominal = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
    return nominal, design(DesignProblem(nominal, 16, 3, seed=0)).sequences


def random_full_rank(rng, M, L, K):
    while True:
        X = build_design_matrix(rng.integers(0, 2, size=(M, K)), L)
        if np.linalg.matrix_rank(X) == X.shape[0]:
            return X


def test_criterion_1_cir_golden():
    t0 = time.perf_counter()
    C = build_cir(
        paired_grid(400e-9, 200e-9, 2, 50e-9),
        DiffusionParams(D=1e-9, N=1e5, T_int=0.2e-3, L=3),
        NoiseModel("relative", 0.3),
    )
    elapsed = time.perf_counter() - t0
    err1 = np.abs(C[:, 0] / PAPER_C1 - 1).max()
    err2 = np.abs(C[:, 1] / PAPER_C1[SWAP] - 1).max()
    ok = record(1, max(err1, err2) <= 5e-3 and elapsed < 1,
                f"max rel err Rx1 {err1:.4f}, Rx2 {err2:.4f} (tol 0.005), {elapsed:.3f}s")
    assert ok


def test_criterion_2_sequence_feasibility():
    t0 = time.perf_counter()
    checks = [validate_sequence(s) for s in (PAPER_X1, PAPER_X2)]
    checks += [validate_sequence(concatenate(s, 2)) for s in (PAPER_X1, PAPER_X2)]
    elapsed = time.perf_counter() - t0
    ok = record(2, all(checks) and elapsed < 1, f"K=16 and K=32 checks {checks}, {elapsed:.3f}s")
    assert ok


def test_criterion_3_noiseless_ls():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        M, L = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        K = int(rng.integers(M * L + L, 41))
        X = random_full_rank(rng, M, L, K)
        C = rng.uniform(0.5, 60, (X.shape[0], M))
        est = ls_estimate(X, X.T @ C, clamp=False)
        worst = max(worst, np.abs(est / C - 1).max())
    elapsed = time.perf_counter() - t0
    ok = record(3, worst <= 1e-9 and elapsed < 5,
                f"worst rel err {worst:.2e} over 100 designs (tol 1e-9), {elapsed:.2f}s")
    assert ok


def test_criterion_4_score_and_fisher():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    X = random_full_rank(rng, 2, 3, 40)
    y = rng.poisson(rng.uniform(5, 60, X.shape[0]) @ X)
    grad_err = fish_err = 0.0
    min_eig = np.inf
    asym = 0.0
    for _ in range(10):
        c = rng.uniform(1, 60, X.shape[0])
        h = 1e-4 * c
        fd = np.array([
            (log_likelihood(y, X, c + h[p] * e) - log_likelihood(y, X, c - h[p] * e)) / (2 * h[p])
            for p, e in enumerate(np.eye(c.size))
        ])
        g = score(y, X, c)
        grad_err = max(grad_err, np.abs(g - fd).max() / np.abs(fd).max())

        mean_y = c @ X
        h = 1e-5 * c
        H = np.column_stack([
            (score(mean_y, X, c + h[p] * e) - score(mean_y, X, c - h[p] * e)) / (2 * h[p])
            for p, e in enumerate(np.eye(c.size))
        ])
        F = fisher_matrix(X, c)
        fish_err = max(fish_err, np.abs(F + H).max() / np.abs(F).max())
        asym = max(asym, np.abs(F - F.T).max())
        min_eig = min(min_eig, np.linalg.eigvalsh(F).min())
    elapsed = time.perf_counter() - t0
    ok = record(4, grad_err <= 1e-6 and fish_err <= 1e-6 and asym == 0 and min_eig >= -1e-10
                and elapsed < 10,
                f"score rel err {grad_err:.1e}, Fisher rel err {fish_err:.1e}, "
                f"min eig {min_eig:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_5_em_monotone():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        M, L = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        K = int(rng.integers(M * L + L + 4, 41))
        X = random_full_rank(rng, M, L, K)
        y = rng.poisson(rng.uniform(0.5, 60, X.shape[0]) @ X)
        prev = [ml_init(X, y)]
        steps = []

        def track(it, C):
            steps.append(log_likelihood_change(y, X, prev[0], C[0]))
            prev[0] = C[0].copy()

        ml_estimate(y, X, init=prev[0].copy(), callback=track)
        worst = min(worst, min(steps))
    elapsed = time.perf_counter() - t0
    ok = record(5, worst >= -1e-12 and elapsed < 30,
                f"largest per-step decrease {-worst:.1e} (tol 1e-12), {elapsed:.2f}s")
    assert ok


def test_criterion_6_ml_tracks_crb(sweep):
    _, curve = sweep
    gaps = np.array([[curve.get(K, j, "ML").mse_db - curve.get(K, j, "ML").crb_db
                      for K in curve.Ks] for j in curve.receivers])
    ok = record("6a", np.all(np.abs(gaps) <= 1.0),
                f"ML mse_db - crb_db in [{gaps.min():+.3f}, {gaps.max():+.3f}] dB (tol 1.0)")
    assert ok


def test_criterion_6_bound_respected(sweep):
    _, curve = sweep
    worst = min(p.mse_db - p.crb_db for p in curve.points)
    offenders = [f"K={p.K} Rx{p.receiver} {p.estimator} {p.mse_db - p.crb_db:+.3f}"
                 for p in curve.sorted() if p.mse_db < p.crb_db - 0.3]
    ok = record("6b", worst >= -0.3,
                f"min mse_db - crb_db {worst:+.3f} dB (tol -0.3); below: {offenders or 'none'}")
    assert ok


def test_criterion_7_ls_ml_gap(sweep):
    _, curve = sweep
    gaps = [curve.get(K, j, "LS").nmse_db - curve.get(K, j, "ML").nmse_db
            for K in curve.Ks for j in curve.receivers]
    per_rx = {j: np.mean([curve.get(K, j, "LS").nmse_db - curve.get(K, j, "ML").nmse_db
                          for K in curve.Ks]) for j in curve.receivers}
    ok = record(7, all(0.2 <= g <= 2.0 for g in per_rx.values()),
                f"mean LS-ML NMSE gap per receiver "
                + ", ".join(f"Rx{j} {g:.3f}" for j, g in per_rx.items())
                + f" dB (range [0.2, 2.0]); overall {np.mean(gaps):.3f}")
    assert ok


def test_criterion_8_nmse_offset(sweep):
    _, curve = sweep
    offsets = [p.nmse_db - p.mse_db for p in curve.points]
    paper = -10 * np.log10(PAPER_C1 @ PAPER_C1)
    ok = record(8, all(abs(o - paper) <= 0.3 for o in offsets),
                f"offsets in [{min(offsets):.3f}, {max(offsets):.3f}] dB vs "
                f"{paper:.3f} +- 0.3")
    assert ok


def test_criterion_9_crb_monotone(designed_pair):
    nominal, seqs = designed_pair
    t0 = time.perf_counter()
    ok = True
    lines = []
    for j in range(2):
        prev_F, prev = None, None
        for K in (16, 32, 64, 128):
            X = build_design_matrix(training_for(seqs, K), 3)
            F = fisher_matrix(X, nominal[:, j])
            value = crb(X, nominal[:, j])
            if prev is not None:
                psd = np.linalg.eigvalsh(F - prev_F).min() >= -1e-10 * np.abs(F).max()
                ok &= value <= prev and 10 * np.log10(value) < 10 * np.log10(prev) and psd
            prev_F, prev = F, value
            lines.append(f"{10 * np.log10(value):.2f}")
    elapsed = time.perf_counter() - t0
    ok = record(9, ok and elapsed < 5, f"crb_db at K=16,32,64,128 per Rx: {lines}, {elapsed:.2f}s")
    assert ok


def test_criterion_10_design_optimality(designed_pair):
    t0 = time.perf_counter()
    nominal2 = build_cir(paired_grid(400e-9, 200e-9), DiffusionParams(L=2), NoiseModel())
    c = SequenceConstraints()
    result = exhaustive(DesignProblem(nominal2, 8, 2, c, cyclic=False))
    pool = [s for s in (np.array(list(format(v, "08b")), dtype=int) for v in range(256))
            if validate_sequence(s, c)]
    best = np.inf
    for a in pool:
        for b in pool:
            X = build_design_matrix([a, b], 2)
            try:
                best = min(best, max(crb(X, nominal2[:, j]) for j in range(2)))
            except ValueError:
                continue
    small_ok = result.scalar_objective == pytest.approx(best, rel=1e-12)

    nominal, seqs = designed_pair
    objective = crb_table(seqs[None], nominal, 3)[0].max()
    draws = random_feasible_designs(16, 2, 10**5, c, rng_stream(10))
    quantile = np.quantile(crb_table(draws, nominal, 3).max(axis=1), 1e-3)
    elapsed = time.perf_counter() - t0
    ok = record(10, small_ok and objective <= quantile and elapsed < 600,
                f"K1=8 exhaustive {result.scalar_objective:.6f} vs brute force {best:.6f}; "
                f"K1=16 designed {objective:.3f} vs 1e-3 quantile {quantile:.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_11_deterministic_cli(tmp_path, capsys):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        assert main(["montecarlo", "--config", "paper2x2", "--trials", "1000",
                     "--seed", "7", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    ok = record(11, outs[0] == outs[1] and len(outs[0]) > 0,
                f"two runs, seed 7: {len(outs[0])} bytes, identical={outs[0] == outs[1]}")
    assert ok
