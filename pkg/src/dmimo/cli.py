"""``dmimo`` command line entry point."""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .channel import rng_stream, sample_observations
from .cir import build_cir
from .config import load_config
from .design import DesignProblem, design, evaluate_design
from .estimators import SingularDesignError, ls_estimate, ml_estimate_batch
from .harness import base_sequences, emit_csv, curve_to_csv, run_montecarlo, training_for
from .training import SequenceConstraints, build_design_matrix, to_bitstring


def cir_rows(C: np.ndarray, M: int, L: int):
    """``(receiver, tap, source)`` labels for each CIR entry, in column order."""
    for j in range(M):
        for ell in range(L):
            for i in range(M):
                yield j, ell * M + i, (j + 1, ell, f"tx{i + 1}")
        yield j, M * L, (j + 1, "", "noise")


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def _sequences(args, cfg):
    if getattr(args, "seq", None):
        return np.array([[int(b) for b in s] for s in args.seq.split(",")], dtype=np.int8)
    return base_sequences(cfg)


def cmd_gen_cir(args, cfg, out):
    L = cfg.diffusion.L
    C = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
    w = _writer(out)
    w.writerow(["receiver", "tap", "source", "value"])
    for j, row, label in cir_rows(C, cfg.M, L):
        w.writerow([*label, f"{C[row, j]:.6g}"])


def cmd_design_seq(args, cfg, out):
    K1 = args.k1 if args.k1 is not None else cfg.K1
    nominal = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
    constraints = SequenceConstraints(cfg.design.max_ones, args.max_zero_run)
    problem = DesignProblem(
        nominal, K1, cfg.diffusion.L, constraints, args.strategy, args.seed, args.restarts
    )
    res = design(problem)
    w = _writer(out)
    w.writerow(["transmitter", "sequence", "crb"])
    for i, (s, c) in enumerate(zip(res.sequences, res.crbs)):
        w.writerow([i + 1, to_bitstring(s), f"{c:.6g}"])
    print(f"# strategy={res.strategy} objective={res.scalar_objective:.6g} "
          f"evaluations={res.evaluations}", file=sys.stderr)


def cmd_crb(args, cfg, out):
    seqs = _sequences(args, cfg)
    nominal = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
    crbs = evaluate_design(seqs, nominal, cfg.diffusion.L)
    w = _writer(out)
    w.writerow(["receiver", "crb", "crb_db"])
    for j, c in enumerate(crbs):
        w.writerow([j + 1, f"{c:.6g}", f"{10 * np.log10(c):.6g}"])


def read_observations(path, M, L):
    """Parse a ``k,receiver,count`` CSV into an ``(n, M)`` count matrix."""
    with open(path, newline="") as fh:
        rows = [(int(r["k"]), int(r["receiver"]), int(r["count"])) for r in csv.DictReader(fh)]
    if not rows:
        raise ValueError(f"{path}: no observations")
    K = max(k for k, _, _ in rows)
    Y = np.full((K - L + 1, M), -1, dtype=np.int64)
    for k, j, n in rows:
        if not (L <= k <= K and 1 <= j <= M) or n < 0:
            raise ValueError(f"{path}: bad observation row k={k} receiver={j} count={n}")
        Y[k - L, j - 1] = n
    if np.any(Y < 0):
        raise ValueError(f"{path}: observations must cover k={L}..{K} for every receiver")
    return K, Y


def write_observations(out, Y, L):
    w = _writer(out)
    w.writerow(["k", "receiver", "count"])
    for row, counts in enumerate(Y):
        for j, n in enumerate(counts):
            w.writerow([row + L, j + 1, int(n)])


def cmd_simulate(args, cfg, out):
    seqs = _sequences(args, cfg)
    K = args.k or seqs.shape[1]
    if K % seqs.shape[1]:
        raise ValueError(f"K={K} is not a multiple of the base length {seqs.shape[1]}")
    X = build_design_matrix(training_for(seqs, K), cfg.diffusion.L)
    C = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
    Y = sample_observations(X.T @ C, rng_stream(args.seed))
    write_observations(out, Y, cfg.diffusion.L)


def cmd_estimate(args, cfg, out):
    L, M = cfg.diffusion.L, cfg.M
    K, Y = read_observations(args.obs, M, L)
    seqs = _sequences(args, cfg)
    if K % seqs.shape[1]:
        raise ValueError(f"observations end at k={K}, not a multiple of {seqs.shape[1]}")
    X = build_design_matrix(training_for(seqs, K), L)
    C_ls = ls_estimate(X, Y)
    C_ml, _, conv = ml_estimate_batch(Y.T, X)
    C_ml = C_ml.T
    if not conv.all():
        logging.getLogger("dmimo").warning("ML did not converge for every receiver")
    nominal = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
    crbs = evaluate_design([np.tile(s, K // len(s)) for s in seqs], nominal, L)
    w = _writer(out)
    w.writerow(["receiver", "tap", "source", "ml", "ls"])
    for j, row, label in cir_rows(C_ml, M, L):
        w.writerow([*label, f"{C_ml[row, j]:.6g}", f"{C_ls[row, j]:.6g}"])
    out.write("\n")
    w.writerow(["receiver", "crb"])
    for j, c in enumerate(crbs):
        w.writerow([j + 1, f"{c:.6g}"])


def cmd_montecarlo(args, cfg, out):
    curve = run_montecarlo(cfg)
    if args.out:
        emit_csv(curve, args.out)
    else:
        out.write(curve_to_csv(curve))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmimo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("--config", default="paper2x2", help="TOML file or preset name")
        s.set_defaults(fn=fn)
        return s

    add("gen-cir", cmd_gen_cir, "print the nominal CIR matrix as CSV")

    s = add("design-seq", cmd_design_seq, "search CRB-minimising training sequences")
    s.add_argument("--k1", type=int)
    s.add_argument("--max-zero-run", type=int, default=4)
    s.add_argument("--strategy", default="auto",
                   choices=["auto", "exhaustive", "local-search"])
    s.add_argument("--restarts", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)

    s = add("crb", cmd_crb, "per-receiver CRB of a design at the nominal CIR")
    s.add_argument("--seq", help="comma-separated bit-strings, one per transmitter")

    s = add("simulate", cmd_simulate, "dump one Poisson observation draw as CSV")
    s.add_argument("--seq")
    s.add_argument("--k", type=int, help="training length (multiple of the base length)")
    s.add_argument("--seed", type=int, default=0)

    s = add("estimate", cmd_estimate, "ML and LS CIR estimates from observed counts")
    s.add_argument("--obs", required=True, help="CSV with columns k,receiver,count")
    s.add_argument("--seq")

    s = add("montecarlo", cmd_montecarlo, "MSE/NMSE/CRB vs K over jittered channels")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {}
        if args.command == "montecarlo":
            if args.trials is not None:
                overrides["trials"] = args.trials
            if args.seed is not None:
                overrides["seed"] = args.seed
        cfg = load_config(args.config, **overrides)
        args.fn(args, cfg, sys.stdout)
    except (ValueError, OSError, RuntimeError, KeyError, SingularDesignError) as err:
        msg = str(err).splitlines()[0] if str(err) else type(err).__name__
        print(f"dmimo: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
