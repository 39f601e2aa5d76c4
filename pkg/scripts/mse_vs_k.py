"""Reproduce the MSE / NMSE vs training length sweep and print a table.

    python scripts/mse_vs_k.py [--config paper2x2] [--trials 1000] [--seed 0] [--out mse.csv]
"""
import argparse

from dmimo.config import load_config
from dmimo.harness import emit_csv, run_montecarlo

p = argparse.ArgumentParser()
p.add_argument("--config", default="paper2x2")
p.add_argument("--trials", type=int, default=1000)
p.add_argument("--seed", type=int, default=0)
p.add_argument("--designed", action="store_true", help="ignore configured sequences and search")
p.add_argument("--out")
args = p.parse_args()

overrides = {"trials": args.trials, "seed": args.seed}
if args.designed:
    overrides["base_sequences"] = None
cfg = load_config(args.config, **overrides)
curve = run_montecarlo(cfg)

print("sequences:", ", ".join("".join(map(str, s)) for s in curve.sequences))
print(f"{'K':>4} {'Rx':>3} {'ML':>8} {'LS':>8} {'CRB':>8} {'ML-CRB':>7} {'NMSE ML':>8} {'NMSE LS':>8}")
for K in curve.Ks:
    for j in curve.receivers:
        ml, ls = curve.get(K, j, "ML"), curve.get(K, j, "LS")
        print(f"{K:4d} {j:3d} {ml.mse_db:8.2f} {ls.mse_db:8.2f} {ml.crb_db:8.2f} "
              f"{ml.mse_db - ml.crb_db:7.2f} {ml.nmse_db:8.2f} {ls.nmse_db:8.2f}")
if args.out:
    emit_csv(curve, args.out)
