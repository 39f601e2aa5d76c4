"""Compare designed and published training pairs against random feasible designs."""
import argparse

import numpy as np

from dmimo.channel import rng_stream
from dmimo.cir import build_cir
from dmimo.config import paper2x2
from dmimo.design import DesignProblem, crb_table, design, random_feasible_designs
from dmimo.training import to_bitstring

p = argparse.ArgumentParser()
p.add_argument("--k1", type=int, default=16)
p.add_argument("--samples", type=int, default=10**5)
p.add_argument("--seed", type=int, default=0)
args = p.parse_args()

cfg = paper2x2()
nominal = build_cir(cfg.topology, cfg.diffusion, cfg.noise)
L = cfg.diffusion.L
res = design(DesignProblem(nominal, args.k1, L, seed=args.seed))
draws = random_feasible_designs(args.k1, cfg.M, args.samples, cfg.design.constraints,
                                rng_stream(args.seed, 1))
objs = crb_table(draws, nominal, L).max(axis=1)
objs = objs[np.isfinite(objs)]

print(f"designed ({res.strategy}, {res.evaluations} evaluations):",
      ", ".join(map(to_bitstring, res.sequences)), f"max CRB {res.scalar_objective:.3f}")
if args.k1 == cfg.K1:
    pub = crb_table(cfg.base_sequences[None], nominal, L)[0].max()
    print(f"published pair: max CRB {pub:.3f}, "
          f"rank fraction {np.mean(objs <= pub):.2e}")
for q in (1e-3, 1e-2, 0.5):
    print(f"random designs, {q:g} quantile: {np.quantile(objs, q):.3f}")
