"""Pilot desk-scale runs to validate MCC convergence (throwaway script)."""
import json
import sys
import time

from dcl import spaces as sp, mixing as mx, training as tr

kind = sys.argv[1]
k = int(sys.argv[2]) if len(sys.argv) > 2 else 0
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0

space = sp.LatentSpaceSpec(n=4, scenario="box-simple")
cond = sp.default_conditional(space, beta=1.0)
mixer = mx.build_mixer(4, 4, 3, seed=101)
cfg = tr.TrainConfig(loss_kind=kind, batch=512, iterations=20000, seed=seed,
                     eval_every=1000, k_negatives=k)
t0 = time.perf_counter()
res = tr.train(cfg, space, cond, mixer)
wall = time.perf_counter() - t0
print(json.dumps({"kind": kind, "k": k, "seed": seed, "wall_min": wall / 60,
                  "history": res.history, "final_mcc": res.final.mcc_mean,
                  "final_r2": res.final.r2_mean}))
