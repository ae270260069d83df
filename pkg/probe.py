"""Short-horizon probes of training trajectories (throwaway script)."""
import json
import sys

from dcl import spaces as sp, mixing as mx, training as tr

name = sys.argv[1]
cfgs = {
    "nce-box-s02": ("box-simple", 0.2, "delta-nce", 0),
    "nwj-box-s01": ("box-simple", 0.1, "delta-nwj", 0),
    "nce-ball": ("hollow-ball", None, "delta-nce", 0),
    "nce-grid": ("cube-grid", None, "delta-nce", 0),
    "scl-box-s01": ("box-simple", 0.1, "delta-scl", 0),
}
scenario, sigma, kind, k = cfgs[name]
space = sp.LatentSpaceSpec(n=4, scenario=scenario)
cond = (sp.default_conditional(space, beta=1.0) if sigma is None
        else sp.ConditionalSpec(beta=1.0, sigma=(sigma,)))
mixer = mx.build_mixer(4, 4, 3, seed=101)
cfg = tr.TrainConfig(loss_kind=kind, batch=512, iterations=6000, seed=0,
                     eval_every=1000, k_negatives=k)
res = tr.train(cfg, space, cond, mixer)
print(json.dumps({"name": name, "sigma": cond.sigma,
                  "history": [(h["iter"], round(h["mcc"], 4), round(h["r2"], 4))
                              for h in res.history]}))
