"""Figure-2 calibration diagnostics (throwaway script)."""
import json
import sys
import time

import numpy as np

from dcl import oracle as orc, spaces as sp, suites, training as tr
from dcl.config import preset_config

sigma = float(sys.argv[1])
batch = int(sys.argv[2])
iters = int(sys.argv[3])
lr_alpha = float(sys.argv[4]) if len(sys.argv) > 4 else 1e-2
lr_enc = float(sys.argv[5]) if len(sys.argv) > 5 else 1e-4
loss_kind = sys.argv[6] if len(sys.argv) > 6 else "delta-nce"

layers = int(sys.argv[7]) if len(sys.argv) > 7 else 3

cfg = preset_config("figure2").with_overrides({
    "conditional.sigma": str(sigma), "train.batch": batch,
    "train.iterations": iters, "train.lr_alpha": lr_alpha,
    "train.lr_encoder": lr_enc, "mixer.layers": layers,
    "train.eval_every": 2000, "loss.kind": loss_kind})
space, cond, mixer = cfg.space(), cfg.conditional(), cfg.mixer()
targets = orc.alpha_targets(space, cond, resolution=20)

t0 = time.perf_counter()
res = tr.train(cfg.train_config(), space, cond, mixer)
wall = time.perf_counter() - t0
tr.recalibrate_bn(res.model, space, cond, mixer, cfg.train_config().seed)
learned_a, learned_at = suites.evaluate_alpha_on_grid(res.model, mixer, targets.points)
cmp_a = orc.compare_alpha(learned_a, targets.target_alpha)
print(json.dumps({
    "sigma": sigma, "batch": batch, "iters": iters, "lr_alpha": lr_alpha,
    "lr_enc": lr_enc, "loss": loss_kind, "wall_min": wall / 60,
    "mcc_hist": [(h["iter"], round(h["mcc"], 4)) for h in res.history],
    "alpha_dev": cmp_a["max_abs_dev"], "alpha_rms": cmp_a["rms_dev"],
    "alpha_tilde_std": float(np.std(learned_at)),
    "target_span": float(np.ptp(targets.target_alpha)),
    "learned_span": float(np.ptp(learned_a)),
    "final_mcc": res.final.mcc_mean}))

# distance-distortion decomposition: how well does dhat o h match d?
import numpy as np
from dcl import models as nm
from dcl.rng import Rng
from dcl.tensor import Tensor

rngd = Rng(999)
s_a = sp.sample_marginal(space, 4000, rngd)
s_b = sp.sample_conditional(space, cond, s_a, rngd)
d_true = sp.distance(cond, s_a, s_b)
tracked = res.model.track(None)
z_a = res.model.encode(tracked, Tensor(mixer_forward_arr := __import__("dcl.mixing", fromlist=["mixer_forward"]).mixer_forward(mixer, s_a)), "eval").data
z_b = res.model.encode(tracked, Tensor(__import__("dcl.mixing", fromlist=["mixer_forward"]).mixer_forward(mixer, s_b)), "eval").data
d_hat = nm.dhat(res.model.dis, Tensor(z_a), Tensor(z_b)).data
err = d_hat - d_true
# bucket by anchor distance to the boundary
border = np.minimum(s_a, 1 - s_a).min(axis=1)
for lo, hi in ((0.0, 0.1), (0.1, 0.25), (0.25, 0.5)):
    m = (border >= lo) & (border < hi)
    print(f"border [{lo},{hi}): mean dist err {err[m].mean():+.4f}  rms {np.sqrt((err[m]**2).mean()):.4f}")
# deviation map by grid ring
dev = learned_a - cmp_a["offset"] - targets.target_alpha
g = int(np.sqrt(dev.size))
dm = np.abs(dev).reshape(g, g)
for ring in range(4):
    mask = np.zeros((g, g), bool)
    mask[ring:g-ring, ring:g-ring] = True
    if ring+1 <= g//2:
        inner = np.zeros((g, g), bool)
        inner[ring+1:g-ring-1, ring+1:g-ring-1] = True
        mask &= ~inner
    print(f"ring {ring}: max |dev| {dm[mask].max():.4f}")
print("interior beyond ring3 max:", dm[4:g-4, 4:g-4].max())
