"""Oracle suites: lemma1 (discrete exact-expectation optima), figure2
(learned alpha functions vs closed-form targets), samplers (moment and
histogram checks), gradcheck (finite differences).

Each suite returns a JSON-able verdict dict; artifact emission is optional.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.stats import chisquare

from . import gradcheck as gc
from . import losses as L
from . import models as nm
from . import oracle as orc
from . import reporting as rep
from . import spaces as sp
from . import training as tr
from .config import preset_config
from .rng import Rng
from .tensor import Tensor

log = logging.getLogger(__name__)

LEMMA1_TOL = 1e-4
FIG2_ALPHA_TOL = 0.1
FIG2_ALPHA_TILDE_STD_TOL = 0.05
GRADCHECK_TOL = 1e-4


def lemma1_suite(n_worlds: int = 20, seed: int = 12345) -> dict:
    """Minimized score tables vs -log p(x~|x) + log p_neg(x~) on random
    discrete worlds; delta-ince is compared after per-row centering."""
    rng = Rng(seed)
    checks = []
    for w in range(n_worlds):
        m = 2 + w % 5  # M in {2..6}
        world = orc.random_world(rng, m)
        target = orc.closed_form_table(world)
        for kind in (L.DELTA_NCE, L.DELTA_SCL, L.DELTA_NWJ):
            psi = orc.discrete_loss_minimizer(world, kind)
            err = float(np.max(np.abs(psi - target)))
            checks.append({"world": w, "m": m, "loss": kind, "k": None,
                           "max_err": err, "pass": err < LEMMA1_TOL})
        for k in (1, 2):
            psi = orc.discrete_loss_minimizer(world, L.DELTA_INCE, k=k)
            err = float(np.max(np.abs(orc.center_rows(psi)
                                      - orc.center_rows(target))))
            checks.append({"world": w, "m": m, "loss": L.DELTA_INCE, "k": k,
                           "max_err": err, "pass": err < LEMMA1_TOL})
    ok = all(c["pass"] for c in checks)
    return {"suite": "lemma1", "pass": ok, "tolerance": LEMMA1_TOL,
            "n_checks": len(checks), "checks": checks}


def samplers_suite(n_samples: int = 1_000_000, seed: int = 777) -> dict:
    """Moment z-scores for the generalized-normal proposal and a chi2 fit of
    the truncated conditional at n = 1."""
    checks = []
    for i, beta in enumerate((0.5, 1.0, 2.0, 3.0, 5.0)):
        cond = sp.ConditionalSpec(beta=beta, sigma=(1.0,))
        delta = sp.sample_generalized_normal(cond, n_samples, 1, Rng(seed + i))[:, 0]
        absd = np.abs(delta)
        expected = gamma_fn(2.0 / beta) / gamma_fn(1.0 / beta)
        se = absd.std(ddof=1) / np.sqrt(n_samples)
        z = float((absd.mean() - expected) / se)
        checks.append({"check": f"gn-mean-abs-beta-{beta:g}", "z": z,
                       "pass": abs(z) < 3.0})
    # marginal moments
    space = sp.LatentSpaceSpec(n=2)
    s = sp.sample_marginal(space, n_samples, Rng(seed + 50))
    se = s[:, 0].std(ddof=1) / np.sqrt(n_samples)
    z = float((s[:, 0].mean() - 0.5) / se)
    checks.append({"check": "box-marginal-mean", "z": z, "pass": abs(z) < 3.0})
    # chi2 of the 1D truncated conditional histogram
    chi = chi2_truncated_conditional(seed=seed + 99)
    checks.append({"check": "truncated-conditional-chi2",
                   "p_value": chi["p_value"], "pass": chi["p_value"] > 0.001})
    ok = all(c["pass"] for c in checks)
    return {"suite": "samplers", "pass": ok, "checks": checks}


def chi2_truncated_conditional(anchor: float = 0.3, sigma: float = 0.25,
                               n_samples: int = 200_000, bins: int = 200,
                               seed: int = 4242) -> dict:
    """Histogram of s~ | s for the 1D unit box, beta = 1, against the
    analytically normalized truncated-Laplace density."""
    space = sp.LatentSpaceSpec(n=1)
    cond = sp.ConditionalSpec(beta=1.0, sigma=(sigma,))
    s = np.full((n_samples, 1), anchor)
    draws = sp.sample_conditional(space, cond, s, Rng(seed))[:, 0]
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(draws, bins=edges)
    # exact truncated-Laplace bin masses
    z1 = sigma * (2.0 - np.exp(-anchor / sigma) - np.exp(-(1.0 - anchor) / sigma))

    def cdf_num(t):
        # integral_0^t exp(-|u - anchor| / sigma) du
        t = np.asarray(t, dtype=np.float64)
        below = sigma * (np.exp(-(anchor - np.minimum(t, anchor)) / sigma)
                         - np.exp(-anchor / sigma))
        above = np.where(t > anchor,
                         sigma * (1.0 - np.exp(-(t - anchor) / sigma)), 0.0)
        return below + above

    masses = np.diff(cdf_num(edges)) / z1
    stat, p = chisquare(counts, f_exp=n_samples * masses)
    return {"statistic": float(stat), "p_value": float(p)}


def gradcheck_suite(seed: int = 0) -> dict:
    ops = gc.op_checks(seed)
    losses = gc.loss_checks(seed)
    worst_op = max(ops, key=ops.get)
    worst_loss = max(losses, key=losses.get)
    ok = (all(v < GRADCHECK_TOL for v in ops.values())
          and all(v < GRADCHECK_TOL for v in losses.values()))
    return {"suite": "gradcheck", "pass": ok, "tolerance": GRADCHECK_TOL,
            "max_op_err": {worst_op: ops[worst_op]},
            "max_loss_err": {worst_loss: losses[worst_loss]},
            "ops": ops, "losses": losses}


# ---------------------------------------------------------------------------
# figure-2 reproduction
# ---------------------------------------------------------------------------

def evaluate_alpha_on_grid(model: nm.Model, mixer, points: np.ndarray
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Learned alpha(h(s)) and alpha~(h(s)) over latent grid points, with the
    learned offset c added to alpha (the total-offset convention)."""
    x = tr.mixer_forward(mixer, points) if mixer is not None else points
    tracked = model.track(None)
    z = model.encode(tracked, Tensor(x), "eval")
    a = model.alpha(tracked, z, "eval").data + float(model.params["c"])
    at = model.alpha_tilde(tracked, z, "eval").data
    return a, at


def figure2_suite(out_dir: str | Path | None = None, seed: int = 0,
                  losses: tuple[str, ...] = (L.DELTA_NCE, L.DELTA_INCE,
                                             L.DELTA_SCL, L.DELTA_NWJ),
                  iterations: int | None = None, batch: int | None = None,
                  grid: int = 20, checkerboard: bool = False) -> dict:
    """Train on the [0,1]^2 truncated-Laplace setup and compare the learned
    alpha / alpha~ with log Z / (log p - log Q) on an interior grid.

    delta-SCL is allowed to miss the bound (it can stall in a local minimum);
    its failure is logged, not fatal.
    """
    cfg = preset_config("figure2")
    overrides: dict[str, object] = {"train.seed": seed}
    if iterations is not None:
        overrides["train.iterations"] = iterations
    if batch is not None:
        overrides["train.batch"] = batch
    if checkerboard:
        overrides["conditional.q"] = "checkerboard"
    cfg = cfg.with_overrides(overrides)
    space = cfg.space()
    cond = cfg.conditional()
    mixer = cfg.mixer()
    targets = orc.alpha_targets(space, cond, resolution=grid)

    panels_alpha: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    panels_alpha_tilde: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    checks = []
    for kind in losses:
        run_cfg = cfg.with_overrides({"loss.kind": kind})
        tcfg = run_cfg.train_config()
        result = tr.train(tcfg, space, cond, mixer)
        tr.recalibrate_bn(result.model, space, cond, mixer, tcfg.seed)
        learned_a, learned_at = evaluate_alpha_on_grid(result.model, mixer,
                                                       targets.points)
        cmp_a = orc.compare_alpha(learned_a, targets.target_alpha)
        cmp_at = orc.compare_alpha(learned_at, targets.target_alpha_tilde)
        at_std = float(np.std(learned_at))
        has_alpha = kind != L.DELTA_INCE
        alpha_ok = cmp_a["max_abs_dev"] < FIG2_ALPHA_TOL if has_alpha else None
        at_ok = (at_std < FIG2_ALPHA_TILDE_STD_TOL if cond.q == "constant"
                 else cmp_at["max_abs_dev"] < FIG2_ALPHA_TOL)
        required = kind in (L.DELTA_NCE, L.DELTA_NWJ)
        entry = {"loss": kind, "alpha_max_dev": cmp_a["max_abs_dev"],
                 "alpha_tilde_max_dev": cmp_at["max_abs_dev"],
                 "alpha_tilde_std": at_std, "alpha_ok": alpha_ok,
                 "alpha_tilde_ok": at_ok, "required": required,
                 "final_loss": float(result.losses[-1]),
                 "wall_seconds": result.wall_seconds}
        if has_alpha and not alpha_ok:
            log.warning("figure2: %s missed the alpha bound "
                        "(max dev %.3f >= %.2f)%s", kind, cmp_a["max_abs_dev"],
                        FIG2_ALPHA_TOL,
                        " - allowed for delta-scl" if kind == L.DELTA_SCL else "")
        checks.append(entry)
        panels_alpha[kind] = (targets.points, learned_a - cmp_a["offset"])
        panels_alpha_tilde[kind] = (targets.points, learned_at - cmp_at["offset"])

    ok = all(((c["alpha_ok"] is None or c["alpha_ok"]) and c["alpha_tilde_ok"])
             for c in checks if c["required"])
    verdict = {"suite": "figure2", "pass": ok, "alpha_tol": FIG2_ALPHA_TOL,
               "alpha_tilde_std_tol": FIG2_ALPHA_TILDE_STD_TOL,
               "checkerboard": checkerboard, "checks": checks}

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        suffix = "-checkerboard" if checkerboard else ""
        rep.write_grid_csv(targets.points, targets.target_alpha,
                           out / f"target-alpha{suffix}.csv")
        rep.write_grid_csv(targets.points, targets.target_alpha_tilde,
                           out / f"target-alpha-tilde{suffix}.csv")
        for kind in losses:
            rep.write_grid_csv(targets.points, panels_alpha[kind][1],
                               out / f"learned-alpha-{kind}{suffix}.csv")
            rep.write_grid_csv(targets.points, panels_alpha_tilde[kind][1],
                               out / f"learned-alpha-tilde-{kind}{suffix}.csv")
        panels_alpha["ground truth"] = (targets.points, targets.target_alpha)
        panels_alpha_tilde["ground truth"] = (targets.points,
                                              targets.target_alpha_tilde)
        rep.heatmap_grid(panels_alpha, out / f"figure2-alpha{suffix}.svg",
                         title="learned alpha vs log Z")
        rep.heatmap_grid(panels_alpha_tilde,
                         out / f"figure2-alpha-tilde{suffix}.svg",
                         title="learned alpha~ vs log p - log Q")
    return verdict
