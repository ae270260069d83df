"""Central finite-difference verification of analytic gradients, for single
ops and for full losses through the encoder and alpha networks.
"""
from __future__ import annotations

import numpy as np

from . import losses as L
from . import spaces as sp
from . import tensor as T
from . import training as tr
from .mixing import build_mixer
from .rng import Rng


def fd_check(fn, params: dict[str, np.ndarray], eps: float = 1e-4,
             kink_filter: bool = False) -> dict:
    """Compare analytic gradients with central differences.

    `fn(tracked)` must build a scalar Tensor from a dict of tracked tensors;
    it is re-evaluated untracked for the difference quotients.

    With `kink_filter`, coordinates whose difference quotient is itself
    unstable under halving eps (the window straddles an abs / leaky-ReLU
    kink, where no finite difference is meaningful) are skipped and counted.
    """
    tape = T.Tape()
    tracked = {k: tape.param(v) for k, v in params.items()}
    loss = fn(tracked)
    grads = T.backward(loss, tape)

    def eval_at(vals: dict[str, np.ndarray]) -> float:
        out = fn({k: T.Tensor(v) for k, v in vals.items()})
        return float(out.data)

    def central(flat, i, h):
        orig = flat[i]
        flat[i] = orig + h
        up = eval_at(params)
        flat[i] = orig - h
        down = eval_at(params)
        flat[i] = orig
        return (up - down) / (2.0 * h)

    worst = 0.0
    skipped = 0
    total = 0
    for name, base in params.items():
        analytic = grads.get(tracked[name].node)
        if analytic is None:
            analytic = np.zeros_like(base)
        analytic = np.asarray(analytic, dtype=np.float64).reshape(base.shape)
        flat = base.ravel()
        for i in range(flat.size):
            total += 1
            fd = central(flat, i, eps)
            a = analytic.ravel()[i]
            err = abs(a - fd) / max(1.0, abs(a), abs(fd))
            if kink_filter and err > 1e-5:
                fd_half = central(flat, i, eps / 2.0)
                if abs(fd_half - fd) > 0.5 * abs(a - fd):
                    skipped += 1  # quotient unstable: kink in the window
                    continue
                err = abs(a - fd_half) / max(1.0, abs(a), abs(fd_half))
            worst = max(worst, err)
    return {"max_rel_err": worst, "skipped": skipped, "total": total}


def fd_max_rel_error(fn, params: dict[str, np.ndarray], eps: float = 1e-4) -> float:
    return fd_check(fn, params, eps)["max_rel_err"]


def op_checks(seed: int = 0) -> dict[str, float]:
    """Gradient check for every registered op on random inputs."""
    rng = Rng(seed)

    def arr(*shape):
        return rng.normal(int(np.prod(shape))).reshape(shape)

    x34 = arr(3, 4)
    y34 = arr(3, 4)
    pos34 = np.abs(x34) + 0.5
    w45 = arr(4, 5)
    bias4 = arr(4)
    w3 = arr(3)
    w43 = arr(4, 3)
    w64 = arr(6, 4)
    w38 = arr(3, 8)
    w44 = arr(4, 4)
    w35 = arr(3, 5)
    w32 = arr(3, 2)
    w65 = arr(6, 5)
    results: dict[str, float] = {}

    def check(name, fn, params):
        results[name] = fd_max_rel_error(fn, params)

    check("add", lambda t: T.tsum(T.add(t["a"], t["b"])), {"a": x34.copy(), "b": y34.copy()})
    check("add_scalar", lambda t: T.tsum(T.add(t["a"], t["s"])),
          {"a": x34.copy(), "s": np.asarray(0.7)})
    check("sub", lambda t: T.tsum(T.mul(T.sub(t["a"], t["b"]), x34)),
          {"a": x34.copy(), "b": y34.copy()})
    check("mul", lambda t: T.tsum(T.mul(t["a"], t["b"])), {"a": x34.copy(), "b": y34.copy()})
    check("neg", lambda t: T.tsum(T.mul(T.neg(t["a"]), y34)), {"a": x34.copy()})
    check("exp", lambda t: T.tsum(T.exp(t["a"])), {"a": x34.copy()})
    check("log", lambda t: T.tsum(T.log(t["a"])), {"a": pos34.copy()})
    check("abs", lambda t: T.tsum(T.mul(T.absval(t["a"]), y34)), {"a": pos34.copy()})
    check("pow", lambda t: T.tsum(T.powi(t["a"], 2.7)), {"a": pos34.copy()})
    check("sigmoid", lambda t: T.tsum(T.mul(T.sigmoid(t["a"]), y34)), {"a": x34.copy()})
    check("softplus", lambda t: T.tsum(T.mul(T.softplus(t["a"]), y34)), {"a": x34.copy()})
    check("leaky_relu", lambda t: T.tsum(T.mul(T.leaky_relu(t["a"], 0.2), y34)),
          {"a": pos34 - 1.0})
    check("gelu", lambda t: T.tsum(T.mul(T.gelu(t["a"]), y34)), {"a": x34.copy()})
    check("clamp", lambda t: T.tsum(T.mul(T.clamp(t["a"], -0.5, 0.5), y34)),
          {"a": x34.copy()})
    check("matmul", lambda t: T.tsum(T.matmul(t["a"], t["w"])),
          {"a": x34.copy(), "w": w45.copy()})
    check("transpose", lambda t: T.tsum(T.mul(T.transpose(t["a"]), x34.T)),
          {"a": x34.copy()})
    check("sum_axis", lambda t: T.tsum(T.mul(T.tsum(t["a"], axis=0), bias4)),
          {"a": x34.copy()})
    check("mean_axis", lambda t: T.tsum(T.mul(T.tmean(t["a"], axis=1), w3)),
          {"a": x34.copy()})
    check("logsumexp", lambda t: T.tsum(T.mul(T.logsumexp(t["a"], axis=1), w3)),
          {"a": x34.copy()})
    check("concat_rows", lambda t: T.tsum(T.mul(T.concat_rows([t["a"], t["b"]]),
                                                w64)),
          {"a": x34.copy(), "b": y34.copy()})
    check("concat_cols", lambda t: T.tsum(T.mul(T.concat_cols([t["a"], t["b"]]),
                                                w38)),
          {"a": x34.copy(), "b": y34.copy()})
    check("center_columns", lambda t: T.tsum(T.mul(T.center_columns(t["a"]), y34)),
          {"a": x34.copy()})
    check("add_bias", lambda t: T.tsum(T.mul(T.add_bias(t["a"], t["b"]), y34)),
          {"a": x34.copy(), "b": bias4.copy()})
    check("scale_columns", lambda t: T.tsum(T.mul(T.scale_columns(t["a"],
                                                                  np.abs(bias4) + 0.5),
                                                  y34)),
          {"a": x34.copy()})
    check("reshape", lambda t: T.tsum(T.mul(T.reshape(t["a"], (4, 3)), w43)),
          {"a": x34.copy()})
    check("gather_rows", lambda t: T.tsum(T.mul(T.gather_rows(t["a"],
                                                              np.array([2, 0, 1, 2])),
                                                w44)),
          {"a": x34.copy()})

    sig = np.abs(arr(4)) + 0.5
    for beta in (1.0, 2.0, 3.0):
        check(f"pairwise_lp_b{beta:g}",
              lambda t, b=beta: T.tsum(T.mul(T.pairwise_lp(t["z"], t["w"], b, sig),
                                             w35)),
              {"z": arr(3, 4), "w": arr(5, 4)})
    idx = np.array([[1, 2], [0, 2], [3, 0]])
    check("pairwise_lp_indexed",
          lambda t: T.tsum(T.mul(T.pairwise_lp_indexed(t["z"], t["w"], idx, 1.0, sig),
                                 w32)),
          {"z": arr(3, 4), "w": arr(4, 4)})

    state = T.BatchNormState.create(4)
    check("batch_norm",
          lambda t: T.tsum(T.mul(T.batch_norm(t["x"], t["g"], t["b"],
                                              state.copy(), "train"), w64)),
          {"x": arr(6, 4), "g": np.abs(arr(4)) + 0.5, "b": arr(4)})
    eval_state = T.BatchNormState(running_mean=arr(4), running_var=np.abs(arr(4)) + 0.5,
                                  initialized=True)
    check("batch_norm_eval",
          lambda t: T.tsum(T.mul(T.batch_norm(t["x"], t["g"], t["b"],
                                              eval_state, "eval"), w64)),
          {"x": arr(6, 4), "g": np.abs(arr(4)) + 0.5, "b": arr(4)})
    bn2 = T.BatchNormState.create(5)
    check("linear_bn_lrelu",
          lambda t: T.tsum(T.mul(T.linear_bn_lrelu(t["x"], t["w"], t["g"], t["b"],
                                                   bn2.copy(), "train", 0.2),
                                 w65)),
          {"x": arr(6, 4), "w": arr(4, 5), "g": np.abs(arr(5)) + 0.5, "b": arr(5)})
    return results


def loss_checks(seed: int = 0) -> dict[str, float]:
    """Finite-difference check of every loss through encoder + alpha nets."""
    n, m, b = 1, 2, 6
    space = sp.LatentSpaceSpec(n=n)
    cond = sp.ConditionalSpec(beta=1.0, sigma=(0.3,))
    mixer = build_mixer(n, m, 2, seed=seed + 7)
    data_rng = Rng(seed + 1)
    results: dict[str, float] = {}
    for kind in L.LOSS_KINDS:
        cfg = tr.TrainConfig(loss_kind=kind, batch=b, iterations=1, seed=seed,
                             k_negatives=2 if kind == L.DELTA_INCE else 0,
                             eval_every=1)
        model = tr.build_model_for(cfg, space, cond, mixer)
        batch, plan = tr.make_batch(space, cond, mixer, b, data_rng,
                                    cfg.negative_source,
                                    2 if kind == L.DELTA_INCE else None)
        bn_backup = {k: v.copy() for k, v in model.bn.items()}

        def fn(tracked, kind=kind, model=model, batch=batch, plan=plan,
               bn_backup=bn_backup, clamp_hi=cfg.clamp_hi):
            # running-stat updates are a side effect; reset for purity
            for k, v in bn_backup.items():
                model.bn[k] = v.copy()
            loss, _, _ = tr.batch_loss(model, batch, plan, kind, clamp_hi,
                                       None, tracked=tracked)
            return loss

        out = fd_check(fn, {k: v.copy() for k, v in model.params.items()},
                       kink_filter=True)
        if out["skipped"] > 0.02 * out["total"]:
            raise AssertionError(
                f"{kind}: {out['skipped']}/{out['total']} coordinates sit on "
                "kinks; the check is not meaningful")
        results[kind] = out["max_rel_err"]
    return results
