"""Adam optimization with per-group learning rates, batch assembly with a
configurable negative marginal, and the training loop with run bookkeeping.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses as L
from . import metrics as M
from . import models as nm
from . import spaces as sp
from . import tensor as T
from .mixing import MixerParams, mixer_forward
from .rng import Rng
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

FIRST_MARGINAL = "first"
SECOND_MARGINAL = "second"
MIXTURE = "mixture"
NEGATIVE_SOURCES = (FIRST_MARGINAL, SECOND_MARGINAL, MIXTURE)

# dedicated rng stream ids
_STREAM_MODEL = 0
_STREAM_DATA = 1
_STREAM_EVAL = 3
_STREAM_BN_CAL = 4


class TrainingFailure(RuntimeError):
    """Numerical failure mid-run; carries the last good state for a checkpoint."""

    def __init__(self, message: str, model=None, history=None, iteration=None):
        super().__init__(message)
        self.model = model
        self.history = history
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = L.DELTA_NCE
    batch: int = 512
    iterations: int = 20_000
    seed: int = 0
    lr_encoder: float = 1e-4
    lr_alpha: float = 1e-2
    negative_source: str = SECOND_MARGINAL
    alpha_mode: str = nm.LEARNED
    eval_every: int = 2_000
    k_negatives: int = 0  # delta-ince; 0 means batch - 1
    clamp_hi: float = L.DEFAULT_CLAMP_HI
    grad_clip: float = 0.0  # off by default
    eval_pairs: int = 4_096

    def __post_init__(self):
        if self.batch < 2:
            raise ValueError("batch size must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lr_encoder <= 0 or self.lr_alpha <= 0:
            raise ValueError("learning rates must be positive")
        if self.negative_source not in NEGATIVE_SOURCES:
            raise ValueError(f"unknown negative source {self.negative_source!r}")
        if self.loss_kind not in L.LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


class Adam:
    """Standard bias-corrected Adam over a dict of named parameter arrays."""

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr_by_group: dict[str, float], groups: dict[str, str],
             grad_clip: float = 0.0) -> None:
        for g in grads.values():
            if not np.all(np.isfinite(g)):
                raise TrainingFailure("NaN/Inf gradient in optimizer step")
        scale = 1.0
        if grad_clip > 0.0:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > grad_clip:
                scale = grad_clip / total
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            if name not in params:
                continue
            g = g * scale if scale != 1.0 else g
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            lr = lr_by_group[groups[name]]
            params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class NegativePlan:
    """In-batch negative indices into the union pool [X rows | X~ rows]."""

    pair_idx: np.ndarray  # [B] union indices for paired negatives
    grid_idx: np.ndarray | None = None  # [B, K] union indices for delta-ince


def make_batch(space: sp.LatentSpaceSpec, cond: sp.ConditionalSpec,
               mixer: MixerParams, size: int, rng: Rng,
               negative_source: str = SECOND_MARGINAL,
               k_negatives: int | None = None) -> tuple[sp.PairBatch, NegativePlan]:
    """Sample (S, S~, X, X~) plus the in-batch negative index plan.

    Paired negatives use a derangement (no anchor meets its own partner);
    the mixture source flips a fair coin per negative between the two columns.
    """
    s = sp.sample_marginal(space, size, rng)
    s_tilde = sp.sample_conditional(space, cond, s, rng)
    batch = sp.PairBatch(s=s, s_tilde=s_tilde,
                         x=mixer_forward(mixer, s),
                         x_tilde=mixer_forward(mixer, s_tilde))
    perm = rng.derangement(size)
    if negative_source == FIRST_MARGINAL:
        pair_idx = perm
    elif negative_source == SECOND_MARGINAL:
        pair_idx = perm + size
    else:
        coin = rng.uniform(size) < 0.5
        pair_idx = perm + size * coin.astype(np.int64)
    grid_idx = None
    if k_negatives is not None:
        k = size - 1 if k_negatives == 0 else min(k_negatives, size - 1)
        offsets = np.arange(1, k + 1)
        grid = (np.arange(size)[:, None] + offsets[None, :]) % size
        if negative_source == FIRST_MARGINAL:
            grid_idx = grid
        elif negative_source == SECOND_MARGINAL:
            grid_idx = grid + size
        else:
            coin = rng.uniform(size * k).reshape(size, k) < 0.5
            grid_idx = grid + size * coin.astype(np.int64)
    return batch, NegativePlan(pair_idx=pair_idx, grid_idx=grid_idx)


def batch_loss(model: nm.Model, batch: sp.PairBatch, plan: NegativePlan,
               loss_kind: str, clamp_hi: float, tape: Tape | None,
               mode: str = "train",
               tracked: dict[str, Tensor] | None = None
               ) -> tuple[Tensor, dict[str, Tensor], dict]:
    """Assemble one loss value from a batch.

    Returns (loss, tracked params, aux) where aux carries the raw delta
    values for clamp accounting.  `tracked` overrides the model's own
    parameters (used by the finite-difference checks).
    """
    b = batch.x.shape[0]
    dis = model.dis
    tr = tracked if tracked is not None else model.track(tape)
    x_all = np.concatenate([batch.x, batch.x_tilde], axis=0)
    z_all = model.encode(tr, Tensor(x_all), mode)
    z = T.gather_rows(z_all, np.arange(b))
    z_tilde = T.gather_rows(z_all, np.arange(b) + b)

    if loss_kind == L.ORIGINAL_SCL:
        z_neg = T.gather_rows(z_all, plan.pair_idx)
        return L.loss_scl_original(z, z_tilde, z_neg), tr, {}

    use_nets = dis.alpha_mode == nm.LEARNED
    alpha_out = model.alpha(tr, z, mode) if use_nets and not dis.ince_mode else None
    alpha_t_all = model.alpha_tilde(tr, z_all, mode) if use_nets else None
    c = tr["c"]

    pos_d = nm.dhat(dis, z, z_tilde)
    alpha_t_pos = T.gather_rows(alpha_t_all, np.arange(b) + b) if use_nets else None
    delta_pos = nm.dissimilarity(dis, pos_d, alpha_out, alpha_t_pos, c)

    if loss_kind == L.DELTA_INCE:
        neg_d = nm.dhat_indexed(dis, z, z_all, plan.grid_idx)
        if use_nets:
            alpha_t_cells = T.gather_rows(alpha_t_all, plan.grid_idx)
            delta_neg = T.add(neg_d, alpha_t_cells)
        elif dis.alpha_mode == nm.CONSTANT_ONLY:
            delta_neg = T.add(neg_d, c)
        else:
            delta_neg = neg_d
        return L.loss_ince(delta_pos, delta_neg), tr, {}

    z_neg = T.gather_rows(z_all, plan.pair_idx)
    neg_d = nm.dhat(dis, z, z_neg)
    alpha_t_neg = T.gather_rows(alpha_t_all, plan.pair_idx) if use_nets else None
    delta_neg = nm.dissimilarity(dis, neg_d, alpha_out, alpha_t_neg, c)
    aux = {"delta_pos": delta_pos.data, "delta_neg": delta_neg.data}

    if loss_kind == L.DELTA_NCE:
        return L.loss_nce(delta_pos, delta_neg), tr, aux
    if loss_kind == L.DELTA_SCL:
        return L.loss_scl(delta_pos, delta_neg, clamp_hi), tr, aux
    if loss_kind == L.DELTA_NWJ:
        return L.loss_nwj(delta_pos, delta_neg, clamp_hi), tr, aux
    raise ValueError(f"unknown loss kind {loss_kind!r}")


@dataclass
class TrainResult:
    model: nm.Model
    history: list[dict]  # rows {iter, loss, r2, mcc}
    losses: np.ndarray  # full per-iteration loss curve
    wall_seconds: float
    clamp_events: int
    final: M.MetricsReport


def _dis_for(config: TrainConfig, dhat_kind: str, beta: float,
             sigma, n: int) -> nm.DissimilaritySpec:
    return nm.DissimilaritySpec(
        kind=dhat_kind, beta=beta, sigma=tuple(np.atleast_1d(sigma)),
        alpha_mode=config.alpha_mode,
        ince_mode=config.loss_kind == L.DELTA_INCE,
    )


def build_model_for(config: TrainConfig, space: sp.LatentSpaceSpec,
                    cond: sp.ConditionalSpec, mixer: MixerParams,
                    dhat_kind: str = nm.LP_BETA,
                    dhat_beta: float | None = None,
                    dhat_sigma=None,
                    head: str = nm.UNBOUNDED,
                    enc_slope: float = 0.01) -> nm.Model:
    """Model whose interaction term matches the data conditional by default."""
    beta = cond.beta if dhat_beta is None else dhat_beta
    sigma = cond.sigma_vector(space.n) if dhat_sigma is None else dhat_sigma
    dis = _dis_for(config, dhat_kind, beta, sigma, space.n)
    enc = nm.EncoderSpec(m=mixer.m, n=space.n, head=head, slope=enc_slope)
    return nm.Model(enc, dis, Rng(config.seed).spawn(_STREAM_MODEL))


def recalibrate_bn(model: nm.Model, space: sp.LatentSpaceSpec,
                   cond: sp.ConditionalSpec, mixer: MixerParams,
                   seed: int, pairs: int = 4_096) -> None:
    """Re-estimate batch-norm running stats at the current parameters.

    The training loop's exponential averages lag the moving weights; one
    large pass over a fresh pair batch (the same union composition the
    encoder trains on) pins the eval-mode statistics to the final model.
    """
    rng = Rng(seed).spawn(_STREAM_BN_CAL)
    s = sp.sample_marginal(space, pairs, rng)
    s_tilde = sp.sample_conditional(space, cond, s, rng)
    x_all = np.concatenate([mixer_forward(mixer, s),
                            mixer_forward(mixer, s_tilde)], axis=0)
    for state in model.bn.values():
        state.initialized = False
    model.encode(model.track(None), Tensor(x_all), "train")


def evaluate_model(model: nm.Model, space: sp.LatentSpaceSpec,
                   cond: sp.ConditionalSpec, mixer: MixerParams,
                   seed: int, pairs: int = 4_096,
                   recalibrate: bool = True) -> M.MetricsReport:
    """Metrics on a held-out evaluation set drawn from a dedicated stream."""
    if recalibrate:
        recalibrate_bn(model, space, cond, mixer, seed)
    rng = Rng(seed).spawn(_STREAM_EVAL)
    s = sp.sample_marginal(space, pairs, rng)
    x = mixer_forward(mixer, s)
    tr = model.track(None)
    z = model.encode(tr, Tensor(x), "eval")
    return M.evaluate(z.data, s)


def train(config: TrainConfig, space: sp.LatentSpaceSpec, cond: sp.ConditionalSpec,
          mixer: MixerParams, model: nm.Model | None = None,
          progress: bool = False) -> TrainResult:
    """Run the training loop; deterministic given the config seed."""
    if model is None:
        model = build_model_for(config, space, cond, mixer)
    rng = Rng(config.seed)
    data_rng = rng.spawn(_STREAM_DATA)
    opt = Adam(model.params)
    lr = {"encoder": config.lr_encoder, "alpha": config.lr_alpha}
    k_neg = config.k_negatives if config.loss_kind == L.DELTA_INCE else None

    history: list[dict] = []
    losses = np.empty(config.iterations)
    clamp_events = 0
    snapshot = {k: v.copy() for k, v in model.params.items()}
    snapshot_iter = 0
    t0 = time.perf_counter()

    for it in range(1, config.iterations + 1):
        try:
            batch, plan = make_batch(space, cond, mixer, config.batch, data_rng,
                                     config.negative_source, k_neg)
            tape = Tape()
            loss, tr, aux = batch_loss(model, batch, plan, config.loss_kind,
                                       config.clamp_hi, tape)
            grads_by_node = T.backward(loss, tape)
            grads = {name: grads_by_node[t.node] for name, t in tr.items()
                     if t.node in grads_by_node}
            opt.step(model.params, grads, lr, model.groups, config.grad_clip)
        except (T.NumericalError, TrainingFailure) as exc:
            raise TrainingFailure(
                f"numerical failure at iteration {it}: {exc}",
                model=_restored(model, snapshot), history=history,
                iteration=snapshot_iter) from exc
        losses[it - 1] = loss.item()
        if aux and config.loss_kind in (L.DELTA_SCL, L.DELTA_NWJ):
            clamp_events += L.clamp_active_count(
                config.loss_kind, aux["delta_pos"], aux["delta_neg"],
                config.clamp_hi)
        if it % config.eval_every == 0 or it == config.iterations:
            report = evaluate_model(model, space, cond, mixer, config.seed,
                                    config.eval_pairs)
            history.append({"iter": it, "loss": float(losses[it - 1]),
                            "r2": report.r2_mean, "mcc": report.mcc_mean})
            snapshot = {k: v.copy() for k, v in model.params.items()}
            snapshot_iter = it
            if progress:
                log.info("iter %d loss %.4f r2 %.4f mcc %.4f", it,
                         losses[it - 1], report.r2_mean, report.mcc_mean)

    wall = time.perf_counter() - t0
    if clamp_events:
        log.warning("exponent clamp active %d times during training", clamp_events)
    final = evaluate_model(model, space, cond, mixer, config.seed,
                           config.eval_pairs)
    return TrainResult(model=model, history=history, losses=losses,
                       wall_seconds=wall, clamp_events=clamp_events, final=final)


def _restored(model: nm.Model, snapshot: dict[str, np.ndarray]) -> nm.Model:
    for k, v in snapshot.items():
        model.params[k] = v.copy()
    return model


def write_history_csv(history: list[dict], path: str | Path) -> None:
    lines = ["iter,loss,r2,mcc"]
    for row in history:
        lines.append(f"{row['iter']},{row['loss']:.8g},{row['r2']:.8g},{row['mcc']:.8g}")
    Path(path).write_text("\n".join(lines) + "\n")
