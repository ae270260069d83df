"""Learnable pieces: the encoder, the two scalar alpha networks, the shared
offset c, and the dissimilarity assembled from a fixed interaction term.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import BatchNormState, Tape, Tensor

UNBOUNDED = "unbounded"
BOUNDED_BOX = "bounded-box"

LEARNED = "learned"
CONSTANT_ONLY = "constant-only"
ZERO = "zero"

LP_BETA = "lp-beta"
SQUARED_EUCLIDEAN = "squared-euclidean"


@dataclass(frozen=True)
class EncoderSpec:
    """Residual MLP encoder: 2 hidden layers (widths 10n, 20n), then residual
    blocks of two width-20n layers, then a linear output head."""

    m: int
    n: int
    head: str = UNBOUNDED
    slope: float = 0.01
    n_blocks: int = 3
    bn_momentum: float = 0.99

    def __post_init__(self):
        if self.head not in (UNBOUNDED, BOUNDED_BOX):
            raise ValueError(f"unknown output head {self.head!r}")

    @property
    def widths(self) -> tuple[int, int]:
        return 10 * self.n, 20 * self.n


@dataclass(frozen=True)
class DissimilaritySpec:
    """delta(z, z~) = dhat(z, z~) + alpha(z) + alpha~(z~) + c, with modes that
    drop terms (constant-only, zero, and the InfoNCE form without alpha/c)."""

    kind: str = LP_BETA
    beta: float = 1.0
    sigma: tuple[float, ...] = (1.0,)
    alpha_mode: str = LEARNED
    ince_mode: bool = False

    def __post_init__(self):
        if self.kind not in (LP_BETA, SQUARED_EUCLIDEAN):
            raise ValueError(f"unknown dhat kind {self.kind!r}")
        if self.kind == LP_BETA and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.alpha_mode not in (LEARNED, CONSTANT_ONLY, ZERO):
            raise ValueError(f"unknown alpha mode {self.alpha_mode!r}")
        object.__setattr__(self, "sigma",
                           tuple(float(x) for x in np.atleast_1d(self.sigma)))

    def sigma_vector(self, n: int) -> np.ndarray:
        sig = np.asarray(self.sigma, dtype=np.float64)
        if sig.size == 1:
            return np.full(n, sig[0])
        if sig.size != n:
            raise ValueError(f"sigma has {sig.size} entries for n={n}")
        return sig


ALPHA_WIDTH = 20


class Model:
    """Parameter store plus forward passes.  Arrays are updated in place by the
    optimizer; forwards are pure given frozen parameters."""

    def __init__(self, enc: EncoderSpec, dis: DissimilaritySpec, rng: Rng):
        self.enc = enc
        self.dis = dis
        self.params: dict[str, np.ndarray] = {}
        self.groups: dict[str, str] = {}
        self.bn: dict[str, BatchNormState] = {}
        self._init_params(rng)

    # -- initialization -----------------------------------------------------

    def _add(self, name: str, arr: np.ndarray, group: str):
        self.params[name] = np.asarray(arr, dtype=np.float64)
        self.groups[name] = group

    def _linear(self, name: str, fan_in: int, fan_out: int, rng: Rng, group: str,
                bias: bool = True):
        w = rng.normal(fan_in * fan_out).reshape(fan_in, fan_out) * np.sqrt(2.0 / fan_in)
        self._add(f"{name}.w", w, group)
        if bias:
            self._add(f"{name}.b", np.zeros(fan_out), group)

    def _bn_layer(self, name: str, dim: int, group: str):
        self._add(f"{name}.g", np.ones(dim), group)
        self._add(f"{name}.b", np.zeros(dim), group)
        self.bn[name] = BatchNormState.create(dim, self.enc.bn_momentum)

    def _init_params(self, rng: Rng):
        # hidden linears are bias-free: batch norm cancels any bias exactly
        w1, w2 = self.enc.widths
        self._linear("enc.l1", self.enc.m, w1, rng, "encoder", bias=False)
        self._bn_layer("enc.bn1", w1, "encoder")
        self._linear("enc.l2", w1, w2, rng, "encoder", bias=False)
        self._bn_layer("enc.bn2", w2, "encoder")
        for k in range(self.enc.n_blocks):
            for j in (1, 2):
                self._linear(f"enc.blk{k}.l{j}", w2, w2, rng, "encoder", bias=False)
                self._bn_layer(f"enc.blk{k}.bn{j}", w2, "encoder")
        self._linear("enc.out", w2, self.enc.n, rng, "encoder")
        if self.enc.head == BOUNDED_BOX:
            self._add("enc.head_b", np.asarray(1.0), "encoder")
        self._add("c", np.asarray(0.0), "encoder")
        for prefix in ("alpha", "alpha_t"):
            self._linear(f"{prefix}.l1", self.enc.n, ALPHA_WIDTH, rng, "alpha")
            self._linear(f"{prefix}.l2", ALPHA_WIDTH, ALPHA_WIDTH, rng, "alpha")
            # no output bias: batch-mean centering would cancel it exactly
            self._linear(f"{prefix}.l3", ALPHA_WIDTH, 1, rng, "alpha", bias=False)

    # -- tracking -----------------------------------------------------------

    def track(self, tape: Tape | None) -> dict[str, Tensor]:
        """Wrap parameters as (tracked) tensors for one forward pass."""
        if tape is None:
            return {k: Tensor(v) for k, v in self.params.items()}
        return {k: tape.param(v) for k, v in self.params.items()}

    # -- forward passes -----------------------------------------------------

    def encode(self, tr: dict[str, Tensor], x, mode: str) -> Tensor:
        """Encoder forward; `mode` is 'train' (batch stats) or 'eval'."""
        spec = self.enc
        h = T.Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64))) \
            if not isinstance(x, Tensor) else x
        if h.data.shape[1] != spec.m:
            raise T.ShapeError(f"encoder expects {spec.m} input dims, "
                               f"got {h.data.shape[1]}")

        def hidden(name_l, name_bn, z):
            return T.linear_bn_lrelu(z, tr[f"{name_l}.w"], tr[f"{name_bn}.g"],
                                     tr[f"{name_bn}.b"], self.bn[name_bn],
                                     mode, spec.slope)

        h = hidden("enc.l1", "enc.bn1", h)
        h = hidden("enc.l2", "enc.bn2", h)
        for k in range(spec.n_blocks):
            inner = hidden(f"enc.blk{k}.l1", f"enc.blk{k}.bn1", h)
            inner = hidden(f"enc.blk{k}.l2", f"enc.blk{k}.bn2", inner)
            h = T.add(h, inner)
        y = T.add_bias(T.matmul(h, tr["enc.out.w"]), tr["enc.out.b"])
        if spec.head == BOUNDED_BOX:
            y = T.mul(T.sigmoid(y), tr["enc.head_b"])
        return y

    def _alpha_net(self, tr: dict[str, Tensor], z, prefix: str) -> Tensor:
        h1 = T.gelu(T.add_bias(T.matmul(z, tr[f"{prefix}.l1.w"]), tr[f"{prefix}.l1.b"]))
        # skip connection: second layer's input is added to its output
        h2 = T.gelu(T.add(T.add_bias(T.matmul(h1, tr[f"{prefix}.l2.w"]),
                                     tr[f"{prefix}.l2.b"]), h1))
        y = T.matmul(h2, tr[f"{prefix}.l3.w"])
        return T.reshape(y, (y.data.shape[0],))

    def alpha(self, tr: dict[str, Tensor], z, mode: str = "train") -> Tensor:
        """Scalar alpha(z) per row, centered to batch mean zero.  Eval mode
        centers over the evaluation batch the same way."""
        return T.center_columns(self._alpha_net(tr, z, "alpha"))

    def alpha_tilde(self, tr: dict[str, Tensor], z, mode: str = "train") -> Tensor:
        return T.center_columns(self._alpha_net(tr, z, "alpha_t"))


# ---------------------------------------------------------------------------
# dissimilarity
# ---------------------------------------------------------------------------

def dhat(dis: DissimilaritySpec, z: Tensor, z_tilde: Tensor) -> Tensor:
    """Row-wise fixed interaction term."""
    diff = T.sub(z, z_tilde)
    if dis.kind == SQUARED_EUCLIDEAN:
        return T.tsum(T.mul(diff, diff), axis=1)
    n = diff.data.shape[1]
    t = T.scale_columns(T.absval(diff), 1.0 / dis.sigma_vector(n))
    if dis.beta != 1.0:
        t = T.powi(t, dis.beta)
    return T.tsum(t, axis=1)


def dhat_pairwise(dis: DissimilaritySpec, z: Tensor, pool: Tensor) -> Tensor:
    """All-pairs interaction term: rows of z against rows of pool."""
    n = z.data.shape[1]
    if dis.kind == SQUARED_EUCLIDEAN:
        return T.pairwise_lp(z, pool, 2.0, np.ones(n))
    return T.pairwise_lp(z, pool, dis.beta, dis.sigma_vector(n))


def dhat_indexed(dis: DissimilaritySpec, z: Tensor, pool: Tensor,
                 index: np.ndarray) -> Tensor:
    """Interaction term against indexed pool rows (per-anchor negative sets)."""
    n = z.data.shape[1]
    if dis.kind == SQUARED_EUCLIDEAN:
        return T.pairwise_lp_indexed(z, pool, index, 2.0, np.ones(n))
    return T.pairwise_lp_indexed(z, pool, index, dis.beta, dis.sigma_vector(n))


def dissimilarity(dis: DissimilaritySpec, dhat_vals: Tensor,
                  alpha_out: Tensor | None, alpha_tilde_out: Tensor | None,
                  c: Tensor | None) -> Tensor:
    """delta = dhat + alpha + alpha~ + c, degraded per mode.  The InfoNCE form
    keeps only alpha~ (no alpha, no c)."""
    if dis.alpha_mode == ZERO:
        return dhat_vals
    if dis.alpha_mode == CONSTANT_ONLY:
        return T.add(dhat_vals, c)
    if dis.ince_mode:
        return T.add(dhat_vals, alpha_tilde_out)
    return T.add(T.add(T.add(dhat_vals, alpha_out), alpha_tilde_out), c)


def dissimilarity_pairwise(dis: DissimilaritySpec, dhat_mat: Tensor,
                           alpha_out: Tensor | None,
                           alpha_tilde_cols: Tensor | None,
                           c: Tensor | None) -> Tensor:
    """Pairwise variant: dhat_mat is [B, K]; alpha adds per row, alpha~ per column."""
    out = dhat_mat
    if dis.alpha_mode == ZERO:
        return out
    if dis.alpha_mode == CONSTANT_ONLY:
        return T.add(out, c)
    if alpha_tilde_cols is not None:
        out = T.add_bias(out, alpha_tilde_cols)
    if dis.ince_mode:
        return out
    if alpha_out is not None:
        out = T.transpose(T.add_bias(T.transpose(out), alpha_out))
    return T.add(out, c)


# ---------------------------------------------------------------------------
# checkpoints: flat little-endian doubles + JSON manifest of layer shapes
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, path: str | Path) -> None:
    path = Path(path)
    names = sorted(model.params)
    manifest = {"params": [{"name": k, "shape": list(model.params[k].shape)}
                           for k in names],
                "bn": []}
    blobs = [model.params[k].ravel() for k in names]
    for name in sorted(model.bn):
        st = model.bn[name]
        manifest["bn"].append({"name": name, "dim": int(st.running_mean.size),
                               "initialized": bool(st.initialized),
                               "momentum": st.momentum})
        blobs.append(st.running_mean.ravel())
        blobs.append(st.running_var.ravel())
    flat = np.concatenate(blobs).astype("<f8")
    path.with_suffix(".bin").write_bytes(flat.tobytes())
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(model: Model, path: str | Path) -> Model:
    """Load arrays saved by `save_checkpoint` into a structurally equal model."""
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    off = 0
    for entry in manifest["params"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = flat[off:off + size].reshape(entry["shape"]).copy()
        off += size
        if entry["name"] not in model.params:
            raise KeyError(f"checkpoint param {entry['name']!r} not in model")
        model.params[entry["name"]] = arr
    for entry in manifest["bn"]:
        dim = entry["dim"]
        st = model.bn[entry["name"]]
        st.running_mean = flat[off:off + dim].copy()
        off += dim
        st.running_var = flat[off:off + dim].copy()
        off += dim
        st.initialized = entry["initialized"]
        st.momentum = entry["momentum"]
    return model
