"""Dense float64 tensors with reverse-mode autodiff on a dynamic tape.

Forward ops record a backward closure on the tape that produced their
inputs; `backward` replays the tape once in reverse.  Tensors are
immutable after creation and everything runs in double precision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf

_EPS_BN = 1e-12
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DiffMathError(Exception):
    pass


class ShapeError(DiffMathError):
    pass


class DomainError(DiffMathError):
    pass


class NumericalError(DiffMathError):
    pass


class Tape:
    """Recorded ops in execution order (which is a topological order)."""

    def __init__(self):
        self._entries = []
        self._next_node = 0

    def _new_node(self) -> int:
        nid = self._next_node
        self._next_node += 1
        return nid

    def _record(self, op, out_node, in_nodes, backward_fn):
        self._entries.append((op, out_node, in_nodes, backward_fn))

    def param(self, data) -> "Tensor":
        """Create a tracked leaf (a trainable parameter)."""
        return Tensor(_as_array(data), tape=self, node=self._new_node())

    def __len__(self) -> int:
        return len(self._entries)


class Tensor:
    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: Tape | None = None, node: int | None = None):
        self.data = _as_array(data)
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tracked={self.tracked})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _common_tape(*tensors) -> Tape | None:
    tape = None
    for t in tensors:
        if isinstance(t, Tensor) and t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise DiffMathError("inputs recorded on different tapes")
    return tape


def _result(op, data, inputs, backward_fn) -> Tensor:
    """Wrap op output; record on the tape when any input is tracked."""
    tape = _common_tape(*inputs)
    if tape is None:
        return Tensor(data)
    in_nodes = tuple(t.node if isinstance(t, Tensor) and t.tape is not None else None
                     for t in inputs)
    out = Tensor(data, tape=tape, node=tape._new_node())
    tape._record(op, out.node, in_nodes, backward_fn)
    return out


def _check_elementwise_shapes(op, a: np.ndarray, b: np.ndarray):
    # only full-shape or scalar broadcast is allowed for elementwise ops
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} "
                         "(need equal shapes or a scalar)")


def _contract_to(grad: np.ndarray, shape) -> np.ndarray:
    # reduce a gradient onto a scalar operand
    if grad.shape == tuple(shape):
        return grad
    return np.sum(grad).reshape(shape)


def _guard_finite(op: str, data: np.ndarray):
    if not np.all(np.isfinite(data)):
        raise NumericalError(f"{op}: non-finite value in forward result")


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise_shapes("add", a.data, b.data)
    out = a.data + b.data
    ash, bsh = a.data.shape, b.data.shape

    def bwd(g):
        return _contract_to(g, ash), _contract_to(g, bsh)

    return _result("add", out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise_shapes("sub", a.data, b.data)
    out = a.data - b.data
    ash, bsh = a.data.shape, b.data.shape

    def bwd(g):
        return _contract_to(g, ash), _contract_to(-g, bsh)

    return _result("sub", out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_elementwise_shapes("mul", a.data, b.data)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _contract_to(g * bd, ad.shape), _contract_to(g * ad, bd.shape)

    return _result("mul", out, (a, b), bwd)


def neg(a) -> Tensor:
    a = _lift(a)
    return _result("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _lift(a)
    with np.errstate(over="ignore"):  # overflow is raised as NumericalError
        out = np.exp(a.data)
    _guard_finite("exp", out)
    return _result("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: argument must be positive")
    out = np.log(a.data)
    ad = a.data
    return _result("log", out, (a,), lambda g: (g / ad,))


def absval(a) -> Tensor:
    a = _lift(a)
    ad = a.data
    return _result("abs", np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def powi(a, p: float) -> Tensor:
    """Power by a Python scalar exponent."""
    a = _lift(a)
    p = float(p)
    ad = a.data
    if np.any(ad < 0.0) and p != round(p):
        raise DomainError("pow: negative base with non-integer exponent")
    out = ad**p
    _guard_finite("pow", out)

    def bwd(g):
        # subgradient 0 at base 0 when p < 1 (kink); exact elsewhere
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p * ad ** (p - 1.0)
        d = np.where(np.isfinite(d), d, 0.0)
        return (g * d,)

    return _result("pow", out, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = _lift(a)
    ad = a.data
    # stable two-sided form
    out = np.where(ad >= 0, 1.0 / (1.0 + np.exp(-np.abs(ad))),
                   np.exp(-np.abs(ad)) / (1.0 + np.exp(-np.abs(ad))))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _result("sigmoid", out, (a,), bwd)


def softplus(a) -> Tensor:
    """log(1 + e^x), computed stably for large |x|."""
    a = _lift(a)
    ad = a.data
    out = np.logaddexp(0.0, ad)

    def bwd(g):
        s = np.where(ad >= 0, 1.0 / (1.0 + np.exp(-np.abs(ad))),
                     np.exp(-np.abs(ad)) / (1.0 + np.exp(-np.abs(ad))))
        return (g * s,)

    return _result("softplus", out, (a,), bwd)


def leaky_relu(a, slope: float) -> Tensor:
    a = _lift(a)
    ad = a.data
    # arithmetic mask: np.where is an order of magnitude slower than mul here
    coeff = slope + (1.0 - slope) * (ad >= 0)
    out = ad * coeff

    def bwd(g):
        return (g * coeff,)

    return _result("leaky_relu", out, (a,), bwd)


def gelu(a) -> Tensor:
    """GELU with the exact Gaussian-CDF form."""
    a = _lift(a)
    ad = a.data
    cdf = 0.5 * (1.0 + _erf(ad * _INV_SQRT2))
    out = ad * cdf

    def bwd(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * ad * ad)
        return (g * (cdf + ad * pdf),)

    return _result("gelu", out, (a,), bwd)


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    a = _lift(a)
    ad = a.data
    out = np.clip(ad, lo, hi)
    inside = np.ones_like(ad)
    if lo is not None:
        inside = inside * (ad >= lo)
    if hi is not None:
        inside = inside * (ad <= hi)

    def bwd(g):
        return (g * inside,)

    return _result("clamp", out, (a,), bwd)


# ---------------------------------------------------------------------------
# structured ops
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _result("matmul", out, (a, b), bwd)


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose: expects a matrix")
    return _result("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def tsum(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    ad = a.data
    if axis is not None and not -ad.ndim <= axis < ad.ndim:
        raise ShapeError(f"sum: axis {axis} out of range for shape {ad.shape}")
    out = np.sum(ad, axis=axis)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, ad.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), ad.shape).copy(),)

    return _result("sum", out, (a,), bwd)


def tmean(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    ad = a.data
    if axis is not None and not -ad.ndim <= axis < ad.ndim:
        raise ShapeError(f"mean: axis {axis} out of range for shape {ad.shape}")
    out = np.mean(ad, axis=axis)
    n = ad.size if axis is None else ad.shape[axis]

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g / n, ad.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), ad.shape).copy(),)

    return _result("mean", out, (a,), bwd)


def logsumexp(a, axis: int) -> Tensor:
    """Shift-stable log-sum-exp along one axis."""
    a = _lift(a)
    ad = a.data
    if not -ad.ndim <= axis < ad.ndim:
        raise ShapeError(f"logsumexp: axis {axis} out of range for shape {ad.shape}")
    m = np.max(ad, axis=axis, keepdims=True)
    ex = np.exp(ad - m)
    out = np.squeeze(m, axis=axis) + np.log(np.sum(ex, axis=axis))

    def bwd(g):
        soft = ex / np.sum(ex, axis=axis, keepdims=True)
        return (soft * np.expand_dims(g, axis),)

    return _result("logsumexp", out, (a,), bwd)


def concat_rows(tensors) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat_rows: empty input list")
    out = np.concatenate([t.data for t in tensors], axis=0)
    sizes = [t.data.shape[0] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _result("concat_rows", out, tuple(tensors), bwd)


def center_columns(a) -> Tensor:
    """Subtract the per-column batch mean (columns = trailing axis 0 rows)."""
    a = _lift(a)
    ad = a.data
    out = ad - np.mean(ad, axis=0)

    def bwd(g):
        return (g - np.mean(g, axis=0),)

    return _result("center_columns", out, (a,), bwd)


def add_bias(x, b) -> Tensor:
    """Row-broadcast bias add: x[B, d] + b[d]."""
    x, b = _lift(x), _lift(b)
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ShapeError(f"add_bias: {x.data.shape} + {b.data.shape}")
    out = x.data + b.data

    def bwd(g):
        return g, g.sum(axis=0)

    return _result("add_bias", out, (x, b), bwd)


def scale_columns(x, s: np.ndarray) -> Tensor:
    """Multiply columns by an untracked per-column constant."""
    x = _lift(x)
    s = np.asarray(s, dtype=np.float64)
    if x.data.ndim != 2 or s.shape != (x.data.shape[1],):
        raise ShapeError(f"scale_columns: {x.data.shape} * {s.shape}")
    out = x.data * s

    def bwd(g):
        return (g * s,)

    return _result("scale_columns", out, (x,), bwd)


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (eval mode uses these)."""
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.99
    initialized: bool = False

    @classmethod
    def create(cls, dim: int, momentum: float = 0.99) -> "BatchNormState":
        return cls(np.zeros(dim), np.ones(dim), momentum)

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy(),
                              self.momentum, self.initialized)


def batch_norm(x, gamma, beta, state: BatchNormState, mode: str) -> Tensor:
    """Batch normalization over axis 0; `mode` is 'train' or 'eval'.

    Train mode uses batch statistics and updates the running stats in
    `state`; eval mode normalizes with the frozen running stats.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    xd = x.data
    if xd.ndim != 2:
        raise ShapeError("batch_norm: expects a matrix [batch, features]")
    if mode not in ("train", "eval"):
        raise ValueError(f"batch_norm: unknown mode {mode!r}")
    gd, bd = gamma.data, beta.data

    if mode == "train":
        n = xd.shape[0]
        if n < 2:
            raise ShapeError("batch_norm: batch size must be >= 2 in train mode")
        mu = xd.mean(axis=0)
        var = xd.var(axis=0)
        if state.initialized:
            m = state.momentum
            state.running_mean = m * state.running_mean + (1.0 - m) * mu
            state.running_var = m * state.running_var + (1.0 - m) * var
        else:
            state.running_mean = mu.copy()
            state.running_var = var.copy()
            state.initialized = True
        istd = 1.0 / np.sqrt(var + _EPS_BN)
        xhat = (xd - mu) * istd
        out = gd * xhat + bd

        def bwd(g):
            # dx = (gamma * istd / n) * (n g - sum g - xhat * sum(g xhat))
            gsum = np.sum(g, axis=0)
            gx = np.sum(g * xhat, axis=0)
            dx = (gd * istd / n) * (n * g - gsum - xhat * gx)
            return dx, gx, gsum

        return _result("batch_norm", out, (x, gamma, beta), bwd)

    istd = 1.0 / np.sqrt(state.running_var + _EPS_BN)
    xhat = (xd - state.running_mean) * istd
    out = gd * xhat + bd

    def bwd(g):
        return g * gd * istd, np.sum(g * xhat, axis=0), np.sum(g, axis=0)

    return _result("batch_norm", out, (x, gamma, beta), bwd)


def linear_bn_lrelu(x, w, gamma, beta, state: BatchNormState, mode: str,
                    slope: float) -> Tensor:
    """Fused hidden cell: leaky_relu(batch_norm(x @ w)).

    One tape entry instead of three; the linear layer is bias-free because
    batch norm's mean subtraction cancels any bias exactly.
    """
    x, w, gamma, beta = _lift(x), _lift(w), _lift(gamma), _lift(beta)
    xd, wd, gd, bd = x.data, w.data, gamma.data, beta.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[0]:
        raise ShapeError(f"linear_bn_lrelu: {xd.shape} @ {wd.shape}")
    y = xd @ wd
    n = y.shape[0]
    if mode == "train":
        if n < 2:
            raise ShapeError("linear_bn_lrelu: batch size must be >= 2 in train mode")
        mu = y.mean(axis=0)
        y -= mu  # y is owned here; center in place
        var = np.einsum("ij,ij->j", y, y) / n
        if state.initialized:
            m = state.momentum
            state.running_mean = m * state.running_mean + (1.0 - m) * mu
            state.running_var = m * state.running_var + (1.0 - m) * var
        else:
            state.running_mean = mu.copy()
            state.running_var = var.copy()
            state.initialized = True
        istd = 1.0 / np.sqrt(var + _EPS_BN)
        y *= istd
        xhat = y
    elif mode == "eval":
        istd = 1.0 / np.sqrt(state.running_var + _EPS_BN)
        y -= state.running_mean
        y *= istd
        xhat = y
    else:
        raise ValueError(f"linear_bn_lrelu: unknown mode {mode!r}")
    out = xhat * gd
    out += bd
    coeff = slope + (1.0 - slope) * (out >= 0)
    out *= coeff

    if mode == "train":
        def bwd(g):
            gh = g * coeff
            gsum = np.sum(gh, axis=0)
            ggamma = np.einsum("ij,ij->j", gh, xhat)
            gh *= n
            gh -= gsum
            gh -= xhat * ggamma
            gh *= gd * (istd / n)
            return gh @ wd.T, xd.T @ gh, ggamma, gsum
    else:
        def bwd(g):
            gh = g * coeff
            gsum = np.sum(gh, axis=0)
            ggamma = np.einsum("ij,ij->j", gh, xhat)
            gh *= gd * istd
            return gh @ wd.T, xd.T @ gh, ggamma, gsum

    return _result("linear_bn_lrelu", out, (x, w, gamma, beta), bwd)


def pairwise_lp(z, w, beta: float, sigma: np.ndarray) -> Tensor:
    """All-pairs dissimilarity D[i, j] = sum_d (|z[i,d] - w[j,d]| / sigma_d)^beta."""
    z, w = _lift(z), _lift(w)
    zd, wd = z.data, w.data
    if zd.ndim != 2 or wd.ndim != 2 or zd.shape[1] != wd.shape[1]:
        raise ShapeError(f"pairwise_lp: {zd.shape} vs {wd.shape}")
    if beta <= 0:
        raise DomainError("pairwise_lp: beta must be positive")
    inv_sigma = 1.0 / np.asarray(sigma, dtype=np.float64)
    diff = zd[:, None, :] - wd[None, :, :]
    t = np.abs(diff) * inv_sigma
    if beta == 1.0:
        out = t.sum(axis=2)
    else:
        out = (t**beta).sum(axis=2)

    def bwd(g):
        if beta == 1.0:
            a = np.sign(diff) * inv_sigma
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                a = beta * t ** (beta - 1.0)
            a = np.where(np.isfinite(a), a, 0.0) * np.sign(diff) * inv_sigma
        ga = g[:, :, None] * a
        return ga.sum(axis=1), -ga.sum(axis=0)

    return _result("pairwise_lp", out, (z, w), bwd)


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    out = x.data.reshape(shape)
    orig = x.data.shape

    def bwd(g):
        return (g.reshape(orig),)

    return _result("reshape", out, (x,), bwd)


def concat_cols(tensors) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat_cols: empty input list")
    out = np.concatenate([t.data for t in tensors], axis=1)
    sizes = [t.data.shape[1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _result("concat_cols", out, tuple(tensors), bwd)


def pairwise_lp_indexed(z, w, index: np.ndarray, beta: float, sigma: np.ndarray) -> Tensor:
    """Dissimilarities against indexed rows of a pool:
    D[i, k] = sum_d (|z[i,d] - w[index[i,k],d]| / sigma_d)^beta."""
    z, w = _lift(z), _lift(w)
    zd, wd = z.data, w.data
    idx = np.asarray(index, dtype=np.int64)
    if zd.ndim != 2 or wd.ndim != 2 or zd.shape[1] != wd.shape[1]:
        raise ShapeError(f"pairwise_lp_indexed: {zd.shape} vs {wd.shape}")
    if idx.ndim != 2 or idx.shape[0] != zd.shape[0]:
        raise ShapeError(f"pairwise_lp_indexed: index shape {idx.shape}")
    if beta <= 0:
        raise DomainError("pairwise_lp_indexed: beta must be positive")
    inv_sigma = 1.0 / np.asarray(sigma, dtype=np.float64)
    diff = zd[:, None, :] - wd[idx]  # [B, K, n]
    t = np.abs(diff) * inv_sigma
    if beta == 1.0:
        out = t.sum(axis=2)
    else:
        out = (t**beta).sum(axis=2)

    def bwd(g):
        if beta == 1.0:
            a = np.sign(diff) * inv_sigma
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                a = beta * t ** (beta - 1.0)
            a = np.where(np.isfinite(a), a, 0.0) * np.sign(diff) * inv_sigma
        ga = g[:, :, None] * a
        flat_idx = idx.ravel()
        flat_ga = ga.reshape(-1, wd.shape[1])
        gw = np.stack([np.bincount(flat_idx, weights=-flat_ga[:, d],
                                   minlength=wd.shape[0])
                       for d in range(wd.shape[1])], axis=1)
        return ga.sum(axis=1), gw

    return _result("pairwise_lp_indexed", out, (z, w), bwd)


def gather_rows(x, index: np.ndarray) -> Tensor:
    """Select rows by an untracked integer index array (1D or 2D index)."""
    x = _lift(x)
    idx = np.asarray(index, dtype=np.int64)
    out = x.data[idx]
    nrows = x.data.shape[0]
    flat_idx = idx.ravel()

    def bwd(g):
        if x.data.ndim == 1:
            return (np.bincount(flat_idx, weights=g.ravel(), minlength=nrows),)
        gflat = g.reshape(-1, x.data.shape[1])
        gx = np.stack([np.bincount(flat_idx, weights=gflat[:, d], minlength=nrows)
                       for d in range(x.data.shape[1])], axis=1)
        return (gx,)

    return _result("gather_rows", out, (x,), bwd)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor, tape: Tape | None = None,
             check: bool = True) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss for every tracked node on its tape.

    Leaf gradients are validated for finiteness; when one fails, the pass is
    rerun with per-op checks so the error names the offending op.
    """
    if not isinstance(loss, Tensor) or not loss.tracked:
        raise DiffMathError("backward: loss is not a tracked tensor")
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeError("backward: loss must be scalar")
    if not np.isfinite(loss.data):
        raise NumericalError("backward: loss is not finite")
    tape = tape or loss.tape
    if tape is not loss.tape:
        raise DiffMathError("backward: loss does not belong to this tape")

    grads: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
    for op, out_node, in_nodes, bwd in reversed(tape._entries):
        g = grads.get(out_node)
        if g is None:
            continue
        in_grads = bwd(g)
        for nid, ig in zip(in_nodes, in_grads):
            if nid is None or ig is None:
                continue
            acc = grads.get(nid)
            grads[nid] = ig if acc is None else acc + ig
    if check:
        produced = {entry[1] for entry in tape._entries}
        for nid, g in grads.items():
            if nid not in produced and not np.isfinite(np.sum(g)):
                _diagnose_backward(tape, grads, loss)
    return grads


def _diagnose_backward(tape: Tape, grads: dict[int, np.ndarray], loss: Tensor):
    """Replay the reverse pass with per-op checks to name the first bad op."""
    redo: dict[int, np.ndarray] = {loss.node: np.ones_like(loss.data)}
    for op, out_node, in_nodes, bwd in reversed(tape._entries):
        g = redo.get(out_node)
        if g is None:
            continue
        for nid, ig in zip(in_nodes, bwd(g)):
            if nid is None or ig is None:
                continue
            if not np.all(np.isfinite(ig)):
                raise NumericalError(f"backward: non-finite gradient produced by op {op!r}")
            acc = redo.get(nid)
            redo[nid] = ig if acc is None else acc + ig
    raise NumericalError("backward: non-finite leaf gradient")
