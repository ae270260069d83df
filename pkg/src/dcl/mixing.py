"""The unknown generator g: an invertible leaky-ReLU MLP with a condition-number
gate on every weight matrix and an exact layer-wise inverse.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import Rng

COND_LIMIT = 25.0
MAX_DRAWS = 100


class MixerError(RuntimeError):
    pass


@dataclass
class MixerParams:
    weights: list[np.ndarray]  # each [n, n]; rows act on the left: y = x @ W + b
    biases: list[np.ndarray]
    slope: float
    n: int
    m: int
    embed: np.ndarray | None = None  # [n, m] isometric pad when m > n

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def condition_numbers(self) -> list[float]:
        return [float(np.linalg.cond(w)) for w in self.weights]


def _orthogonal(n: int, rng: Rng) -> np.ndarray:
    g = rng.normal(n * n).reshape(n, n)
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))  # canonical sign convention


def build_mixer(n: int, m: int, n_layers: int = 3, rng: Rng | None = None,
                slope: float = 0.2, seed: int = 0) -> MixerParams:
    """Draw orthogonal-then-perturbed square layers, resampling any layer whose
    condition number reaches the gate; deterministic given the seed."""
    if n > m:
        raise MixerError(f"latent dim {n} exceeds observation dim {m}")
    if not 0.0 < slope < 1.0:
        raise MixerError("leaky-ReLU slope must lie in (0, 1) for bijectivity")
    rng = rng if rng is not None else Rng(seed)
    weights, biases = [], []
    for _ in range(n_layers):
        for attempt in range(MAX_DRAWS):
            w = _orthogonal(n, rng) + 0.3 * rng.normal(n * n).reshape(n, n) / np.sqrt(n)
            if np.linalg.cond(w) < COND_LIMIT:
                break
        else:
            raise MixerError(f"no weight matrix with condition number < {COND_LIMIT} "
                             f"in {MAX_DRAWS} draws")
        weights.append(w)
        biases.append(0.1 * rng.normal(n))
    embed = None
    if m > n:
        g = rng.normal(m * n).reshape(m, n)
        q, r = np.linalg.qr(g)
        embed = (q * np.sign(np.diag(r))).T  # [n, m], rows orthonormal
    return MixerParams(weights, biases, slope, n, m, embed)


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def _leaky_inv(y: np.ndarray, slope: float) -> np.ndarray:
    return np.where(y >= 0, y, y / slope)


def mixer_forward(params: MixerParams, s: np.ndarray) -> np.ndarray:
    """Alternating affine / leaky-ReLU layers; no activation after the last."""
    x = np.atleast_2d(np.asarray(s, dtype=np.float64))
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w + b
        if i < last:
            x = _leaky(x, params.slope)
    if params.embed is not None:
        x = x @ params.embed
    return x


def mixer_invert(params: MixerParams, x: np.ndarray) -> np.ndarray:
    """Exact inverse of the square mixing (n = m)."""
    if params.embed is not None:
        raise MixerError("inverse is only defined for square mixing (n = m)")
    y = np.atleast_2d(np.asarray(x, dtype=np.float64))
    last = params.n_layers - 1
    for i in range(last, -1, -1):
        if i < last:
            y = _leaky_inv(y, params.slope)
        w, b = params.weights[i], params.biases[i]
        y = np.linalg.solve(w.T, (y - b).T).T
    return y


def save_mixer(params: MixerParams, path: str | Path) -> None:
    """Binary sidecar: little-endian doubles plus a JSON manifest."""
    path = Path(path)
    blobs, manifest = [], {"n": params.n, "m": params.m, "slope": params.slope,
                           "arrays": []}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        for name, arr in ((f"w{i}", w), (f"b{i}", b)):
            manifest["arrays"].append({"name": name, "shape": list(arr.shape)})
            blobs.append(arr)
    if params.embed is not None:
        manifest["arrays"].append({"name": "embed", "shape": list(params.embed.shape)})
        blobs.append(params.embed)
    flat = np.concatenate([a.ravel() for a in blobs]).astype("<f8")
    path.with_suffix(".bin").write_bytes(flat.tobytes())
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2))


def load_mixer(path: str | Path) -> MixerParams:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    arrays, off = {}, 0
    for entry in manifest["arrays"]:
        size = int(np.prod(entry["shape"]))
        arrays[entry["name"]] = flat[off:off + size].reshape(entry["shape"]).copy()
        off += size
    n_layers = sum(1 for k in arrays if k.startswith("w"))
    return MixerParams(
        weights=[arrays[f"w{i}"] for i in range(n_layers)],
        biases=[arrays[f"b{i}"] for i in range(n_layers)],
        slope=manifest["slope"], n=manifest["n"], m=manifest["m"],
        embed=arrays.get("embed"),
    )
