"""Latent-space scenarios: declarative specs, exact samplers for the marginal
and the distance-based conditional, and (unnormalized) density evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .rng import Rng

BOX_SIMPLE = "box-simple"
BOX_COMPLEX = "box-complex"
HOLLOW_BALL = "hollow-ball"
CUBE_GRID = "cube-grid"

SCENARIOS = (BOX_SIMPLE, BOX_COMPLEX, HOLLOW_BALL, CUBE_GRID)

MAX_REJECTIONS = 10_000


class SamplerError(RuntimeError):
    """Rejection sampling exceeded the attempt budget."""


class SupportError(ValueError):
    """Point lies outside the scenario support."""


@dataclass(frozen=True)
class LatentSpaceSpec:
    """Latent space S and marginal p(s) for one scenario."""

    n: int
    scenario: str = BOX_SIMPLE
    r_inner: float = 0.5
    r_outer: float = 1.0
    gap: float = 0.3  # cube-grid slab half-width
    rho: float = 0.8  # box-complex pairwise correlation of dims (2k, 2k+1)
    mu: float = 0.5  # box-complex mean
    sbar: float = 0.3  # box-complex per-dim std

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("latent dimension must be >= 1")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario == HOLLOW_BALL and not 0.0 < self.r_inner < self.r_outer:
            raise ValueError("hollow ball needs 0 < r_inner < r_outer")
        if self.scenario == CUBE_GRID and not 0.0 < self.gap < 1.0:
            raise ValueError("cube grid needs gap in (0, 1)")
        if self.scenario == BOX_COMPLEX and not -1.0 < self.rho < 1.0:
            raise ValueError("box complex needs correlation in (-1, 1)")

    @property
    def diameter(self) -> float:
        """Per-axis extent of the support (sets the default sigma scale)."""
        if self.scenario in (BOX_SIMPLE, BOX_COMPLEX):
            return 1.0
        if self.scenario == HOLLOW_BALL:
            return 2.0 * self.r_outer
        return 2.0

    def contains(self, s: np.ndarray) -> np.ndarray:
        """Row-wise support predicate."""
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        if self.scenario in (BOX_SIMPLE, BOX_COMPLEX):
            return np.all((s >= 0.0) & (s <= 1.0), axis=1)
        if self.scenario == HOLLOW_BALL:
            norms = np.linalg.norm(s, axis=1)
            return (norms > self.r_inner) & (norms < self.r_outer)
        return np.all((np.abs(s) > self.gap) & (np.abs(s) <= 1.0), axis=1)


@dataclass(frozen=True)
class ConditionalSpec:
    """Conditional p(s~|s) ~ Q(s~) exp(-sum_i (|s_i - s~_i| / sigma_i)^beta)."""

    beta: float
    sigma: tuple[float, ...]
    q: str = "constant"  # or "checkerboard"
    q_low: float = 0.1

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        sig = tuple(float(x) for x in np.atleast_1d(np.asarray(self.sigma, dtype=np.float64)))
        if any(x <= 0 for x in sig):
            raise ValueError("all sigma_i must be positive")
        object.__setattr__(self, "sigma", sig)
        if self.q not in ("constant", "checkerboard"):
            raise ValueError(f"unknown Q kind {self.q!r}")
        if not 0.0 < self.q_low <= 1.0:
            raise ValueError("checkerboard low value must be in (0, 1]")

    def sigma_vector(self, n: int) -> np.ndarray:
        sig = np.asarray(self.sigma, dtype=np.float64)
        if sig.size == 1:
            return np.full(n, sig[0])
        if sig.size != n:
            raise ValueError(f"sigma has {sig.size} entries for n={n}")
        return sig


def default_conditional(space: LatentSpaceSpec, beta: float, q: str = "constant",
                        q_low: float = 0.1) -> ConditionalSpec:
    """Conditional with the default scale 0.1 * (per-axis support extent)."""
    return ConditionalSpec(beta=beta, sigma=(0.1 * space.diameter,), q=q, q_low=q_low)


@dataclass
class PairBatch:
    """Aligned latent pairs and their mixed observations."""

    s: np.ndarray
    s_tilde: np.ndarray
    x: np.ndarray
    x_tilde: np.ndarray


def checkerboard_color(s: np.ndarray) -> np.ndarray:
    """0 on white cells, 1 on black; cells are half-unit boxes."""
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    return np.floor(2.0 * s).astype(np.int64).sum(axis=1) % 2


def log_q(cond: ConditionalSpec, s: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    if cond.q == "constant":
        return np.zeros(s.shape[0])
    color = checkerboard_color(s)
    return np.where(color == 1, np.log(cond.q_low), 0.0)


def distance(cond: ConditionalSpec, s: np.ndarray, s_tilde: np.ndarray) -> np.ndarray:
    """d(s, s~) = sum_i (|s_i - s~_i| / sigma_i)^beta, row-wise."""
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    s_tilde = np.atleast_2d(np.asarray(s_tilde, dtype=np.float64))
    sig = cond.sigma_vector(s.shape[1])
    t = np.abs(s - s_tilde) / sig
    if cond.beta == 1.0:
        return t.sum(axis=1)
    return (t**cond.beta).sum(axis=1)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_marginal(space: LatentSpaceSpec, size: int, rng: Rng) -> np.ndarray:
    """i.i.d. draws from p(s) for the scenario."""
    if size < 1:
        raise ValueError("size must be >= 1")
    n = space.n
    if space.scenario == BOX_SIMPLE:
        return rng.uniform(size * n).reshape(size, n)
    if space.scenario == CUBE_GRID:
        b = space.gap
        t = rng.uniform(size * n).reshape(size, n) * (2.0 * (1.0 - b))
        low = t < (1.0 - b)
        return np.where(low, -1.0 + t, b + (t - (1.0 - b)))
    if space.scenario == HOLLOW_BALL:
        radius = rng.uniform(size, space.r_inner, space.r_outer)
        direction = rng.normal(size * n).reshape(size, n)
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        while np.any(norms < 1e-12):  # essentially impossible, but stay exact
            bad = norms[:, 0] < 1e-12
            direction[bad] = rng.normal(int(bad.sum()) * n).reshape(-1, n)
            norms = np.linalg.norm(direction, axis=1, keepdims=True)
        return radius[:, None] * direction / norms
    return _sample_box_complex(space, size, rng)


def _box_complex_chol(space: LatentSpaceSpec) -> np.ndarray:
    """Cholesky factor of the block-correlated covariance."""
    n, rho, sd = space.n, space.rho, space.sbar
    cov = np.eye(n)
    for k in range(n // 2):
        cov[2 * k, 2 * k + 1] = rho
        cov[2 * k + 1, 2 * k] = rho
    return np.linalg.cholesky(cov * sd**2)


def _sample_box_complex(space: LatentSpaceSpec, size: int, rng: Rng) -> np.ndarray:
    n = space.n
    chol = _box_complex_chol(space)
    out = np.empty((size, n))
    todo = np.arange(size)
    attempts = 0
    while todo.size:
        attempts += 1
        if attempts > MAX_REJECTIONS:
            raise SamplerError(
                f"box-complex marginal: {todo.size} rows still rejected after "
                f"{MAX_REJECTIONS} attempts")
        z = rng.normal(todo.size * n).reshape(todo.size, n)
        cand = space.mu + z @ chol.T
        ok = np.all((cand >= 0.0) & (cand <= 1.0), axis=1)
        out[todo[ok]] = cand[ok]
        todo = todo[~ok]
    return out


def sample_generalized_normal(cond: ConditionalSpec, size: int, n: int, rng: Rng) -> np.ndarray:
    """Signed per-dim increments |delta_i| = sigma_i * G^(1/beta), G ~ Gamma(1/beta)."""
    sig = cond.sigma_vector(n)
    g = rng.gamma(1.0 / cond.beta, size * n).reshape(size, n)
    signs = np.where(rng.uniform(size * n).reshape(size, n) < 0.5, -1.0, 1.0)
    return signs * sig * g ** (1.0 / cond.beta)


def sample_conditional(space: LatentSpaceSpec, cond: ConditionalSpec, s: np.ndarray,
                       rng: Rng, stats: dict | None = None) -> np.ndarray:
    """Rows distributed as p(s~|s): generalized-normal proposal, then accept
    with probability Q(s + delta) * 1_S(s + delta) / Q_max.

    Each round proposes a widening block of candidates per open row and keeps
    the first acceptable one, which matches one-at-a-time rejection exactly
    (the proposal count below uses the sequential accounting).
    """
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    size, n = s.shape
    out = np.empty_like(s)
    todo = np.arange(size)
    attempts = 0  # sequential proposals consumed by the slowest open row
    proposals = 0
    accepted = 0
    block = 2
    while todo.size:
        if attempts > MAX_REJECTIONS:
            rate = accepted / max(proposals, 1)
            raise SamplerError(
                f"conditional sampler: {todo.size} rows still rejected after "
                f"{MAX_REJECTIONS} proposals per row (acceptance rate ~{rate:.2e})")
        m = todo.size
        delta = sample_generalized_normal(cond, m * block, n, rng)
        cand = s[todo][:, None, :] + delta.reshape(m, block, n)
        ok = space.contains(cand.reshape(-1, n)).reshape(m, block)
        if cond.q == "checkerboard":
            q_val = np.exp(log_q(cond, cand.reshape(-1, n))).reshape(m, block)
            ok &= rng.uniform(m * block).reshape(m, block) < q_val
        hit = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        proposals += int(np.where(hit, first + 1, block).sum())
        accepted += int(hit.sum())
        out[todo[hit]] = cand[hit, first[hit]]
        todo = todo[~hit]
        attempts += block
        block = min(block * 2, 32)
    if stats is not None:
        stats["proposals"] = proposals
        stats["accepted"] = accepted
    return out


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def log_unnormalized_conditional(cond: ConditionalSpec, s: np.ndarray,
                                 s_tilde: np.ndarray,
                                 space: LatentSpaceSpec | None = None) -> np.ndarray:
    """log Q(s~) - d(s, s~); -inf when s~ falls outside the support."""
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    s_tilde = np.atleast_2d(np.asarray(s_tilde, dtype=np.float64))
    vals = log_q(cond, s_tilde) - distance(cond, s, s_tilde)
    if space is not None:
        vals = np.where(space.contains(s_tilde), vals, -np.inf)
    return vals


def _unit_sphere_area(n: int) -> float:
    # surface area of the unit (n-1)-sphere in R^n
    return 2.0 * np.pi ** (n / 2.0) / np.exp(gammaln(n / 2.0))


def log_marginal_density(space: LatentSpaceSpec, s: np.ndarray) -> np.ndarray:
    """Exact log p(s) where tractable; box-complex is up to its truncation
    constant (the rejection mass is not tracked)."""
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    inside = space.contains(s)
    if not np.all(inside):
        raise SupportError("log_marginal_density: point outside support")
    if space.scenario == BOX_SIMPLE:
        return np.zeros(s.shape[0])
    if space.scenario == CUBE_GRID:
        return np.full(s.shape[0], -space.n * np.log(2.0 * (1.0 - space.gap)))
    if space.scenario == HOLLOW_BALL:
        radius = np.linalg.norm(s, axis=1)
        area = _unit_sphere_area(space.n)
        return -(np.log(space.r_outer - space.r_inner) + np.log(area)
                 + (space.n - 1) * np.log(radius))
    # box-complex: untruncated correlated normal, constant untracked
    chol = _box_complex_chol(space)
    diff = s - space.mu
    z = np.linalg.solve(chol, diff.T).T
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * np.sum(z * z, axis=1) - 0.5 * (space.n * np.log(2.0 * np.pi) + logdet)
