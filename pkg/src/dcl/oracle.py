"""Numerical ground truth: the conditional normalizer Z(s), grid targets for
the optimal alpha / alpha~ functions, and exact-expectation minimization of
the contrastive losses on small discrete worlds.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import losses as L
from . import spaces as sp
from .rng import Rng


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# 1D kernel integrals and the normalizer Z(s)
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _gl_panel(f, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.sum(_GL_WEIGHTS * f(mid + half * _GL_NODES)))


def _half_integral(length: float, sigma: float, beta: float, depth: int) -> float:
    """J(L) = integral_0^L exp(-(u/sigma)^beta) du with panels graded toward
    the kink at u = 0 (geometric ratio 1/4)."""
    if length <= 0.0:
        return 0.0

    def f(u):
        return np.exp(-((u / sigma) ** beta))

    edges = [length * 0.25**k for k in range(depth, -1, -1)]
    total = _gl_panel(f, 0.0, edges[0])
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += _gl_panel(f, lo, hi)
    return total


def kernel_integral_1d(a: float, b: float, s: float, sigma: float, beta: float,
                       resolution: int = 12) -> float:
    """integral_a^b exp(-(|t - s| / sigma)^beta) dt, for any anchor s."""
    if b <= a:
        return 0.0
    if s <= a:  # distances run from a-s up to b-s
        return (_half_integral(b - s, sigma, beta, resolution)
                - _half_integral(a - s, sigma, beta, resolution))
    if s >= b:
        return (_half_integral(s - a, sigma, beta, resolution)
                - _half_integral(s - b, sigma, beta, resolution))
    return (_half_integral(s - a, sigma, beta, resolution)
            + _half_integral(b - s, sigma, beta, resolution))


def _axis_intervals(space: sp.LatentSpaceSpec) -> list[tuple[float, float]]:
    if space.scenario in (sp.BOX_SIMPLE, sp.BOX_COMPLEX):
        return [(0.0, 1.0)]
    if space.scenario == sp.CUBE_GRID:
        return [(-1.0, -space.gap), (space.gap, 1.0)]
    raise OracleError(f"no axis decomposition for scenario {space.scenario!r}")


def _split_at_half_cells(interval: tuple[float, float]) -> list[tuple[float, float]]:
    a, b = interval
    cuts = np.arange(np.ceil(2 * a), np.floor(2 * b) + 1) / 2.0
    points = [a] + [c for c in cuts if a < c < b] + [b]
    return list(zip(points[:-1], points[1:]))


def _z_quadrature_box(space: sp.LatentSpaceSpec, cond: sp.ConditionalSpec,
                      s: np.ndarray, resolution: int) -> float:
    """Separable per-cell factorization over box-family supports.

    With a checkerboard Q the per-axis pieces split into even/odd half-cell
    parity sums (E_d, O_d); the parity trick
      sum_even = (prod(E + O) + prod(E - O)) / 2
    avoids enumerating the cells, so any dimension is fine.
    """
    sig = cond.sigma_vector(space.n)
    intervals = _axis_intervals(space)
    if cond.q == "constant":
        total = 1.0
        for d in range(space.n):
            total *= sum(kernel_integral_1d(a, b, s[d], sig[d], cond.beta, resolution)
                         for a, b in intervals)
        return total
    even = np.empty(space.n)
    odd = np.empty(space.n)
    for d in range(space.n):
        e_sum = o_sum = 0.0
        for interval in intervals:
            for a, b in _split_at_half_cells(interval):
                val = kernel_integral_1d(a, b, s[d], sig[d], cond.beta, resolution)
                if int(np.floor(2.0 * 0.5 * (a + b))) % 2 == 0:
                    e_sum += val
                else:
                    o_sum += val
        even[d] = e_sum
        odd[d] = o_sum
    sum_all = np.prod(even + odd)
    sum_signed = np.prod(even - odd)
    z_even = 0.5 * (sum_all + sum_signed)
    z_odd = 0.5 * (sum_all - sum_signed)
    return float(z_even + cond.q_low * z_odd)


def _z_quadrature_ball(space: sp.LatentSpaceSpec, cond: sp.ConditionalSpec,
                       s: np.ndarray, resolution: int) -> float:
    """Polar quadrature over the 2D annulus; theta splits at the kink angles
    of the per-coordinate distances."""
    if space.n != 2:
        raise OracleError("hollow-ball normalizer implemented for n = 2 only")
    if cond.q != "constant":
        raise OracleError("hollow-ball normalizer needs a constant Q")
    sig = cond.sigma_vector(2)
    beta = cond.beta
    sx, sy = float(s[0]), float(s[1])

    def theta_integral(rho: float) -> float:
        cuts = {0.0, 2.0 * np.pi}
        if abs(sx) <= rho:
            t = np.arccos(sx / rho)
            cuts.update({t % (2 * np.pi), (2 * np.pi - t) % (2 * np.pi)})
        if abs(sy) <= rho:
            t = np.arcsin(sy / rho)
            cuts.update({t % (2 * np.pi), (np.pi - t) % (2 * np.pi)})
        edges = sorted(cuts)
        if edges[-1] < 2.0 * np.pi:
            edges.append(2.0 * np.pi)

        def f(theta):
            x = rho * np.cos(theta)
            y = rho * np.sin(theta)
            d = (np.abs(x - sx) / sig[0]) ** beta + (np.abs(y - sy) / sig[1]) ** beta
            return np.exp(-d)

        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            width = b - a
            panels = max(2, resolution // 3)
            for p in range(panels):
                total += _gl_panel(f, a + width * p / panels,
                                   a + width * (p + 1) / panels)
        return total

    radial_cuts = sorted({space.r_inner, space.r_outer}
                         | {v for v in (abs(sx), abs(sy), float(np.hypot(sx, sy)))
                            if space.r_inner < v < space.r_outer})
    total = 0.0
    for a, b in zip(radial_cuts[:-1], radial_cuts[1:]):
        width = b - a
        panels = max(2, resolution // 2)
        for p in range(panels):
            lo = a + width * p / panels
            hi = a + width * (p + 1) / panels
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            rho_nodes = mid + half * _GL_NODES
            vals = np.array([theta_integral(r) * r for r in rho_nodes])
            total += half * float(np.sum(_GL_WEIGHTS * vals))
    return total


def z_closed_form_box_laplace(cond: sp.ConditionalSpec, s: np.ndarray) -> float:
    """Z(s) = prod_i sigma_i (2 - e^{-s_i/sigma_i} - e^{-(1-s_i)/sigma_i})
    for the unit box, beta = 1, constant Q."""
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    sig = cond.sigma_vector(s.size)
    return float(np.prod(sig * (2.0 - np.exp(-s / sig) - np.exp(-(1.0 - s) / sig))))


def z_normalizer(space: sp.LatentSpaceSpec, cond: sp.ConditionalSpec, s,
                 resolution: int = 12) -> float:
    """Conditional normalizer Z(s) = integral_S Q(s~) e^{-d(s, s~)} ds~."""
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    if s.size != space.n:
        raise OracleError(f"point has {s.size} dims, space has {space.n}")
    if space.scenario == sp.BOX_SIMPLE and cond.beta == 1.0 and cond.q == "constant":
        return z_closed_form_box_laplace(cond, s)
    if space.scenario == sp.HOLLOW_BALL:
        return _z_quadrature_ball(space, cond, s, resolution)
    return _z_quadrature_box(space, cond, s, resolution)


# ---------------------------------------------------------------------------
# alpha / alpha~ optimality targets on a grid
# ---------------------------------------------------------------------------

@dataclass
class AlphaTargetGrid:
    points: np.ndarray  # [G, n]
    target_alpha: np.ndarray  # log Z(s) per point
    target_alpha_tilde: np.ndarray  # log p(s) - log Q(s) per point
    resolution: int


def grid_points(space: sp.LatentSpaceSpec, resolution: int) -> np.ndarray:
    """Cell-center grid over the support's bounding box, filtered to the
    support; n <= 2."""
    if space.n > 2:
        raise OracleError("target grids support n <= 2")
    if space.scenario in (sp.BOX_SIMPLE, sp.BOX_COMPLEX):
        lo, hi = 0.0, 1.0
    elif space.scenario == sp.CUBE_GRID:
        lo, hi = -1.0, 1.0
    else:
        lo, hi = -space.r_outer, space.r_outer
    axis = lo + (hi - lo) * (np.arange(resolution) + 0.5) / resolution
    if space.n == 1:
        pts = axis[:, None]
    else:
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return pts[space.contains(pts)]


def alpha_targets(space: sp.LatentSpaceSpec, cond: sp.ConditionalSpec,
                  resolution: int = 20, quad_resolution: int = 12) -> AlphaTargetGrid:
    """Per-point ground truth: alpha -> log Z, alpha~ -> log p - log Q."""
    pts = grid_points(space, resolution)
    t_alpha = np.array([np.log(z_normalizer(space, cond, p, quad_resolution))
                        for p in pts])
    t_alpha_tilde = sp.log_marginal_density(space, pts) - sp.log_q(cond, pts)
    return AlphaTargetGrid(points=pts, target_alpha=t_alpha,
                           target_alpha_tilde=t_alpha_tilde, resolution=resolution)


def compare_alpha(learned: np.ndarray, target: np.ndarray) -> dict:
    """Max abs deviation after removing the best constant offset
    (least-squares fit of a constant); the offset itself is reported."""
    learned = np.asarray(learned, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    offset = float(np.mean(learned - target))
    dev = np.abs(learned - target - offset)
    return {"offset": offset, "max_abs_dev": float(np.max(dev)),
            "rms_dev": float(np.sqrt(np.mean(dev**2)))}


# ---------------------------------------------------------------------------
# discrete worlds: exact-expectation loss minimization (finite outcome sets)
# ---------------------------------------------------------------------------

@dataclass
class DiscreteWorld:
    """Finite joint of positive pairs plus a full-support negative marginal."""

    p_pos: np.ndarray  # [M, M] joint, sums to 1
    p_neg: np.ndarray  # [M]

    def __post_init__(self):
        self.p_pos = np.asarray(self.p_pos, dtype=np.float64)
        self.p_neg = np.asarray(self.p_neg, dtype=np.float64)
        m = self.p_pos.shape[0]
        if self.p_pos.shape != (m, m):
            raise ValueError("p_pos must be square")
        if np.any(self.p_pos < 0) or abs(self.p_pos.sum() - 1.0) > 1e-12:
            raise ValueError("p_pos must be a distribution")
        if (self.p_neg.shape != (m,) or np.any(self.p_neg <= 0)
                or abs(self.p_neg.sum() - 1.0) > 1e-12):
            raise ValueError("p_neg must be a full-support distribution")

    @property
    def m(self) -> int:
        return self.p_pos.shape[0]

    @property
    def p_x(self) -> np.ndarray:
        return self.p_pos.sum(axis=1)

    @property
    def p_x_tilde(self) -> np.ndarray:
        return self.p_pos.sum(axis=0)


def random_world(rng: Rng, m: int, neg_source: str | None = None) -> DiscreteWorld:
    """Random world with probabilities bounded away from zero; the negative
    marginal is one of {first, second, mixture} of the pair marginals."""
    raw = rng.uniform(m * m, 0.2, 1.0).reshape(m, m)
    p_pos = raw / raw.sum()
    if neg_source is None:
        neg_source = ("first", "second", "mixture")[int(rng.uniform(1)[0] * 3) % 3]
    p_x = p_pos.sum(axis=1)
    p_xt = p_pos.sum(axis=0)
    if neg_source == "first":
        p_neg = p_x
    elif neg_source == "second":
        p_neg = p_xt
    else:
        p_neg = 0.5 * (p_x + p_xt)
    return DiscreteWorld(p_pos=p_pos, p_neg=p_neg.copy())


def closed_form_table(world: DiscreteWorld) -> np.ndarray:
    """psi* = log p(x~|x) - log p_neg(x~) (the optimality target)."""
    cond = world.p_pos / world.p_x[:, None]
    return np.log(cond) - np.log(world.p_neg)[None, :]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def make_exact_loss(world: DiscreteWorld, kind: str, k: int = 1):
    """Return f(psi) -> (loss, grad) for the exact-expectation objective."""
    w_pos = world.p_pos
    w_neg = np.outer(world.p_x, world.p_neg)

    if kind == L.DELTA_NCE:
        def f(psi):
            loss = np.sum(w_pos * _softplus(-psi)) + np.sum(w_neg * _softplus(psi))
            grad = -w_pos * _sigmoid(-psi) + w_neg * _sigmoid(psi)
            return loss, grad
        return f

    if kind == L.DELTA_SCL:
        def f(psi):
            e1 = np.exp(psi)
            e2 = np.exp(2.0 * psi)
            loss = np.sum(w_pos * (-2.0 * e1)) + np.sum(w_neg * e2)
            grad = -2.0 * w_pos * e1 + 2.0 * w_neg * e2
            return loss, grad
        return f

    if kind == L.DELTA_NWJ:
        def f(psi):
            e1 = np.exp(psi)
            loss = np.sum(w_pos * (-psi)) + np.sum(w_neg * e1)
            grad = -w_pos + w_neg * e1
            return loss, grad
        return f

    if kind == L.DELTA_INCE:
        if k < 1:
            raise ValueError("delta-ince needs k >= 1")
        m = world.m
        tuples = np.array(list(itertools.product(range(m), repeat=k + 1)),
                          dtype=np.int64)  # [T, k+1]; column 0 is the positive
        t_count = tuples.shape[0]
        # tuple weights per anchor: p_pos[a, b0] * prod_i p_neg[b_i]
        w_negp = np.prod(world.p_neg[tuples[:, 1:]], axis=1)  # [T]
        weights = world.p_pos[:, tuples[:, 0]] * w_negp[None, :]  # [M, T]
        rows_flat = np.repeat(np.arange(m), t_count * (k + 1))
        cols_flat = np.broadcast_to(tuples, (m, t_count, k + 1)).ravel()
        lin = rows_flat * m + cols_flat

        def f(psi):
            scores = psi[:, tuples]  # [M, T, k+1]
            mx = scores.max(axis=2, keepdims=True)
            ex = np.exp(scores - mx)
            denom = ex.sum(axis=2, keepdims=True)
            lse = mx[:, :, 0] + np.log(denom[:, :, 0])
            loss = np.sum(weights * (lse - scores[:, :, 0]))
            soft = ex / denom
            coeff = weights[:, :, None] * soft
            coeff[:, :, 0] -= weights
            grad = np.bincount(lin, weights=coeff.ravel(),
                               minlength=m * m).reshape(m, m)
            return loss, grad
        return f

    raise ValueError(f"no exact-expectation objective for {kind!r}")


def discrete_loss_minimizer(world: DiscreteWorld, kind: str, k: int = 1,
                            tol: float = 1e-10,
                            max_steps: int = 1_000_000) -> np.ndarray:
    """Minimize the exact-expectation loss over the free score table by
    gradient descent until the gradient norm falls below `tol`.

    Steps use the Barzilai-Borwein size with Armijo backtracking while the
    predicted decrease is measurable in double precision; below that floor
    the raw BB step is taken (it only needs gradients, which stay accurate
    long after loss differences round to zero).
    """
    f = make_exact_loss(world, kind, k)
    psi = np.zeros((world.m, world.m))
    loss, grad = f(psi)
    step = 0.1 / max(float(np.linalg.norm(grad)), 1.0)
    prev_psi = None
    prev_grad = None
    for _ in range(max_steps):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return psi
        if prev_psi is not None:
            dpsi = psi - prev_psi
            dgrad = grad - prev_grad
            denom = float(np.sum(dpsi * dgrad))
            if denom > 0:
                step = float(np.sum(dpsi * dpsi)) / denom
            step = min(max(step, 1e-12), 1e8)
        t = step
        measurable = 1e-13 * (1.0 + abs(loss))
        for _ in range(200):
            cand = psi - t * grad
            cand_loss, cand_grad = f(cand)
            if t * gnorm**2 < measurable:
                break  # decrease unmeasurable: trust the gradient step
            if cand_loss <= loss - 1e-4 * t * gnorm**2:
                break
            t *= 0.5
        else:
            raise OracleError("line search failed (loss landscape too stiff)")
        prev_psi, prev_grad = psi, grad
        psi, loss, grad = cand, cand_loss, cand_grad
    raise OracleError(f"no convergence to grad norm {tol} in {max_steps} steps")


def center_rows(table: np.ndarray) -> np.ndarray:
    """Remove the per-row gauge freedom (the InfoNCE per-anchor constant)."""
    return table - table.mean(axis=1, keepdims=True)


def second_order_check(world: DiscreteWorld, kind: str, psi_star: np.ndarray,
                       k: int = 1, n_dirs: int = 100, eps: float = 1e-4,
                       seed: int = 0) -> bool:
    """Perturbing the minimizer in random directions never decreases the loss."""
    f = make_exact_loss(world, kind, k)
    base, _ = f(psi_star)
    rng = Rng(seed)
    m = world.m
    for _ in range(n_dirs):
        eta = rng.normal(m * m).reshape(m, m)
        eta /= np.linalg.norm(eta)
        up, _ = f(psi_star + eps * eta)
        if up < base - 1e-12:
            return False
    return True
