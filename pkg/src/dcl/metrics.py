"""Identifiability evaluation: R^2 via closed-form linear regression and MCC
via Pearson correlations plus an exact assignment solver.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    r2_per_dim: np.ndarray
    r2_mean: float
    corr: np.ndarray
    permutation: list[int]
    mcc_mean: float
    n_samples: int

    def to_json(self) -> str:
        return json.dumps({
            "r2_mean": self.r2_mean,
            "r2_per_dim": [float(v) for v in self.r2_per_dim],
            "mcc": self.mcc_mean,
            "perm": list(self.permutation),
            "n_samples": self.n_samples,
        })

    def csv_row(self) -> str:
        return f"{self.r2_mean:.6f},{self.mcc_mean:.6f},{self.n_samples}"


def linear_fit_r2(z: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, float]:
    """R^2 per true dimension of the least-squares fit s ~ [z | 1].

    Solved via QR on the augmented design; falls back to a pseudo-inverse
    with a warning when the design is rank deficient.
    """
    z = np.asarray(z, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    n_samples, n_feat = z.shape
    if n_samples <= n_feat + 1:
        raise ValueError("need more samples than features + 1")
    design = np.concatenate([z, np.ones((n_samples, 1))], axis=1)
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if np.any(diag < 1e-10 * max(diag.max(), 1.0)):
        warnings.warn("rank-deficient design; using pseudo-inverse fit")
        coef = np.linalg.pinv(design) @ s
        pred = design @ coef
    else:
        coef = np.linalg.solve(r, q.T @ s)
        pred = design @ coef
    resid = s - pred
    sse = np.sum(resid**2, axis=0)
    sst = np.sum((s - s.mean(axis=0)) ** 2, axis=0)
    r2 = 1.0 - sse / sst
    return r2, float(np.mean(r2))


def correlation_matrix(z: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Pearson correlations; entry (i, j) pairs recovered dim i with true dim j.
    Zero-variance columns produce zero rows/columns with a warning."""
    z = np.asarray(z, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    zc = z - z.mean(axis=0)
    sc = s - s.mean(axis=0)
    z_sd = np.sqrt(np.sum(zc**2, axis=0))
    s_sd = np.sqrt(np.sum(sc**2, axis=0))
    if np.any(z_sd == 0.0) or np.any(s_sd == 0.0):
        warnings.warn("zero-variance column in correlation matrix")
    z_sd = np.where(z_sd == 0.0, 1.0, z_sd)
    s_sd = np.where(s_sd == 0.0, 1.0, s_sd)
    return (zc / z_sd).T @ (sc / s_sd)


def linear_assignment(score: np.ndarray) -> list[int]:
    """Permutation maximizing the total score of a square matrix.

    Shortest-augmenting-path Hungarian algorithm (exact optimum); rows are
    processed in index order and ties resolve to the lowest column index,
    so an all-equal matrix yields the identity.
    """
    score = np.asarray(score, dtype=np.float64)
    n, m = score.shape
    if n != m:
        raise ValueError("assignment expects a square matrix")
    cost = -score
    # potentials over rows / columns, 1-indexed with virtual row/column 0
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    way = np.zeros(n + 1, dtype=np.int64)
    match = np.zeros(n + 1, dtype=np.int64)  # column -> row, 0 = unmatched
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    perm = [0] * n
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    return perm


def mcc(z: np.ndarray, s: np.ndarray) -> tuple[float, list[int]]:
    """Mean of matched absolute Pearson correlations under the assignment that
    maximizes their sum."""
    corr = correlation_matrix(z, s)
    perm = linear_assignment(np.abs(corr))
    matched = [abs(corr[i, perm[i]]) for i in range(corr.shape[0])]
    return float(np.mean(matched)), perm


def evaluate(z: np.ndarray, s: np.ndarray) -> MetricsReport:
    """Full identifiability report for recovered latents z against true s."""
    r2_per_dim, r2_mean = linear_fit_r2(z, s)
    corr = correlation_matrix(z, s)
    perm = linear_assignment(np.abs(corr))
    matched = [abs(corr[i, perm[i]]) for i in range(corr.shape[0])]
    return MetricsReport(
        r2_per_dim=r2_per_dim,
        r2_mean=r2_mean,
        corr=corr,
        permutation=perm,
        mcc_mean=float(np.mean(matched)),
        n_samples=z.shape[0],
    )
