"""Cross-sectional least-squares regression on polynomial features of B_t.

Features are space-time Hermite polynomials ``H_n(b, t) = t^(n/2) He_n(b/sqrt(t))``,
scaled by ``t^(-n/2)`` for fitting so the design stays well conditioned.
For ``d <= 2`` the basis holds every product of total degree ``<= degree``;
for ``d > 2`` it holds per-coordinate terms up to ``degree`` plus pairwise
products ``b_i b_j``.

``H_n(B_t, t)`` is a martingale, so a fit made at time ``s`` has an exact
conditional expectation at any earlier time (used by the regression-later
scheme of :mod:`diagbsde.scalar_solver`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.special import ndtr

_INV_SQRT_2PI = 0.3989422804014327

__all__ = ["multi_indices", "Basis", "RampFeatures", "design_matrix", "Projector", "project", "RANK_TOL"]

RANK_TOL = 1e-10


def multi_indices(d: int, degree: int) -> list[tuple[int, ...]]:
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if d <= 2:
        out = [a for a in itertools.product(range(degree + 1), repeat=d) if sum(a) <= degree]
        return sorted(out, key=lambda a: (sum(a), [-v for v in a]))
    out = [(0,) * d]
    for j in range(d):
        for p in range(1, degree + 1):
            a = [0] * d
            a[j] = p
            out.append(tuple(a))
    if degree >= 2:
        for i, j in itertools.combinations(range(d), 2):
            a = [0] * d
            a[i] = a[j] = 1
            out.append(tuple(a))
    return out


def _st_hermite(b: np.ndarray, t: float, degree: int) -> np.ndarray:
    # H_0..H_degree at (b, t); H_{n+1} = b H_n - n t H_{n-1}
    tab = np.empty((degree + 1,) + b.shape)
    tab[0] = 1.0
    if degree >= 1:
        tab[1] = b
    for n in range(1, degree):
        tab[n + 1] = b * tab[n] - n * t * tab[n - 1]
    return tab


class Basis:
    """Polynomial feature map for states in ``R^d``."""

    def __init__(self, d: int, degree: int):
        self.d, self.degree = d, degree
        self.alphas = multi_indices(d, degree)
        self.orders = np.array([sum(a) for a in self.alphas], dtype=float)

    def __len__(self):
        return len(self.alphas)

    def raw(self, b: np.ndarray, t: float, grad: int | None = None) -> np.ndarray:
        """Unscaled products of ``H_n(b_j, t)``, or their ``b_grad`` derivative."""
        b = np.asarray(b, dtype=float)
        tab = _st_hermite(b, t, self.degree)
        M = b.shape[0]
        cols = []
        for a in self.alphas:
            col = np.ones(M)
            for j, p in enumerate(a):
                if grad == j:
                    col = col * (p * tab[p - 1, :, j]) if p else col * 0.0
                elif p:
                    col = col * tab[p, :, j]
            cols.append(col)
        return np.stack(cols, axis=1)

    def design(self, b: np.ndarray, t: float) -> np.ndarray:
        """Columns scaled by ``t^(-|a|/2)``; only the constant column at ``t = 0``."""
        b = np.asarray(b, dtype=float)
        if t <= 0:
            return np.ones((b.shape[0], 1))
        return self.raw(b, t) * t ** (-0.5 * self.orders)


class RampFeatures:
    """Gaussian ramps ``Phi((b_j - c) / sqrt(v + s - t))`` anchored at time ``s``.

    Each ramp is a space-time harmonic function up to time ``s``: its value at
    ``(B_t, t)`` is the conditional expectation of its value at ``(B_s, s)``.
    Ramps saturate in the tails, which keeps regression fits bounded where
    polynomials would extrapolate.  Centres sit at ``count`` evenly spaced
    multiples of ``sqrt(s)`` in ``[-3, 3]``; one family per coordinate.
    """

    def __init__(self, d: int, count: int, s: float, spread: float = 3.0):
        self.d, self.count, self.s = d, count, s
        if count < 1 or s <= 0:
            self.centres = np.empty(0)
            self.v = 1.0
        else:
            z = np.linspace(-spread, spread, count) if count > 1 else np.zeros(1)
            self.centres = z * np.sqrt(s)
            step = 2 * spread / max(count - 1, 1)
            self.v = (step * np.sqrt(s)) ** 2

    def __len__(self):
        return self.d * self.centres.size

    def raw(self, b: np.ndarray, t: float, grad: int | None = None) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        M = b.shape[0]
        if not len(self):
            return np.empty((M, 0))
        w = np.sqrt(self.v + self.s - t)
        cols = []
        for j in range(self.d):
            u = (b[:, j, None] - self.centres[None, :]) / w
            if grad is None:
                cols.append(ndtr(u))
            elif grad == j:
                cols.append(np.exp(-0.5 * u * u) * (_INV_SQRT_2PI / w))
            else:
                cols.append(np.zeros_like(u))
        return np.concatenate(cols, axis=1)


def design_matrix(b: np.ndarray, t: float, degree: int) -> np.ndarray:
    """Feature matrix ``(M, p)`` for states ``b`` ``(M, d)`` observed at time ``t``."""
    b = np.asarray(b, dtype=float)
    return Basis(b.shape[1], degree).design(b, t)


@dataclass
class Projector:
    """Orthogonal projector onto the span of the retained design columns.

    Columns are retained by a rank-revealing (column pivoted) QR: a column is
    dropped when its ``|R_ii|`` is below ``RANK_TOL * |R_00|``.
    """

    Q: np.ndarray
    R: np.ndarray
    pivots: np.ndarray
    columns: int
    rank: int
    condition: float

    @classmethod
    def fit(cls, design: np.ndarray, tol: float = RANK_TOL) -> "Projector":
        Q, R, piv = qr(design, mode="economic", pivoting=True, check_finite=False)
        diag = np.abs(np.diag(R))
        if diag.size == 0 or diag[0] == 0:
            raise np.linalg.LinAlgError("empty or zero design matrix")
        rank = int(np.sum(diag > tol * diag[0]))
        cond = float(diag[0] / diag[rank - 1])
        return cls(np.ascontiguousarray(Q[:, :rank]), R[:rank, :rank], piv[:rank],
                   design.shape[1], rank, cond)

    @property
    def deficient(self) -> bool:
        return self.rank < self.columns

    def __call__(self, values: np.ndarray) -> np.ndarray:
        """Fitted values of ``values`` (shape ``(M,)`` or ``(M, k)``)."""
        v = np.asarray(values, dtype=float)
        return self.Q @ (self.Q.T @ v)

    def coef(self, values: np.ndarray) -> np.ndarray:
        """Least-squares coefficients on the full column set (dropped columns get 0)."""
        v = np.asarray(values, dtype=float)
        sol = solve_triangular(self.R, self.Q.T @ v, check_finite=False)
        out = np.zeros((self.columns,) + v.shape[1:])
        out[self.pivots] = sol
        return out


def project(b: np.ndarray, t: float, values: np.ndarray, degree: int = 4) -> np.ndarray:
    """Regression estimate of ``E[values | B_t = b]`` evaluated on the sample."""
    return Projector.fit(design_matrix(b, t, degree))(values)
