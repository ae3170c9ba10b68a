"""Norm estimators for discrete solution fields.

Fields follow the solver layout: ``Y`` is ``(M, K+1)`` or ``(M, K+1, n)``
(path, node, component) and ``Z`` is ``(M, K, d)`` or ``(M, K, n, d)`` with
``Z[:, k]`` living on ``[t_k, t_{k+1})``.

Essential suprema become ensemble maxima and suprema over stopping times
become suprema over grid nodes.  Both are lower estimates of the exact norms
and every :class:`NormEstimate` says so in its ``method``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .paths import PathEnsemble
from .regression import Projector, design_matrix

__all__ = ["NormEstimate", "s_inf", "s_p", "h_p", "bmo", "bmo_profile", "exp_moment", "norm_table"]

_GRID_SUP = "ensemble maximum over grid nodes (lower estimate)"


@dataclass(frozen=True)
class NormEstimate:
    """A measured norm with a note on how it was measured.

    ``value`` is ``None`` only when it overflows a double; ``log_value`` is
    then the natural log of the estimate.
    """

    name: str
    value: float | None
    method: str
    log_value: float | None = None
    overflow: bool = False

    def __float__(self):
        return math.inf if self.value is None else float(self.value)

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "log_value": self.log_value,
                "overflow": self.overflow, "method": self.method}


def _pointwise_norm(field: np.ndarray, trailing: int) -> np.ndarray:
    f = np.asarray(field, dtype=float)
    if trailing == 0:
        return np.abs(f)
    axes = tuple(range(f.ndim - trailing, f.ndim))
    return np.sqrt(np.sum(f * f, axis=axes))


def _y_abs(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim < 2 or Y.size == 0:
        raise ValueError("Y field must be (M, K+1) or (M, K+1, n) and nonempty")
    return _pointwise_norm(Y, Y.ndim - 2)


def _z_sq(Z) -> np.ndarray:
    """``|Z_k|^2`` per path and interval, shape ``(M, K)``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim < 3 or Z.size == 0:
        raise ValueError("Z field must be (M, K, d) or (M, K, n, d) and nonempty")
    return np.sum(Z * Z, axis=tuple(range(2, Z.ndim)))


def s_inf(Y) -> float:
    """``max_{m,k} |Y[m, k]|`` (Euclidean over components)."""
    return float(np.max(_y_abs(Y)))


def s_p(Y, p: float) -> float:
    """``(mean_m max_k |Y[m, k]|^p)^(1/p)``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    sup = np.max(_y_abs(Y), axis=1)
    return float(np.mean(sup ** p) ** (1.0 / p))


def h_p(Z, p: float, dt: float) -> float:
    """``(mean_m (sum_k |Z[m, k]|^2 dt)^(p/2))^(1/p)``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    qv = np.sum(_z_sq(Z), axis=1) * dt
    return float(np.mean(qv ** (0.5 * p)) ** (1.0 / p))


def bmo_profile(Z, ensemble: PathEnsemble, degree: int = 4, k0: int = 0) -> np.ndarray:
    """Per-node ``max_m E_{t_k}[sum_{j>=k} |Z_j|^2 dt]`` (``nan`` where skipped).

    ``Z`` covers intervals ``k0 .. k0+K-1`` of the ensemble grid.  Conditional
    expectations are cross-sectional regressions on ``B_{t_k}``; negative
    estimates are floored at zero.
    """
    sq = _z_sq(Z)
    M, K = sq.shape
    if M != ensemble.M or k0 + K > ensemble.N:
        raise ValueError("Z does not match the ensemble")
    dt = ensemble.grid.dt
    tails = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1] * dt
    out = np.full(K, np.nan)
    for j in range(K):
        k = k0 + j
        try:
            proj = Projector.fit(design_matrix(ensemble.values[:, k, :], ensemble.grid.nodes[k], degree))
            est = proj(tails[:, j])
        except (np.linalg.LinAlgError, ValueError) as exc:
            warnings.warn(f"bmo: regression failed at node {k} ({exc}); node skipped", RuntimeWarning,
                          stacklevel=2)
            continue
        out[j] = max(0.0, float(np.max(est)))
    return out


def bmo(Z, ensemble: PathEnsemble, degree: int = 4, k0: int = 0) -> float:
    """``max_k sqrt(max_m E_{t_k}[sum_{j>=k} |Z_j|^2 dt])`` over grid nodes.

    The supremum over stopping times is replaced by one over grid nodes, which
    under-estimates the norm.
    """
    prof = bmo_profile(Z, ensemble, degree, k0)
    if np.all(np.isnan(prof)):
        raise ValueError("bmo: every node regression failed")
    return float(math.sqrt(np.nanmax(prof)))


def exp_moment(samples, p: float = 1.0, gamma: float = 1.0) -> NormEstimate:
    """Monte Carlo ``E[exp(p gamma S)]`` with ``S`` the per-path sup of ``|samples|``.

    ``samples`` may be ``(M,)`` (one value per path, e.g. a terminal value),
    ``(M, K+1)`` or ``(M, K+1, n)``.  The mean is formed in log space; if it
    overflows a double the value is ``None`` and ``overflow`` is set.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.asarray(samples, dtype=float)
    if a.ndim == 1:
        sup = np.abs(a)
    else:
        sup = np.max(_pointwise_norm(a, a.ndim - 2), axis=1)
    log_mean = float(logsumexp(p * gamma * sup) - math.log(sup.size))
    over = log_mean > 709.0
    return NormEstimate(f"exp_moment({p:g})", None if over else math.exp(log_mean),
                        "Monte Carlo mean of exp(p*gamma*sup|.|) over paths, log-sum-exp",
                        log_mean, over)


def norm_table(Y, Z, ensemble: PathEnsemble, p: float = 2.0, gamma: float = 1.0,
               degree: int = 4) -> list[NormEstimate]:
    """The standard set of estimates reported for a solution."""
    dt = ensemble.grid.dt
    return [
        NormEstimate("s_inf", s_inf(Y), _GRID_SUP),
        NormEstimate(f"s_p({p:g})", s_p(Y, p), "path sup over grid nodes, Monte Carlo mean"),
        NormEstimate(f"h_p({p:g})", h_p(Z, p, dt), "left-point Riemann sum, Monte Carlo mean"),
        NormEstimate("bmo", bmo(Z, ensemble, degree),
                     "sup over grid nodes of regressed tail energy (lower estimate)"),
        exp_moment(Y, p, gamma),
    ]
