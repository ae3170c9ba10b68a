"""Reference solutions computed without simulation.

Gaussian expectations use Gauss-Hermite quadrature (probabilists' weight) by
default.  Terminal functions with kinks converge slowly under Gauss-Hermite,
so ``breakpoints`` switches to composite Gauss-Legendre on ``[-L, L]`` split at
the kinks.  Every value is computed at ``nodes`` and ``2*nodes`` points and
rejected if the two disagree by more than ``tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp, roots_hermitenorm

__all__ = [
    "QuadratureError",
    "OracleCase",
    "gaussian_log_expectation",
    "gaussian_expectation",
    "cole_hopf_value",
    "pure_quadratic_case",
    "linear_case",
    "deterministic_ode_case",
]

DEFAULT_NODES = 200
_LOG_NORM = 0.5 * math.log(2 * math.pi)


class QuadratureError(ArithmeticError):
    pass


def _rule_1d(nodes: int, breakpoints, half_width: float):
    """Nodes ``x`` and log-weights for integrals against the N(0, 1) density."""
    if breakpoints is None:
        x, w = roots_hermitenorm(nodes)
        keep = w > 0  # far-tail weights underflow at large node counts
        return x[keep], np.log(w[keep]) - _LOG_NORM
    cuts = sorted({-half_width, half_width, *[float(p) for p in breakpoints if abs(p) < half_width]})
    per = max(8, nodes // (len(cuts) - 1))
    gx, gw = leggauss(per)
    xs, lws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        x = mid + rad * gx
        xs.append(x)
        lws.append(np.log(gw * rad) - 0.5 * x * x - _LOG_NORM)
    return np.concatenate(xs), np.concatenate(lws)


def _log_expect_once(log_integrand, d, T, nodes, breakpoints, half_width):
    x, lw = _rule_1d(nodes, breakpoints, half_width)
    s = math.sqrt(T)
    if d == 1:
        vals = np.asarray(log_integrand(s * x[:, None]), dtype=float)
        return float(logsumexp(lw + vals))
    if d == 2:
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        L1, L2 = np.meshgrid(lw, lw, indexing="ij")
        b = s * np.stack([X1.ravel(), X2.ravel()], axis=-1)
        vals = np.asarray(log_integrand(b), dtype=float)
        return float(logsumexp((L1 + L2).ravel() + vals))
    raise ValueError("quadrature oracles support d <= 2 only")


def gaussian_log_expectation(log_integrand: Callable, d: int = 1, T: float = 1.0,
                             nodes: int = DEFAULT_NODES, tol: float = 1e-10,
                             breakpoints: Sequence[float] | None = None,
                             half_width: float = 12.0) -> float:
    """``log E[exp(log_integrand(B_T))]`` with ``B_T ~ N(0, T I_d)``.

    ``log_integrand`` maps ``(K, d)`` points to ``(K,)`` values.
    ``breakpoints`` are given in units of ``B_T / sqrt(T)``.
    """
    a = _log_expect_once(log_integrand, d, T, nodes, breakpoints, half_width)
    b = _log_expect_once(log_integrand, d, T, 2 * nodes, breakpoints, half_width)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise QuadratureError("non-finite quadrature value")
    if abs(a - b) > tol * max(1.0, abs(b)):
        raise QuadratureError(f"quadrature not converged: {a!r} vs {b!r} at {nodes}/{2 * nodes} nodes")
    return b


def gaussian_expectation(integrand: Callable, d: int = 1, T: float = 1.0,
                         nodes: int = DEFAULT_NODES, tol: float = 1e-10,
                         breakpoints: Sequence[float] | None = None,
                         half_width: float = 12.0) -> float:
    """``E[integrand(B_T)]`` for real-valued (possibly signed) integrands."""

    def once(k):
        x, lw = _rule_1d(k, breakpoints, half_width)
        s = math.sqrt(T)
        if d == 1:
            return float(np.sum(np.exp(lw) * np.asarray(integrand(s * x[:, None]), dtype=float)))
        if d == 2:
            X1, X2 = np.meshgrid(x, x, indexing="ij")
            W = np.exp(np.add.outer(lw, lw)).ravel()
            b = s * np.stack([X1.ravel(), X2.ravel()], axis=-1)
            return float(np.sum(W * np.asarray(integrand(b), dtype=float)))
        raise ValueError("quadrature oracles support d <= 2 only")

    a, b = once(nodes), once(2 * nodes)
    if abs(a - b) > tol * max(1.0, abs(b)):
        raise QuadratureError(f"quadrature not converged: {a!r} vs {b!r}")
    return b


def cole_hopf_value(gamma: float, h: Callable, T: float = 1.0, nodes: int = DEFAULT_NODES,
                    tol: float = 1e-10, breakpoints=None) -> float:
    """``(1/gamma) ln E[exp(gamma h(B_T))]`` for scalar ``h`` and ``d = 1``.

    This is ``Y_0`` of the scalar equation with driver ``(gamma/2)|z|^2``;
    negative ``gamma`` gives the concave driver ``-(|gamma|/2)|z|^2``.
    """
    if gamma == 0:
        raise ValueError("gamma must be non-zero")

    def log_integrand(b):
        return gamma * np.asarray(h(b[:, 0]), dtype=float)

    return gaussian_log_expectation(log_integrand, 1, T, nodes, tol, breakpoints) / gamma


@dataclass
class OracleCase:
    """A reference ``Y_0`` per component with its derivation."""

    name: str
    params: dict
    y0: np.ndarray
    method: str
    certifies: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if not np.all(np.isfinite(self.y0)):
            raise QuadratureError(f"{self.name}: non-finite reference value")


def pure_quadratic_case(gammas: Sequence[float], signs: Sequence[int], hs: Sequence[Callable],
                        T: float = 1.0, nodes: int = DEFAULT_NODES, breakpoints=None) -> OracleCase:
    """Diagonal model ``g^i = s_i (gamma_i/2)|z^i|^2`` with ``xi^i = h^i(B_T)``, ``d = 1``.

    ``Y_0^i = (s_i/gamma_i) ln E[exp(s_i gamma_i h^i(B_T))]``.
    """
    if not len(gammas) == len(signs) == len(hs):
        raise ValueError("gammas, signs and hs must have equal length")
    y0 = []
    for g, s, h in zip(gammas, signs, hs):
        if s not in (1, -1):
            raise ValueError("signs must be +1 or -1")
        y0.append(cole_hopf_value(s * g, h, T, nodes, breakpoints=breakpoints))
    return OracleCase("pure_quadratic", {"gammas": list(gammas), "signs": list(signs), "T": T},
                      np.array(y0), "exponential transform + quadrature",
                      "diagonal convex/concave quadratic drivers")


def linear_case(mu, c: float, h: Callable, T: float = 1.0, nodes: int = DEFAULT_NODES,
                breakpoints=None) -> OracleCase:
    """Driver ``f(t, z) = mu . z + c``: ``Y_0 = E[h(B_T + mu T)] + c T``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    d = mu.size
    val = gaussian_expectation(lambda b: h(b + mu * T), d, T, nodes, breakpoints=breakpoints)
    return OracleCase("linear", {"mu": mu.tolist(), "c": c, "T": T}, [val + c * T],
                      "Girsanov shift + quadrature", "drivers linear in z")


def deterministic_ode_case(beta: float, terminal, T: float = 1.0) -> OracleCase:
    """Driver ``g^i = beta y^i`` with constant terminal ``c``: ``Y_t = c e^(beta (T - t))``."""
    c = np.atleast_1d(np.asarray(terminal, dtype=float))
    case = OracleCase("deterministic_ode", {"beta": beta, "terminal": c.tolist(), "T": T},
                      c * math.exp(beta * T), "linear ODE", "Lipschitz coupling in y")
    case.extra["Y"] = lambda t: c * math.exp(beta * (T - t))
    return case
