"""Scalar quadratic BSDEs by backward least-squares Monte Carlo.

Solves ``Y_t = eta + int_t^T f(s, Z_s) ds - int_t^T Z_s dB_s`` on a path
ensemble with the explicit scheme

    Z_k = E_k[Y_{k+1} dB_k] / dt
    Y_k = E_k[Y_{k+1}] + f(t_k, B_k, Y_k, Z_k) dt

Conditional expectations come from the regressions of
:mod:`diagbsde.regression`.  The default ``scheme="later"`` fits
``Y_{k+1}`` on polynomials of ``B_{k+1}`` and takes their conditional mean
and Stein derivative exactly; only the fit residual is regressed on
``B_k``.  ``scheme="now"`` regresses everything on ``B_k``.  When the
driver reads the current ``y`` (``uses_y``), ``Y_k`` is found by
``inner_iters`` fixed-point sweeps.  The module also evaluates the a priori
bounds satisfied by bounded solutions.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .constants import DeskScaleOverflow, c_delta_lambda_n
from .generator import StructuralConstants
from .oracle import cole_hopf_value
from .paths import PathEnsemble
from .regression import Basis, Projector, design_matrix, RampFeatures

__all__ = [
    "ScalarDriver",
    "SolverOptions",
    "ScalarSolution",
    "ScalarDivergence",
    "solve_scalar",
    "cole_hopf_oracle",
    "apriori_A2",
    "apriori_A3",
    "alpha_tail",
    "apriori_A34_exponential",
    "LemmaA2Result",
    "lemma_A2_bounds",
]

log = logging.getLogger(__name__)


@dataclass
class ScalarDriver:
    """``fn(k, t, b, y, z)`` with ``b``, ``z`` of shape ``(M, d)`` and ``y`` ``(M,)``.

    ``k`` is the global grid index so frozen fields can be looked up.
    """

    fn: Callable
    uses_y: bool = False
    gamma: float | None = None
    name: str = "driver"

    def __call__(self, k, t, b, y, z):
        return self.fn(k, t, b, y, z)

    @classmethod
    def from_z(cls, f: Callable, **kw) -> "ScalarDriver":
        """Wrap ``f(t, z)``."""
        return cls(lambda k, t, b, y, z: f(t, z), **kw)

    @classmethod
    def zero(cls) -> "ScalarDriver":
        return cls(lambda k, t, b, y, z: np.zeros(z.shape[0]), name="zero")

    @classmethod
    def quadratic(cls, gamma: float, sign: int = 1) -> "ScalarDriver":
        return cls(lambda k, t, b, y, z: sign * 0.5 * gamma * np.sum(z * z, axis=-1),
                   gamma=gamma, name=f"quadratic({sign:+d})")

    @classmethod
    def linear(cls, mu, c: float = 0.0) -> "ScalarDriver":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return cls(lambda k, t, b, y, z: z @ mu + c, name="linear")


@dataclass
class SolverOptions:
    """Knobs for :func:`solve_scalar`.

    Attributes
    ----------
    basis_degree : int
        Total degree of the space-time Hermite basis.
    inner_iters : int
        Fixed-point sweeps for the implicit ``y`` argument of the driver.
    z_clip, bmo_bound : float, optional
        Row-norm cap for ``Z``; ``bmo_bound`` gives ``5 * bmo_bound / sqrt(dt)``.
    bound : float, optional
        A priori ``sup |Y|``; exceeding ten times it aborts the solve.
    scheme : {"later", "now"}
        Regress the next value on the next state and take exact conditional
        expectations of the basis ("later"), or regress on the current state.
    ramps : int
        Gaussian ramp features per coordinate added to the "later" fit.
    tail_q, tail_factor : float
        Paths with a coordinate outside the ``[tail_q, 1 - tail_q]`` sample
        quantiles get ``|Z|`` capped at ``tail_factor`` times the largest
        ``|Z|`` on the remaining paths.  Extrapolated gradients on the few
        extreme paths otherwise feed back through a quadratic driver.
        ``tail_q = 0`` disables the cap.
    """

    basis_degree: int = 4
    inner_iters: int = 3
    z_clip: float | None = None
    bound: float | None = None
    bmo_bound: float | None = None
    scheme: str = "later"
    ramps: int = 7
    tail_q: float = 0.002
    tail_factor: float = 1.0

    def __post_init__(self):
        if self.scheme not in ("later", "now"):
            raise ValueError("scheme must be 'later' or 'now'")
        if self.basis_degree < 1:
            raise ValueError("basis_degree must be >= 1")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")
        if not 0.0 <= self.tail_q < 0.5:
            raise ValueError("tail_q must lie in [0, 0.5)")
        if self.tail_factor <= 0:
            raise ValueError("tail_factor must be positive")

    def clip_level(self, dt: float) -> float:
        if self.z_clip is not None:
            return float(self.z_clip)
        if self.bmo_bound is not None:
            return 5.0 * self.bmo_bound / math.sqrt(dt)
        return 1e3


@dataclass
class ScalarSolution:
    """Fields on nodes ``k0..k1`` of the ensemble grid.

    ``Y`` has shape ``(M, k1 - k0 + 1)``; ``Z`` has shape ``(M, k1 - k0, d)``
    and ``Z[:, j]`` lives on the interval ``[t_{k0+j}, t_{k0+j+1})``.
    """

    Y: np.ndarray
    Z: np.ndarray
    k0: int
    k1: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def Y0(self) -> float:
        return float(np.mean(self.Y[:, 0]))


class ScalarDivergence(RuntimeError):
    def __init__(self, k, value, bound):
        super().__init__(f"|Y| reached {value:.4g} at node {k}, above 10x the a priori bound {bound:.4g}")
        self.k, self.value, self.bound = k, value, bound


def _terminal_values(terminal, ensemble: PathEnsemble, k1: int) -> np.ndarray:
    if callable(terminal):
        vals = terminal(ensemble.values[:, k1, :])
    else:
        vals = terminal
    vals = np.array(vals, dtype=float).reshape(-1)
    if vals.shape != (ensemble.M,):
        raise ValueError(f"terminal must give one value per path, got shape {vals.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("terminal values must be finite")
    return vals


def _clip_rows(z: np.ndarray, level: float) -> tuple[np.ndarray, int]:
    norms = np.sqrt(np.sum(z * z, axis=-1))
    over = norms > level
    if not np.any(over):
        return z, 0
    z = z.copy()
    z[over] *= (level / norms[over])[:, None]
    return z, int(np.sum(over))


def _clip_tails(z: np.ndarray, b: np.ndarray, q: float, factor: float) -> tuple[np.ndarray, int]:
    # cap |Z| on extreme states at factor * (largest |Z| on the interior paths)
    lo, hi = np.quantile(b, [q, 1 - q], axis=0)
    inner = np.all((b >= lo) & (b <= hi), axis=1)
    if not np.any(inner) or np.all(inner):
        return z, 0
    level = factor * float(np.max(np.sqrt(np.sum(z[inner] ** 2, axis=-1))))
    return _clip_rows(z, level) if level > 0 else (z, 0)


def solve_scalar(driver: ScalarDriver, terminal, ensemble: PathEnsemble,
                 opts: SolverOptions | None = None, k0: int = 0, k1: int | None = None) -> ScalarSolution:
    """Backward regression solve on nodes ``k0..k1`` (default the whole grid).

    Parameters
    ----------
    driver : ScalarDriver
    terminal : callable or array
        ``eta(B_{t_k1})`` as a function of the state ``(M, d)`` or one value
        per path (used when stitching intervals).
    ensemble : PathEnsemble
    opts : SolverOptions, optional

    Returns
    -------
    ScalarSolution
        ``Y[:, -1]`` equals the terminal values exactly.
    """
    opts = opts or SolverOptions()
    k1 = ensemble.N if k1 is None else k1
    if not 0 <= k0 < k1 <= ensemble.N:
        raise ValueError(f"bad node range {k0}..{k1}")
    M, d = ensemble.M, ensemble.d
    dt = ensemble.grid.dt
    nodes = ensemble.grid.nodes
    B = ensemble.values
    level = opts.clip_level(dt)
    basis = Basis(d, opts.basis_degree)
    Y = np.empty((M, k1 - k0 + 1))
    Z = np.empty((M, k1 - k0, d))
    Y[:, -1] = _terminal_values(terminal, ensemble, k1)
    ranks, conds, resid, clipped, tail_clipped = [], [], [], 0, 0
    deficient = 0
    for k in range(k1 - 1, k0 - 1, -1):
        j = k - k0
        t = nodes[k]
        b = B[:, k, :]
        dB = B[:, k + 1, :] - b
        y_next = Y[:, j + 1]
        proj = Projector.fit(basis.design(b, t))
        if proj.deficient and t > 0:
            deficient += 1
        if opts.scheme == "later":
            s = nodes[k + 1]
            ramps = RampFeatures(d, opts.ramps, s)
            later = Projector.fit(np.hstack([basis.design(B[:, k + 1, :], s),
                                             ramps.raw(B[:, k + 1, :], s)]))
            coef = later.coef(y_next)
            rc, coef = coef[len(basis):], coef[:len(basis)] * s ** (-0.5 * basis.orders)
            r = y_next - later(y_next)
            ey = basis.raw(b, t) @ coef + proj(r)
            z = np.stack([basis.raw(b, t, grad=c) @ coef for c in range(d)], axis=1)
            z = z + proj(r[:, None] * dB) / dt
            if rc.size:
                ey = ey + ramps.raw(b, t) @ rc
                z = z + np.stack([ramps.raw(b, t, grad=c) @ rc for c in range(d)], axis=1)
        else:
            ey = proj(y_next)
            r = y_next - ey
            z = proj(r[:, None] * dB) / dt
        z, c = _clip_rows(z, level)
        clipped += c
        if opts.tail_q > 0 and t > 0:
            z, c = _clip_tails(z, b, opts.tail_q, opts.tail_factor)
            tail_clipped += c
        y = ey
        sweeps = opts.inner_iters if driver.uses_y else 1
        for _ in range(sweeps):
            y = ey + np.asarray(driver(k, t, b, y, z), dtype=float) * dt
        if not np.all(np.isfinite(y)):
            raise ScalarDivergence(k, math.inf, opts.bound if opts.bound is not None else math.nan)
        if opts.bound is not None:
            top = float(np.max(np.abs(y)))
            if top > 10.0 * opts.bound:
                raise ScalarDivergence(k, top, opts.bound)
        Y[:, j] = y
        Z[:, j] = z
        ranks.append(proj.rank)
        conds.append(proj.condition)
        resid.append(float(np.sqrt(np.mean(r * r))))
    if deficient:
        warnings.warn(f"regression dropped dependent columns at {deficient} steps", RuntimeWarning,
                      stacklevel=2)
    diag = {
        "rank": ranks[::-1],
        "condition": conds[::-1],
        "residual_rms": resid[::-1],
        "z_clip": level,
        "clipped": clipped,
        "tail_clipped": tail_clipped,
        "deficient_steps": deficient,
    }
    return ScalarSolution(Y, Z, k0, k1, diag)


def cole_hopf_oracle(gamma: float, h: Callable, T: float = 1.0, quadrature: int = 200,
                     breakpoints=None) -> float:
    """``Y_0`` for the driver ``(gamma/2)|z|^2`` and terminal ``h(B_T)``, ``d = 1``."""
    return cole_hopf_value(gamma, h, T, quadrature, breakpoints=breakpoints)


# ---------------------------------------------------------------------------
# a priori bounds


def _eta_alpha(c: StructuralConstants, eta_sup, alpha_int):
    return (c.C1 if eta_sup is None else float(eta_sup),
            c.C2 if alpha_int is None else float(alpha_int))


def apriori_A2(c: StructuralConstants, U_sup: float, V_bmo: float, t: float,
               eta_sup: float | None = None, alpha_int: float | None = None) -> float:
    """Sup bound on ``|Y_t|`` for bounded data.

    ``(1/g) ln 2 + |eta| + int alpha + phi(U)(T-t) + g^((1+d)/(1-d)) C V^(2(1+d)/(1-d)) (T-t)``
    with ``|eta|`` and ``int alpha`` defaulting to ``C1`` and ``C2``.
    """
    if U_sup < 0 or V_bmo < 0 or not 0 <= t <= c.T + 1e-12:
        raise ValueError("need U_sup, V_bmo >= 0 and 0 <= t <= T")
    eta, a = _eta_alpha(c, eta_sup, alpha_int)
    e = (1 + c.delta) / (1 - c.delta)
    cdl = c_delta_lambda_n(c.delta, c.lam, c.n)
    h = max(c.T - t, 0.0)
    vterm = c.gamma ** e * cdl * V_bmo ** (2 * e) * h if cdl else 0.0
    return math.log(2.0) / c.gamma + eta + a + float(c.phi(U_sup)) * h + vterm


def apriori_A3(c: StructuralConstants, U_sup: float, V_bmo: float, Y_sup: float, t: float,
               eta_sup: float | None = None, alpha_int: float | None = None) -> float:
    """Bound on ``E_tau[int_tau^T |Z|^2 ds]`` (the squared BMO norm)."""
    if min(U_sup, V_bmo, Y_sup) < 0:
        raise ValueError("inputs must be non-negative")
    eta, a = _eta_alpha(c, eta_sup, alpha_int)
    g = c.gamma
    e = (1 + c.delta) / (1 - c.delta)
    cdl = c_delta_lambda_n(c.delta, c.lam, c.n)
    h = max(c.T - t, 0.0)
    if 2 * g * max(eta, Y_sup) > 709.0:
        raise DeskScaleOverflow("apriori_A3", 2 * g * max(eta, Y_sup))
    vterm = 2 * cdl * V_bmo ** (2 * e) * h if cdl else 0.0
    return (math.exp(2 * g * eta) / g ** 2
            + math.exp(2 * g * Y_sup) / g * (1 + 2 * a + 2 * float(c.phi(U_sup)) * h + vterm))


def alpha_tail(alpha_values: np.ndarray, dt: float) -> np.ndarray:
    """Tail integrals ``int_{t_k}^T alpha ds`` per path from node values ``(M, N+1)``.

    Left-point rule, matching the explicit scheme.
    """
    a = np.asarray(alpha_values, dtype=float)
    inc = a[:, :-1] * dt
    tail = np.zeros_like(a)
    tail[:, :-1] = np.cumsum(inc[:, ::-1], axis=1)[:, ::-1]
    return tail


def _expect_later(ensemble: PathEnsemble, k: int, values: np.ndarray, degree: int,
                  ramps: int = 9, spread: float = 4.0) -> np.ndarray:
    """``E_{t_k}[values]`` for ``values`` measurable at ``t_{k+1}``.

    Same estimator as the "later" scheme of :func:`solve_scalar`: fit on the
    state at ``t_{k+1}``, take exact conditional expectations of the basis,
    and add the regress-now projection of the fit residual.
    """
    d = ensemble.d
    t, s = ensemble.grid.nodes[k], ensemble.grid.nodes[k + 1]
    b, bn = ensemble.values[:, k, :], ensemble.values[:, k + 1, :]
    basis, rf = Basis(d, degree), RampFeatures(d, ramps, s, spread)
    later = Projector.fit(np.hstack([basis.design(bn, s), rf.raw(bn, s)]))
    coef = later.coef(values)
    rc, coef = coef[len(basis):], coef[:len(basis)] * s ** (-0.5 * basis.orders)
    r = values - later(values)
    out = basis.raw(b, t) @ coef + Projector.fit(basis.design(b, t))(r)
    if rc.size:
        out = out + rf.raw(b, t) @ rc
    return out


def _log_conditional(ensemble: PathEnsemble, log_payoff: np.ndarray, degree: int) -> np.ndarray:
    """``log E_{t_k}[exp(log_payoff[:, k])]`` per path for every node ``k``.

    Backward recursion through the tower property.  The increments
    ``log_payoff[:, k] - log_payoff[:, k+1]`` must be known at ``t_k``, which
    holds for left-point tail integrals such as :func:`alpha_tail`.
    """
    M, K = log_payoff.shape
    if K != ensemble.N + 1:
        raise ValueError("log_payoff needs one column per grid node")
    out = np.empty_like(log_payoff)
    out[:, -1] = log_payoff[:, -1]
    for k in range(K - 2, -1, -1):
        nxt = out[:, k + 1]
        shift = float(np.max(nxt))
        w = np.exp(nxt - shift)
        fitted = _expect_later(ensemble, k, w, degree)
        # the fit can undershoot; E_t[W] >= min W
        fitted = np.maximum(fitted, float(np.min(w)))
        out[:, k] = np.log(fitted) + shift + (log_payoff[:, k] - log_payoff[:, k + 1])
    return out


def apriori_A34_exponential(c: StructuralConstants, terminal_samples, alpha_integral_samples,
                            ensemble: PathEnsemble, sign_mode: str = "absolute",
                            degree: int = 4) -> np.ndarray:
    """Conditional exponential bound on ``|Y_t|`` (or ``Y_t^+``), in the scale of ``Y``.

    Returns ``(1/g) ln E_t[exp(g |eta| + g int_t^T abar ds)]`` (``absolute``) or
    the same with ``eta^+`` (``positive_part``), shape ``(M, N+1)``.

    Parameters
    ----------
    terminal_samples : array ``(M,)``
        ``eta`` per path.
    alpha_integral_samples : scalar or array
        Tail integrals ``int_{t_k}^T abar ds`` broadcastable to ``(M, N+1)``;
        see :func:`alpha_tail`.
    """
    eta = np.asarray(terminal_samples, dtype=float).reshape(-1)
    if eta.size == 0:
        raise ValueError("terminal samples must be nonempty")
    if sign_mode == "absolute":
        base = np.abs(eta)
    elif sign_mode == "positive_part":
        base = np.maximum(eta, 0.0)
    else:
        raise ValueError("sign_mode must be 'absolute' or 'positive_part'")
    tail = np.broadcast_to(np.asarray(alpha_integral_samples, dtype=float), (eta.size, ensemble.N + 1))
    g = c.gamma
    logs = _log_conditional(ensemble, g * (base[:, None] + tail), degree)
    return logs / g


@dataclass
class LemmaA2Result:
    """Both sides in log scale, shape ``(M, K)`` on the evaluated nodes."""

    mode: str
    nodes: np.ndarray
    log_lhs: np.ndarray
    log_rhs: np.ndarray
    note: str = ""

    def margin(self) -> float:
        """min over paths and nodes of ``log_rhs - log_lhs``."""
        return float(np.min(self.log_rhs - self.log_lhs))


def _tail_power(V: np.ndarray | None, M: int, N: int, dt: float, p: float) -> np.ndarray:
    # int_{t_k}^T |V_s|^p ds for a field V of shape (M, N, ...)
    if V is None:
        return np.zeros((M, N + 1))
    mag = np.sqrt(np.sum(V.reshape(M, N, -1) ** 2, axis=-1)) ** p
    out = np.zeros((M, N + 1))
    out[:, :-1] = np.cumsum(mag[:, ::-1] * dt, axis=1)[:, ::-1]
    return out


def lemma_A2_bounds(c: StructuralConstants, mode: str, ensemble: PathEnsemble, Y=None, Z=None,
                    V=None, U_sup: float = 0.0, Y_sup: float | None = None, eps: float | None = None,
                    eta_sup: float | None = None, alpha_int: float | None = None,
                    degree: int = 4, stride: int = 1) -> LemmaA2Result:
    """Evaluate both sides of the exponential bounds for bounded solutions.

    Mode ``"i"``: ``exp(g|Y_t|)`` against
    ``E_t[exp(g|eta| + g int alpha + b g U (T-t) + l g int_t^T |V|^(1+d))]``.

    Mode ``"ii"``: ``E_t[exp((gb/2) eps int_t^T |Z|^2)]`` against
    ``E_t[exp(6 eps Ysup + 3 eps int alpha + 3 eps b U (T-t) + 3 eps l int_t^T |V|^(1+d))]``
    for ``0 < eps <= gb/9``.  ``Y_sup`` defaults to the ensemble maximum of
    ``|Y|``, which under-estimates the essential supremum.
    """
    M, N, dt = ensemble.M, ensemble.N, ensemble.grid.dt
    T = ensemble.T
    nodes = np.arange(0, N + 1, stride)
    tt = ensemble.grid.nodes
    eta, a = _eta_alpha(c, eta_sup, alpha_int)
    vpow = _tail_power(V, M, N, dt, 1 + c.delta)
    if mode == "i":
        if Y is None:
            raise ValueError("mode i needs the Y field")
        g = c.gamma
        log_lhs = g * np.abs(np.asarray(Y)[:, nodes])
        payoff = g * (eta + a + c.beta * U_sup * (T - tt))[None, :] + c.lam * g * vpow
        log_rhs = _log_conditional(ensemble, payoff, degree)[:, nodes]
        return LemmaA2Result("i", nodes, log_lhs, log_rhs)
    if mode == "ii":
        if Z is None:
            raise ValueError("mode ii needs the Z field")
        if eps is None:
            eps = c.gamma_bar / 9.0
        if not 0 < eps <= c.gamma_bar / 9.0 + 1e-15:
            raise ValueError("eps must lie in (0, gamma_bar/9]")
        note = ""
        if Y_sup is None:
            if Y is None:
                raise ValueError("mode ii needs Y_sup or the Y field")
            Y_sup = float(np.max(np.abs(Y)))
            note = "Y_sup taken as the ensemble maximum (lower estimate of the essential sup)"
        zq = _tail_power(np.asarray(Z), M, N, dt, 2.0)
        log_lhs = _log_conditional(ensemble, 0.5 * c.gamma_bar * eps * zq, degree)[:, nodes]
        payoff = (6 * eps * Y_sup + 3 * eps * a + 3 * eps * c.beta * U_sup * (T - tt))[None, :] \
            + 3 * eps * c.lam * vpow
        payoff = np.broadcast_to(payoff, (M, N + 1)).copy()
        log_rhs = _log_conditional(ensemble, payoff, degree)[:, nodes]
        return LemmaA2Result("ii", nodes, log_lhs, log_rhs, note)
    raise ValueError("mode must be 'i' or 'ii'")
