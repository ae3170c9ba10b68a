"""Closed-form constants and a priori bounds (the bound calculus).

Every function here is pure and works on plain floats.  Exponentials that
leave the float range raise :class:`DeskScaleOverflow` instead of returning
``inf``; :func:`bound_report` turns those into diagnostics.

Sentinels
---------
``math.inf`` is used for "no restriction": ``local_radii`` returns
``eps0 = inf`` when both of its denominators vanish, and ``stitch_step`` /
``uniqueness_step`` return ``eps = inf`` when ``beta == 0`` (one interval
covers ``[0, T]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .generator import StructuralConstants

__all__ = [
    "DeskScaleOverflow",
    "BoundReport",
    "StitchStep",
    "ExpMomentConstants",
    "floor_int",
    "c_delta_lambda_n",
    "local_radii",
    "stitch_step",
    "lemma41_constants",
    "global_bound_lemma41",
    "gronwall_bound",
    "A",
    "exp_moment_constants",
    "young_split",
    "uniqueness_step",
    "bound_report",
]

_LOG_MAX = math.log(1.7976931348623157e308)


class DeskScaleOverflow(ArithmeticError):
    """A constant exceeded the float range; parameters are outside desk scale."""

    def __init__(self, name: str, log_value: float):
        super().__init__(f"{name}: log value {log_value:.4g} exceeds float range "
                         "(parameters outside desk scale)")
        self.name = name
        self.log_value = log_value


def _exp(x: float, name: str) -> float:
    if x > _LOG_MAX:
        raise DeskScaleOverflow(name, x)
    return math.exp(x)


def _check(value: float, name: str) -> float:
    if math.isinf(value) or math.isnan(value):
        raise DeskScaleOverflow(name, math.inf)
    return value


def floor_int(x: float) -> int:
    """Greatest integer <= x, snapping values within 1e-12 of an integer.

    The snap keeps products such as 2*n*beta*T = 3 from landing on 2 because
    of binary rounding.
    """
    r = round(x)
    if abs(x - r) <= 1e-12 * max(1.0, abs(x)):
        return int(r)
    return math.floor(x)


def c_delta_lambda_n(delta: float, lam: float, n: int) -> float:
    """((1-d)/2) (1+d)^((1+d)/(1-d)) (n lam)^(2/(1-d))."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if lam < 0 or n < 1:
        raise ValueError("need lam >= 0 and n >= 1")
    if lam == 0:
        return 0.0
    e = (1 + delta) / (1 - delta)
    log_val = (math.log((1 - delta) / 2) + e * math.log(1 + delta)
               + 2 / (1 - delta) * math.log(n * lam))
    return _exp(log_val, "c_dln")


def local_radii(c: StructuralConstants) -> tuple[float, float, float]:
    """Radii ``K1``, ``K2`` of the invariant ball and the local length ``eps0``.

    Returns
    -------
    (K1, K2, eps0)
        ``eps0`` is ``math.inf`` when both quotient denominators vanish
        (phi identically zero near 2 K1 and lambda = 0).
    """
    n, g = c.n, c.gamma
    K1 = n / g * math.log(2.0) + n * (c.C1 + c.C2)
    K2 = n / g ** 2 * _exp(2 * g * c.C1, "k2") + n / g * _exp(4 * g * K1, "k2") * (1 + 2 * c.C2)
    _check(K2, "k2")
    e = (1 + c.delta) / (1 - c.delta)
    cdl = c_delta_lambda_n(c.delta, c.lam, n)
    phi2k1 = float(c.phi(2 * K1))
    pow2k2 = _check((2 * K2) ** e, "eps0")
    den1 = n * phi2k1 + n * g ** e * cdl * pow2k2
    den2 = 2 * phi2k1 + 2 * cdl * pow2k2
    # exp(-4 gamma K1) K2 stays finite even when exp(4 gamma K1) alone is large
    num2 = g / n * K2 * math.exp(-4 * g * K1)
    q1 = K1 / den1 if den1 > 0 else math.inf
    q2 = num2 / den2 if den2 > 0 else math.inf
    return K1, K2, min(q1, q2)


class StitchStep(NamedTuple):
    eps: float
    m0: int
    single_interval: bool


def stitch_step(c: StructuralConstants) -> StitchStep:
    """Interval length ``eps = 1/(2 n beta)`` and the count ``m0``.

    ``m0`` is the integer with ``T/eps <= m0 < T/eps + 1`` (at least 1).  For
    ``beta == 0`` a single interval is returned with ``eps = inf``.
    """
    if c.beta == 0:
        return StitchStep(math.inf, 1, True)
    eps = 1.0 / (2 * c.n * c.beta)
    x = c.T / eps
    m0 = floor_int(x)
    if m0 < x - 1e-12 * max(1.0, x):
        m0 += 1
    return StitchStep(eps, max(m0, 1), False)


def lemma41_constants(c: StructuralConstants) -> dict:
    """``eps0'``, ``C3``, ``C4`` and ``C5`` of the strictly quadratic bound."""
    n, g, gb, lam, dl, T = c.n, c.gamma, c.gamma_bar, c.lam, c.delta, c.T
    e0 = min(gb / 9.0, g / (12.0 * (c.beta * T + 2.0)))
    e = (1 + dl) / (1 - dl)
    half = ((1 + dl) / 2) ** e
    if lam == 0:
        C3 = C4 = 0.0
    else:
        C3 = gb * e0 * (1 - dl) / (8 * n) * half * _exp(2 / (1 - dl) * math.log(12 * n * lam / gb), "c3")
        C4 = gb * e0 * (1 - dl) / (4 * n) * half * _exp(
            2 / (1 - dl) * math.log(2 * n * n * lam * g / (gb * e0)), "c4")
    C5 = c.C2 + (6 * e0 * c.C2 + 2 * C3 * T) / (n * g) + C4 * T / (n * g)
    return {"eps0_prime": e0, "c3": C3, "c4": C4, "c5": _check(C5, "c5")}


def _geometric(base: float, top: int, name: str) -> float:
    # base + base^2 + ... + base^top
    if base == 1:
        return float(top)
    if top * math.log(base) > _LOG_MAX - 1:
        raise DeskScaleOverflow(name, top * math.log(base))
    return base * (base ** top - 1) / (base - 1)


def global_bound_lemma41(c: StructuralConstants, variant: str = "i") -> float:
    """Sup-norm bound on Y over [0, T] from the stitching recursion.

    Variant ``"i"``: ``(2n)^([2n beta T]+2) C1 + sum_{k=1}^{[2n beta T]+2} (2n)^k C2``.
    Variant ``"ii"``: the same with ``4n``, ``[4n beta T]`` and ``C5`` in place of ``C2``.
    With ``beta == 0`` no stitching is needed and the single-interval bounds
    ``n (C1 + C2)`` and ``2n (C1 + C5)`` are returned.
    """
    n = c.n
    if variant == "i":
        if c.beta == 0:
            return n * (c.C1 + c.C2)
        top = floor_int(2 * n * c.beta * c.T) + 2
        base, tail = 2.0 * n, c.C2
    elif variant == "ii":
        C5 = lemma41_constants(c)["c5"]
        if c.beta == 0:
            return 2 * n * (c.C1 + C5)
        top = floor_int(4 * n * c.beta * c.T) + 2
        base, tail = 4.0 * n, C5
    else:
        raise ValueError("variant must be 'i' or 'ii'")
    if top * math.log(base) > _LOG_MAX - 1:
        raise DeskScaleOverflow(f"lemma41_{variant}", top * math.log(base))
    return _check(base ** top * c.C1 + _geometric(base, top, f"lemma41_{variant}") * tail,
                  f"lemma41_{variant}")


def gronwall_bound(c: StructuralConstants, variant: str = "i") -> float:
    """``n (C1+C2) e^(n beta T)`` (i) or ``2n (C1+C5) e^(2n beta T)`` (ii)."""
    n = c.n
    if variant == "i":
        return n * (c.C1 + c.C2) * _exp(n * c.beta * c.T, "gronwall_i")
    if variant == "ii":
        C5 = lemma41_constants(c)["c5"]
        return 2 * n * (c.C1 + C5) * _exp(2 * n * c.beta * c.T, "gronwall_ii")
    raise ValueError("variant must be 'i' or 'ii'")


def A(q: float) -> float:
    """``(q/(q-1))^(2q)`` for ``q > 1``."""
    if q <= 1:
        raise ValueError("A(q) needs q > 1")
    return math.exp(2 * q * math.log1p(1.0 / (q - 1)))


@dataclass(frozen=True)
class ExpMomentConstants:
    """Pieces of ``K(q)``.

    ``K(q) = coefficient * E[exp(weight_xi |xi|)] * E[exp(weight_alpha int alpha)]``.
    """

    q: float
    A_q: float
    coefficient: float
    log_coefficient: float
    weight_xi: float
    weight_alpha: float

    def log_K(self, log_mgf_xi: float, log_mgf_alpha: float) -> float:
        return self.log_coefficient + log_mgf_xi + log_mgf_alpha


def exp_moment_constants(c: StructuralConstants, q: float) -> ExpMomentConstants:
    if q <= 1:
        raise ValueError("q must exceed 1")
    n = c.n
    k = floor_int(2 * n * c.beta * c.T) + 1
    log_coef = k * (math.log(A(2 * q)) + math.log(A(8 * n * q)))
    coef = math.exp(log_coef) if log_coef <= _LOG_MAX else math.inf
    w_xi = 4 * n * (8 * n) ** k * q * c.gamma
    w_alpha = 4 * n * (16 * n) ** k * q * c.gamma
    return ExpMomentConstants(q, A(q), coef, log_coef, w_xi, w_alpha)


def young_split(a: float, b: float, delta: float) -> tuple[float, float]:
    """Young split of ``a b^(1+delta)``.

    Returns ``(bound, lhs)`` with
    ``bound = b^2 + ((1-d)/2) ((1+d)/2)^((1+d)/(1-d)) a^(2/(1-d))`` and
    ``lhs = a b^(1+d) <= bound``.
    """
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    e = (1 + delta) / (1 - delta)
    bound = b * b + (1 - delta) / 2 * ((1 + delta) / 2) ** e * a ** (2 / (1 - delta))
    return bound, a * b ** (1 + delta)


def uniqueness_step(c: StructuralConstants) -> float:
    """``1/(8 n beta)``; ``inf`` when ``beta == 0``."""
    if c.beta == 0:
        return math.inf
    return 1.0 / (8 * c.n * c.beta)


@dataclass
class BoundReport:
    values: dict
    constants: StructuralConstants
    diagnostics: dict = field(default_factory=dict)

    KEYS = ("k1", "k2", "eps0", "c_dln", "eps_stitch", "m0", "lemma41_i", "lemma41_ii",
            "c3", "c4", "c5", "gronwall_i", "gronwall_ii", "a_q", "k_q", "eps_bar")

    def as_dict(self) -> dict:
        return {"values": dict(self.values), "constants": self.constants.as_dict(),
                "diagnostics": dict(self.diagnostics)}

    def as_table(self) -> str:
        width = max(len(k) for k in self.values) if self.values else 4
        lines = []
        for key, val in self.values.items():
            if isinstance(val, dict):
                val = ", ".join(f"{k}={_fmt(v)}" for k, v in val.items())
            else:
                val = _fmt(val)
            lines.append(f"{key:<{width}}  {val}")
        for key, msg in self.diagnostics.items():
            lines.append(f"! {key}: {msg}")
        return "\n".join(lines)


def _fmt(v):
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def bound_report(c: StructuralConstants, q: float = 2.0) -> BoundReport:
    """Evaluate every constant; overflowing entries become ``None`` plus a diagnostic."""
    values: dict = {}
    diag: dict = {}

    def put(keys, fn):
        try:
            out = fn()
        except DeskScaleOverflow as exc:
            for k in keys:
                values[k] = None
            diag[keys[0]] = str(exc)
            return
        if len(keys) == 1:
            out = (out,)
        for k, v in zip(keys, out):
            values[k] = v

    put(("k1", "k2", "eps0"), lambda: local_radii(c))
    put(("c_dln",), lambda: c_delta_lambda_n(c.delta, c.lam, c.n))
    step = stitch_step(c)
    values["eps_stitch"], values["m0"] = step.eps, step.m0
    put(("lemma41_i",), lambda: global_bound_lemma41(c, "i"))
    put(("lemma41_ii",), lambda: global_bound_lemma41(c, "ii"))
    put(("c3", "c4", "c5"), lambda: (lambda d: (d["c3"], d["c4"], d["c5"]))(lemma41_constants(c)))
    put(("gronwall_i",), lambda: gronwall_bound(c, "i"))
    put(("gronwall_ii",), lambda: gronwall_bound(c, "ii"))
    em = exp_moment_constants(c, q)
    values["a_q"] = em.A_q
    values["k_q"] = {"q": q, "coefficient": em.coefficient, "log_coefficient": em.log_coefficient,
                     "weight_xi": em.weight_xi, "weight_alpha": em.weight_alpha}
    values["eps_bar"] = uniqueness_step(c)
    if values.get("eps0") == math.inf:
        diag["eps0"] = "both denominators vanish; any eps <= T admissible"
    if step.single_interval:
        diag["eps_stitch"] = "beta = 0: a single interval covers [0, T]"
    return BoundReport(values, c, diag)
