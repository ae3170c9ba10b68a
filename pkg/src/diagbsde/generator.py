"""Generator models g(t, y, z), terminal data and sampled assumption validators.

A model has ``n`` components.  Each component maps a batch of inputs
``t`` (scalar or ``(M,)``), ``y`` ``(M, n)`` and ``z`` ``(M, n, d)`` to ``(M,)``.
Components are either expression trees from :mod:`diagbsde.exprlang` or one
of the numpy-coded builtin families registered in :data:`FAMILIES`.

The validators check the growth/continuity assumptions on quasi-random points
drawn from boxes ``[0, T] x [-R_y, R_y]^n x [-R_z, R_z]^{n x d}``.  They are
sampled checks, not proofs: violations are reported as data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from . import exprlang as el

__all__ = [
    "Modulus",
    "StructuralConstants",
    "Component",
    "ExprComponent",
    "FAMILIES",
    "make_family",
    "GeneratorModel",
    "TerminalCondition",
    "ValidationReport",
    "SamplingBox",
    "evaluate_generator",
    "substitute_row",
    "validate_H",
    "validate_H3",
    "validate_B",
    "validate_B4",
    "theorem_tags",
]


# ---------------------------------------------------------------------------
# growth moduli


class Modulus:
    """Nondecreasing function r -> phi(r) on [0, inf) with phi(0) = 0.

    Built from expression text in the variable ``r`` or from a builtin
    ``{"family": "power", "coef": c, "exponent": p}`` (c r^p) or
    ``{"family": "affine", "slope": c}`` (c r).
    """

    def __init__(self, spec="0", constants: Mapping[str, float] | None = None):
        self.spec = spec
        self._expr = None
        self._fn: Callable[[np.ndarray], np.ndarray]
        if isinstance(spec, (int, float)):
            spec = repr(float(spec))
            self.spec = spec
        if isinstance(spec, str):
            ctx = el.Context(n=1, d=1, constants=dict(constants or {}), state=False, radius=True)
            self._expr = el.parse(spec, ctx)
            consts = dict(constants or {})
            self._fn = lambda r: el.evaluate(self._expr, {"r": r, "constants": consts})
        elif isinstance(spec, Mapping):
            fam = spec.get("family")
            if fam == "power":
                c, p = float(spec.get("coef", 1.0)), float(spec["exponent"])
                self._fn = lambda r: c * np.power(r, p)
            elif fam == "affine":
                c = float(spec["slope"])
                self._fn = lambda r: c * np.asarray(r, dtype=float)
            else:
                raise ValueError(f"unknown modulus family {fam!r}")
        elif callable(spec):
            self._fn = spec
        else:
            raise TypeError(f"cannot build a modulus from {spec!r}")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.asarray(self._fn(r), dtype=float)
        return np.broadcast_to(out, r.shape).copy() if out.shape != r.shape else out

    def is_zero(self) -> bool:
        grid = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 200)])
        return bool(np.all(self(grid) == 0.0))

    def __repr__(self):
        return f"Modulus({self.spec!r})"


@dataclass(frozen=True)
class StructuralConstants:
    """Every constant appearing in the growth assumptions.

    ``phi`` is the growth modulus in y.  ``phi_lip`` is the modulus used by the
    local Lipschitz check (H2); it defaults to ``1 + phi(r)`` because a modulus
    vanishing at zero would force g(t, 0, z) to be constant in z.
    """

    n: int = 1
    d: int = 1
    T: float = 1.0
    beta: float = 0.0
    gamma: float = 1.0
    gamma_bar: float = 1.0
    lam: float = 0.0
    delta: float = 0.0
    C1: float = 0.0
    C2: float = 0.0
    phi: Modulus = field(default_factory=Modulus)
    phi_lip: Modulus | None = None

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 < self.gamma_bar <= self.gamma:
            raise ValueError("need 0 < gamma_bar <= gamma")
        if not 0 <= self.delta < 1:
            raise ValueError("need 0 <= delta < 1")
        for name in ("beta", "lam", "C1", "C2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not isinstance(self.phi, Modulus):
            object.__setattr__(self, "phi", Modulus(self.phi))
        if self.phi_lip is not None and not isinstance(self.phi_lip, Modulus):
            object.__setattr__(self, "phi_lip", Modulus(self.phi_lip))
        grid = np.linspace(0.0, 100.0, 2001)
        vals = self.phi(grid)
        if vals[0] != 0.0:
            raise ValueError("phi(0) must be 0")
        if np.any(np.diff(vals) < -1e-12 * (1 + np.abs(vals[1:]))):
            raise ValueError("phi must be nondecreasing")

    def lipschitz_modulus(self, r):
        if self.phi_lip is not None:
            return self.phi_lip(r)
        return 1.0 + self.phi(r)

    def replace(self, **changes) -> "StructuralConstants":
        from dataclasses import replace

        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {
            "n": self.n, "d": self.d, "T": self.T, "beta": self.beta,
            "gamma": self.gamma, "gamma_bar": self.gamma_bar, "lambda": self.lam,
            "delta": self.delta, "C1": self.C1, "C2": self.C2,
            "phi": self.phi.spec if not callable(self.phi.spec) else "<callable>",
        }
        if self.phi_lip is not None:
            out["phi_lip"] = self.phi_lip.spec if not callable(self.phi_lip.spec) else "<callable>"
        return out


# ---------------------------------------------------------------------------
# components


class Component:
    """One component g^i of the generator; ``index`` is 1-based."""

    index: int = 1

    def __call__(self, t, y, z):  # pragma: no cover - interface
        raise NotImplementedError

    def describe(self):
        return repr(self)


class ExprComponent(Component):
    def __init__(self, source: str | el.Expr, index: int, n: int, d: int,
                 constants: Mapping[str, float] | None = None):
        self.index = index
        self.constants = dict(constants or {})
        ctx = el.Context(n=n, d=d, constants=self.constants)
        self.expr = el.parse(source, ctx) if isinstance(source, str) else source
        self.source = source if isinstance(source, str) else el.pretty(source)

    def __call__(self, t, y, z):
        y = np.asarray(y, dtype=float)
        try:
            val = el.evaluate(self.expr, {"t": t, "y": y, "z": z, "constants": self.constants})
        except el.ExprDomainError as exc:
            raise el.ExprDomainError(f"component {self.index}: {exc.args[0]}", exc.subexpr) from exc
        return np.broadcast_to(np.asarray(val, dtype=float), y.shape[:-1]).copy()

    def describe(self):
        return self.source

    def __repr__(self):
        return f"ExprComponent({self.source!r}, index={self.index})"


def _rownorm(z, i):
    row = z[..., i - 1, :]
    return np.sqrt(np.sum(row * row, axis=-1))


def _fullnorm(z):
    return np.sqrt(np.sum(z * z, axis=(-2, -1)))


def _vnorm(y):
    return np.sqrt(np.sum(y * y, axis=-1))


class _Family(Component):
    name = ""
    params: dict

    def describe(self):
        return {"family": self.name, **self.params}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}(index={self.index}, {args})"


class Zero(_Family):
    name = "zero"

    def __init__(self, index):
        self.index, self.params = index, {}

    def __call__(self, t, y, z):
        return np.zeros(np.shape(y)[:-1])


class Quadratic(_Family):
    """s * (gamma/2) |z^i|^2 with s = +1 (convex) or -1 (concave)."""

    name = "quadratic"

    def __init__(self, index, gamma=1.0, sign=1):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.index, self.params = index, {"gamma": float(gamma), "sign": int(sign)}

    def __call__(self, t, y, z):
        r = _rownorm(np.asarray(z, dtype=float), self.index)
        return self.params["sign"] * 0.5 * self.params["gamma"] * r * r


class LinearY(_Family):
    """beta * y^i."""

    name = "linear_y"

    def __init__(self, index, beta=1.0):
        self.index, self.params = index, {"beta": float(beta)}

    def __call__(self, t, y, z):
        return self.params["beta"] * np.asarray(y, dtype=float)[..., self.index - 1]


class LinearZ(_Family):
    """mu . z^i + c."""

    name = "linear_z"

    def __init__(self, index, mu=(1.0,), c=0.0):
        self.index = index
        self.params = {"mu": [float(v) for v in np.atleast_1d(mu)], "c": float(c)}

    def __call__(self, t, y, z):
        row = np.asarray(z, dtype=float)[..., self.index - 1, :]
        return row @ np.asarray(self.params["mu"]) + self.params["c"]


class GrowthInY(_Family):
    """(|y|^2 + sin|z^i|)|z| + |z|^{3/2} + |z^i|^2."""

    name = "growth_in_y"

    def __init__(self, index):
        self.index, self.params = index, {}

    def __call__(self, t, y, z):
        y, z = np.asarray(y, dtype=float), np.asarray(z, dtype=float)
        zn, zi, yn = _fullnorm(z), _rownorm(z, self.index), _vnorm(y)
        return (yn * yn + np.sin(zi)) * zn + zn ** 1.5 + zi * zi


class StrictlyQuadratic(_Family):
    """(exp(-y^i) + cos|z^i|)|z| - |z|^{4/3} + (-1)^i |z^i|^2."""

    name = "strictly_quadratic"

    def __init__(self, index):
        self.index, self.params = index, {}

    def __call__(self, t, y, z):
        y, z = np.asarray(y, dtype=float), np.asarray(z, dtype=float)
        zn, zi = _fullnorm(z), _rownorm(z, self.index)
        yi = y[..., self.index - 1]
        with np.errstate(over="ignore"):
            lead = np.exp(-yi)
        return (lead + np.cos(zi)) * zn - zn ** (4.0 / 3.0) + (-1.0) ** self.index * zi * zi


class OffDiagonalQuadratic(_Family):
    """coef * |z^j|^2 for a row j that is not the component's own row."""

    name = "off_diagonal_quadratic"

    def __init__(self, index, row=2, coef=1.0):
        self.index, self.params = index, {"row": int(row), "coef": float(coef)}

    def __call__(self, t, y, z):
        r = _rownorm(np.asarray(z, dtype=float), self.params["row"])
        return self.params["coef"] * r * r


FAMILIES: dict[str, type] = {
    cls.name: cls
    for cls in (Zero, Quadratic, LinearY, LinearZ, GrowthInY, StrictlyQuadratic, OffDiagonalQuadratic)
}


def make_family(name: str, index: int, **params) -> Component:
    try:
        cls = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown generator family {name!r}; known: {sorted(FAMILIES)}") from None
    return cls(index, **params)


# ---------------------------------------------------------------------------
# models


class _Alpha:
    """Deterministic alpha(t, b) >= 0, from expression text or a constant."""

    def __init__(self, spec, n, d, constants):
        self.spec = spec
        self.constants = dict(constants)
        if isinstance(spec, (int, float)):
            self.spec = repr(float(spec))
        ctx = el.Context(n=n, d=d, constants=self.constants, state=False, brownian=True)
        self.expr = el.parse(self.spec, ctx)
        self.constant = isinstance(self.expr, el.Num)

    def __call__(self, t, b):
        b = np.asarray(b, dtype=float)
        val = el.evaluate(self.expr, {"t": t, "b": b, "constants": self.constants})
        return np.broadcast_to(np.asarray(val, dtype=float), b.shape[:-1]).copy()


class GeneratorModel:
    """The generator g = (g^1, ..., g^n) with its structural metadata."""

    def __init__(self, constants: StructuralConstants, components: Sequence, alpha="0",
                 diagonal: Sequence[bool] | None = None,
                 convexity: Sequence[str] | None = None,
                 params: Mapping[str, float] | None = None):
        n, d = constants.n, constants.d
        self.constants = constants
        self.params = dict(params or {})
        expr_consts = {**_constant_names(constants), **self.params}
        comps = []
        for i, spec in enumerate(components, start=1):
            if isinstance(spec, Component):
                spec.index = i if spec.index is None else spec.index
                comps.append(spec)
            elif isinstance(spec, str):
                comps.append(ExprComponent(spec, i, n, d, expr_consts))
            elif isinstance(spec, Mapping):
                spec = dict(spec)
                name = spec.pop("family")
                comps.append(make_family(name, i, **spec))
            else:
                raise TypeError(f"component {i}: unsupported definition {spec!r}")
        if len(comps) != n:
            raise ValueError(f"model needs exactly n={n} components, got {len(comps)}")
        self.components = tuple(comps)
        self.alpha = _Alpha(alpha, n, d, expr_consts)
        self.diagonal = tuple(bool(v) for v in (diagonal if diagonal is not None else [False] * n))
        self.convexity = tuple(convexity if convexity is not None else ["none"] * n)
        if len(self.diagonal) != n or len(self.convexity) != n:
            raise ValueError("diagonal and convexity need one entry per component")
        for tag in self.convexity:
            if tag not in ("convex", "concave", "none"):
                raise ValueError(f"bad convexity tag {tag!r}")
        self._check_structure()

    def _check_structure(self, samples: int = 256):
        """Sampled checks: alpha >= 0 and row invariance of diagonal components."""
        n, d, T = self.n, self.d, self.constants.T
        rng = np.random.Generator(np.random.Philox(2024))
        t = rng.uniform(0.0, T, samples)
        if not self.alpha.constant:
            b = rng.uniform(-8.0, 8.0, (samples, d)) * math.sqrt(T)
            a = self.alpha(t, b)
            if np.any(a < 0):
                raise ValueError("alpha takes negative values on sampled inputs")
        elif float(self.alpha.expr.value) < 0:
            raise ValueError("alpha must be non-negative")
        if not any(self.diagonal):
            return
        y = rng.uniform(-2.0, 2.0, (samples, n))
        z = rng.normal(size=(samples, n, d)) * 3.0
        other = rng.normal(size=(samples, n, d)) * 3.0
        for i in range(1, n + 1):
            if not self.diagonal[i - 1]:
                continue
            try:
                g = self.component(i, t, y, z)
                g2 = self.component(i, t, y, substitute_row(other, i, z[:, i - 1, :]))
            except el.ExprDomainError:
                continue
            if np.any(np.abs(g2 - g) > 1e-12 * (1 + np.abs(g))):
                raise ValueError(f"component {i} is flagged diagonal but depends on other rows of z")

    @property
    def n(self):
        return self.constants.n

    @property
    def d(self):
        return self.constants.d

    def component(self, i: int, t, y, z):
        """Evaluate g^i (1-based) on a batch."""
        return self.components[i - 1](t, y, z)

    def __call__(self, t, y, z):
        return evaluate_generator(self, t, y, z)

    def describe(self) -> dict:
        return {
            "components": [c.describe() for c in self.components],
            "alpha": self.alpha.spec,
            "diagonal": list(self.diagonal),
            "convexity": list(self.convexity),
        }


def _constant_names(c: StructuralConstants) -> dict:
    return {"beta": c.beta, "gamma": c.gamma, "gamma_bar": c.gamma_bar, "lambda": c.lam,
            "delta": c.delta, "T": c.T}


class TerminalCondition:
    """xi = h(B_T) with one expression (or callable) per component."""

    def __init__(self, components: Sequence, n: int, d: int, bounded: bool = False,
                 constants: Mapping[str, float] | None = None):
        if len(components) != n:
            raise ValueError(f"terminal needs n={n} components, got {len(components)}")
        self.n, self.d, self.bounded = n, d, bool(bounded)
        self.constants = dict(constants or {})
        ctx = el.Context(n=n, d=d, constants=self.constants, state=False, brownian=True)
        self.sources = []
        self._fns = []
        for spec in components:
            if callable(spec):
                self.sources.append(getattr(spec, "__name__", "<callable>"))
                self._fns.append(spec)
            else:
                expr = el.parse(str(spec), ctx)
                self.sources.append(str(spec))
                self._fns.append(self._expr_fn(expr))

    def _expr_fn(self, expr):
        consts = self.constants

        def fn(b):
            b = np.asarray(b, dtype=float)
            val = el.evaluate(expr, {"b": b, "t": 0.0, "constants": consts})
            return np.broadcast_to(np.asarray(val, dtype=float), b.shape[:-1]).copy()

        return fn

    def __call__(self, b):
        """``b`` of shape ``(..., d)`` -> xi of shape ``(..., n)``."""
        b = np.asarray(b, dtype=float)
        return np.stack([np.asarray(f(b), dtype=float) for f in self._fns], axis=-1)

    def component(self, i: int):
        return self._fns[i - 1]

    def sup_on_grid(self, T: float, points: int = 201) -> float:
        """max |h(b)| with b on a grid of +-8 sqrt(T) per coordinate."""
        b = _wide_grid(self.d, T, points)
        return float(np.max(_vnorm(self(b))))


def _wide_grid(d: int, T: float, points: int = 201) -> np.ndarray:
    half = 8.0 * math.sqrt(T)
    if d <= 2:
        axis = np.linspace(-half, half, points if d == 1 else 81)
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)
    rng = np.random.Generator(np.random.Philox(12345))
    return rng.uniform(-half, half, size=(20_000, d))


def evaluate_generator(model: GeneratorModel, t, y, z) -> np.ndarray:
    """g(t, y, z) component-wise; ``y`` ``(..., n)``, ``z`` ``(..., n, d)`` -> ``(..., n)``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape[-1] != model.n or z.shape[-2:] != (model.n, model.d):
        raise ValueError("shape mismatch between inputs and model dimensions")
    return np.stack([np.asarray(c(t, y, z), dtype=float) for c in model.components], axis=-1)


def substitute_row(z, i: int, row) -> np.ndarray:
    """Copy of ``z`` with row ``i`` (1-based) replaced by ``row``.

    Works on single matrices ``(n, d)`` and on batches ``(..., n, d)``; ``row``
    broadcasts against ``(..., d)``.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[-2]
    if not 1 <= i <= n:
        raise IndexError(f"row index {i} out of range 1..{n}")
    out = z.copy()
    out[..., i - 1, :] = row
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class SamplingBox:
    R_y: float = 10.0
    R_z: float = 10.0
    alpha_points: int = 256


@dataclass
class ValidationReport:
    assumption: str
    samples: int
    violations: int
    worst_margin: float
    per_component: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "samples": self.samples,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "passed": self.passed,
            "per_component": self.per_component,
            "note": self.note,
        }


def _unit_points(dim: int, samples: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    sampler = qmc.Halton(d=dim, scramble=True, seed=rng)
    return sampler.random(samples)


def _draw(model: GeneratorModel, samples: int, seed: int, box: SamplingBox, pairs: bool = False):
    n, d, T = model.n, model.d, model.constants.T
    block = n + n * d
    dim = 1 + block * (2 if pairs else 1)
    u = _unit_points(dim, samples, seed)
    t = u[:, 0] * T

    def unpack(w):
        y = (2 * w[:, :n] - 1) * box.R_y
        z = ((2 * w[:, n:] - 1) * box.R_z).reshape(samples, n, d)
        return y, z

    first = unpack(u[:, 1:1 + block])
    if not pairs:
        return t, first[0], first[1]
    second = unpack(u[:, 1 + block:])
    return t, first, second


def _alpha_max(model: GeneratorModel, t: np.ndarray, seed: int, box: SamplingBox) -> np.ndarray:
    if model.alpha.constant:
        return np.full(t.shape, float(model.alpha.expr.value))
    d, T = model.d, model.constants.T
    b = (2 * _unit_points(d, box.alpha_points, seed + 7919) - 1) * 8.0 * math.sqrt(T)
    vals = model.alpha(t[:, None], b[None, :, :])
    return np.max(vals, axis=1)


def _tolerance(*terms):
    return 1e-9 * (1.0 + sum(np.abs(x) for x in terms))


def _offdiag_power_sum(z, i, p):
    norms = np.sqrt(np.sum(z * z, axis=-1))  # (S, n)
    mask = np.ones(norms.shape[-1], dtype=bool)
    mask[i - 1] = False
    return np.sum(norms[:, mask] ** p, axis=-1)


def _summary(name, samples, margins_by_comp, note=""):
    per = {}
    total = 0
    worst = math.inf
    for i, margin in margins_by_comp.items():
        v = int(np.sum(margin < 0))
        w = float(np.min(margin)) if margin.size else math.inf
        per[i] = {"violations": v, "worst_margin": w}
        total += v
        worst = min(worst, w)
    return ValidationReport(name, samples, total, worst, per, note)


def validate_H(model: GeneratorModel, which: str, samples: int = 10_000, seed: int = 0,
               box: SamplingBox | None = None) -> ValidationReport:
    """Sampled check of H1, H2, H4 or H5 (with the either-sign form of H5)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    box = box or SamplingBox()
    c = model.constants
    which = which.upper()
    if which == "H2":
        return _validate_H2(model, samples, seed, box)
    t, y, z = _draw(model, samples, seed, box)
    alpha = _alpha_max(model, t, seed, box)
    ynorm, znorm = _vnorm(y), _fullnorm(z)
    margins = {}
    if which == "H1":
        phi = c.phi(ynorm)
        for i in range(1, c.n + 1):
            lhs = np.abs(model.component(i, t, y, z))
            zi = _rownorm(z, i)
            rhs = alpha + phi + 0.5 * c.gamma * zi * zi + c.lam * _offdiag_power_sum(z, i, 1 + c.delta)
            margins[i] = rhs - lhs + _tolerance(lhs, rhs)
        return _summary("H1", samples, margins)
    if which == "H4":
        for i in range(1, c.n + 1):
            g = model.component(i, t, y, z)
            sgn = np.where(y[:, i - 1] > 0, 1.0, -1.0)
            lhs = sgn * g
            zi = _rownorm(z, i)
            rhs = alpha + c.beta * ynorm + c.lam * znorm ** (1 + c.delta) + 0.5 * c.gamma * zi * zi
            margins[i] = rhs - lhs + _tolerance(lhs, rhs)
        return _summary("H4", samples, margins)
    if which == "H5":
        per = {}
        total = 0
        worst = math.inf
        for i in range(1, c.n + 1):
            g = model.component(i, t, y, z)
            zi = _rownorm(z, i)
            slack = alpha + c.beta * ynorm + c.lam * znorm ** (1 + c.delta)
            quad = 0.5 * c.gamma_bar * zi * zi
            lower = g - (quad - slack)  # (2.1): g >= quad - slack
            upper = (-quad + slack) - g  # (2.2): g <= -quad + slack
            lower = lower + _tolerance(g, quad, slack)
            upper = upper + _tolerance(g, quad, slack)
            v_low, v_up = int(np.sum(lower < 0)), int(np.sum(upper < 0))
            if v_low == 0:
                variant, v, w = "lower", 0, float(np.min(lower))
            elif v_up == 0:
                variant, v, w = "upper", 0, float(np.min(upper))
            else:
                variant = None
                v = min(v_low, v_up)
                w = float(max(np.min(lower), np.min(upper)))
            per[i] = {"violations": v, "worst_margin": w, "variant": variant}
            total += v
            worst = min(worst, w)
        return ValidationReport("H5", samples, total, worst, per,
                                "variant 'lower' is g >= (gb/2)|z^i|^2 - ..., 'upper' is g <= -(gb/2)|z^i|^2 + ...")
    raise ValueError(f"unknown assumption {which!r}; expected H1, H2, H4 or H5")


def _validate_H2(model, samples, seed, box):
    c = model.constants
    t, (y, z), (yb, zb) = _draw(model, samples, seed, box, pairs=True)
    # half of the pairs are local perturbations so that derivative-scale
    # behaviour is probed as well as far-apart pairs
    half = samples // 2
    scale = 1e-3 * np.array([box.R_y, box.R_z])
    yb[:half] = y[:half] + (yb[:half] / box.R_y) * scale[0]
    zb[:half] = z[:half] + (zb[:half] / box.R_z) * scale[1]
    r = np.maximum(_vnorm(y), _vnorm(yb))
    mod = c.lipschitz_modulus(r)
    zn, zbn = _fullnorm(z), _fullnorm(zb)
    dy = _vnorm(y - yb)
    per = {}
    total, worst, mult = 0, math.inf, 0.0
    for i in range(1, c.n + 1):
        lhs = np.abs(model.component(i, t, y, z) - model.component(i, t, yb, zb))
        dzi = _rownorm(z - zb, i)
        cross = _offdiag_power_sum(z - zb, i, 1.0)
        rhs = mod * ((1 + zn + zbn) * (dy + dzi) + (1 + zn ** c.delta + zbn ** c.delta) * cross)
        margin = rhs - lhs + _tolerance(lhs, rhs)
        v = int(np.sum(margin < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        m = float(np.max(ratio))
        per[i] = {"violations": v, "worst_margin": float(np.min(margin)), "multiplier": m}
        total += v
        worst = min(worst, float(np.min(margin)))
        mult = max(mult, m)
    rep = ValidationReport("H2", samples, total, worst, per,
                           "multiplier = smallest scalar on the modulus making all sampled pairs pass")
    rep.per_component["multiplier"] = mult
    return rep


def validate_H3(model: GeneratorModel, terminal: TerminalCondition, seed: int = 0,
                box: SamplingBox | None = None) -> ValidationReport:
    """Bounded terminal (sup |h| <= C1 on a wide grid) and T * max alpha <= C2."""
    box = box or SamplingBox()
    c = model.constants
    sup_h = terminal.sup_on_grid(c.T)
    t = np.linspace(0.0, c.T, 65)
    alpha_int = float(np.max(_alpha_max(model, t, seed, box))) * c.T
    margins = {"terminal": np.array([c.C1 - sup_h + 1e-12]), "alpha": np.array([c.C2 - alpha_int + 1e-12])}
    rep = _summary("H3", 2, margins)
    rep.per_component["terminal"]["sup"] = sup_h
    rep.per_component["alpha"]["integral_bound"] = alpha_int
    if not terminal.bounded:
        rep.note = "terminal not declared bounded"
    return rep


def validate_B(model: GeneratorModel, which: str, samples: int = 10_000, seed: int = 0,
               box: SamplingBox | None = None, convexity_tol: float = 1e-9) -> ValidationReport:
    """Sampled check of B1 (growth + diagonal dependence), B2 or B3."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    box = box or SamplingBox()
    c = model.constants
    which = which.upper()
    if which == "B1":
        t, y, z = _draw(model, samples, seed, box)
        alpha = _alpha_max(model, t, seed, box)
        ynorm = _vnorm(y)
        _, _, other = _draw(model, samples, seed + 1, box)
        margins = {}
        per_diag = {}
        for i in range(1, c.n + 1):
            g = model.component(i, t, y, z)
            zi = _rownorm(z, i)
            rhs = alpha + c.beta * ynorm + 0.5 * c.gamma * zi * zi
            growth = rhs - np.abs(g) + _tolerance(g, rhs)
            perturbed = other.copy()
            perturbed[:, i - 1, :] = z[:, i - 1, :]
            g2 = model.component(i, t, y, perturbed)
            diag = 1e-12 * (1 + np.abs(g)) - np.abs(g2 - g)
            margins[i] = np.minimum(growth, diag)
            per_diag[i] = int(np.sum(diag < 0))
        rep = _summary("B1", samples, margins)
        for i, v in per_diag.items():
            rep.per_component[i]["diagonal_violations"] = v
        return rep
    if which == "B2":
        t, (y, z), (yb, _) = _draw(model, samples, seed, box, pairs=True)
        g1 = evaluate_generator(model, t, y, z)
        g2 = evaluate_generator(model, t, yb, z)
        lhs = _vnorm(g1 - g2)
        rhs = c.beta * _vnorm(y - yb)
        return _summary("B2", samples, {"all": rhs - lhs + _tolerance(lhs, rhs)})
    if which == "B3":
        t, (y, z), (_, zb) = _draw(model, samples, seed, box, pairs=True)
        mid = 0.5 * (z + zb)
        per = {}
        total, worst = 0, math.inf
        for i in range(1, c.n + 1):
            gm = model.component(i, t, y, mid)
            avg = 0.5 * (model.component(i, t, y, z) + model.component(i, t, y, zb))
            tol = convexity_tol * (1 + np.abs(avg))
            convex_margin = avg - gm + tol
            concave_margin = gm - avg + tol
            v_cvx, v_ccv = int(np.sum(convex_margin < 0)), int(np.sum(concave_margin < 0))
            declared = model.convexity[i - 1]
            if v_cvx == 0 and v_ccv == 0:
                found = "affine"
            elif v_cvx == 0:
                found = "convex"
            elif v_ccv == 0:
                found = "concave"
            else:
                found = None
            if declared == "convex":
                v, w = v_cvx, float(np.min(convex_margin))
            elif declared == "concave":
                v, w = v_ccv, float(np.min(concave_margin))
            else:
                v = 0 if found else min(v_cvx, v_ccv)
                w = float(max(np.min(convex_margin), np.min(concave_margin)))
            per[i] = {"violations": v, "worst_margin": w, "shape": found, "declared": declared}
            total += v
            worst = min(worst, w)
        return ValidationReport("B3", samples, total, worst, per,
                                "midpoint convexity in z with tolerance %g" % convexity_tol)
    raise ValueError(f"unknown assumption {which!r}; expected B1, B2 or B3")


def validate_B4(model: GeneratorModel, terminal: TerminalCondition, seed: int = 0) -> ValidationReport:
    """Exponential moments of every order for xi and int alpha.

    Sufficient sampled criterion: |h(b)| and alpha(t, b) grow strictly slower
    than |b|^2 along the sampled directions (the ratio to 1 + |b|^2 shrinks by
    a factor 0.75 or better when the radius doubles), or they are bounded.
    """
    c = model.constants
    d = c.d
    rng = np.random.Generator(np.random.Philox(seed + 104729))
    dirs = rng.standard_normal((512, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.array([8.0, 16.0, 32.0, 64.0]) * math.sqrt(c.T)
    t = np.linspace(0.0, c.T, 9)

    def ratios(fn):
        out = []
        for r in radii:
            vals = fn(dirs * r)
            out.append(float(np.max(vals)) / (1.0 + r * r))
        return np.array(out)

    h_r = ratios(lambda b: _vnorm(terminal(b)))
    a_r = ratios(lambda b: np.max(model.alpha(t[:, None], b[None, :, :]), axis=0))
    margins = {}
    for name, r in (("terminal", h_r), ("alpha", a_r)):
        shrink = r[1:] <= 0.75 * r[:-1] + 1e-300
        margins[name] = np.where(shrink, 1.0, -1.0)
    rep = _summary("B4", 2 * radii.size, margins)
    rep.per_component["terminal"]["ratios"] = h_r.tolist()
    rep.per_component["alpha"]["ratios"] = a_r.tolist()
    return rep


def theorem_tags(reports: Mapping[str, ValidationReport], constants: StructuralConstants) -> list[str]:
    """Which of the main results' hypothesis sets hold on the sampled evidence."""
    ok = {k: r.passed for k, r in reports.items()}
    tags = []
    if ok.get("H1") and ok.get("H2") and ok.get("H3"):
        tags.append("2.1")
        if ok.get("H4") and constants.lam == 0:
            tags.append("2.4")
        if ok.get("H4") and ok.get("H5"):
            tags.append("2.5")
    if all(ok.get(k) for k in ("B1", "B2", "B3", "B4")):
        tags.append("2.8")
    return tags
