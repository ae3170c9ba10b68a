"""Experiment configuration: one JSON document fully describes a run.

Layout::

    {
      "constants":  {"n": 1, "d": 1, "T": 1.0, "beta": 0, "gamma": 1, "gamma_bar": 1,
                     "lambda": 0, "delta": 0, "C1": 0, "C2": 0, "phi": "0"},
      "generator":  {"components": ["0.5*norm(zrow(1))^2"], "alpha": "0",
                     "diagonal": [true], "convexity": ["convex"], "params": {}},
      "terminal":   {"components": ["min(max(b1, -3), 3)"], "bounded": true},
      "simulation": {"M": 20000, "N": 50, "seed": 0, "antithetic": true,
                     "basis_degree": 4, "inner_iters": 3, "z_clip": null, "ramps": 7},
      "run":        {"mode": "picard", "plan": null, "max_iters": 30, "tol": 1e-4,
                     "theta": [], "q": [2.0]},
      "validation": {"R_y": 10.0, "R_z": 10.0, "alpha_points": 256}
    }

Generator components are expression strings or builtin families such as
``{"family": "quadratic", "gamma": 1, "sign": -1}``.  ``run.mode`` is
``picard`` (one iteration over ``[0, T]``), ``global`` (stitched; ``plan`` is
``null`` for the default step, a number for a step length, or a list of
boundary times) or ``local`` (a single interval ``[T - eps, T]``).
``validation`` sets the sampling box used by the assumption checks.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import exprlang as el
from .generator import GeneratorModel, Modulus, SamplingBox, StructuralConstants, TerminalCondition
from .paths import memory_budget

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "DEFAULTS"]


class ConfigError(ValueError):
    """Bad configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS: dict = {
    "simulation": {"M": 20000, "N": 50, "seed": 0, "antithetic": True, "basis_degree": 4,
                   "inner_iters": 3, "z_clip": None, "ramps": 7},
    "run": {"mode": "picard", "plan": None, "max_iters": 30, "tol": 1e-4, "theta": [],
            "q": [2.0]},
    "validation": {"R_y": 10.0, "R_z": 10.0, "alpha_points": 256},
}

_CONSTANT_KEYS = {"n", "d", "T", "beta", "gamma", "gamma_bar", "lambda", "delta", "C1", "C2",
                  "phi", "phi_lip"}


@dataclass
class ExperimentConfig:
    raw: dict
    constants: StructuralConstants
    model: GeneratorModel
    terminal: TerminalCondition
    simulation: dict
    run: dict
    validation: dict = field(default_factory=lambda: dict(DEFAULTS["validation"]))

    @property
    def box(self) -> SamplingBox:
        return SamplingBox(float(self.validation["R_y"]), float(self.validation["R_z"]),
                           int(self.validation["alpha_points"]))

    def resolved(self) -> dict:
        """The full config with defaults filled in (embedded in reports)."""
        out = copy.deepcopy(self.raw)
        out["simulation"] = dict(self.simulation)
        out["run"] = dict(self.run)
        out["validation"] = dict(self.validation)
        return out


def _block(tree: Mapping, name: str, required: bool = True) -> dict:
    if name not in tree:
        if required:
            raise ConfigError(name, "missing block")
        return {}
    val = tree[name]
    if not isinstance(val, Mapping):
        raise ConfigError(name, "must be an object")
    return dict(val)


def _constants(block: dict) -> StructuralConstants:
    unknown = set(block) - _CONSTANT_KEYS
    if unknown:
        raise ConfigError(f"constants.{sorted(unknown)[0]}", "unknown field")
    kw: dict[str, Any] = {}
    for key, val in block.items():
        if key in ("phi", "phi_lip"):
            try:
                kw[key] = Modulus(val)
            except (el.ExprSyntaxError, ValueError, TypeError) as exc:
                raise ConfigError(f"constants.{key}", str(exc)) from None
        else:
            kw["lam" if key == "lambda" else key] = val
    try:
        return StructuralConstants(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError("constants", str(exc)) from None


def _model(block: dict, c: StructuralConstants) -> GeneratorModel:
    comps = block.get("components")
    if not comps:
        raise ConfigError("generator.components", "missing or empty")
    if not isinstance(comps, list):
        raise ConfigError("generator.components", "must be a list")
    for i, comp in enumerate(comps):
        if isinstance(comp, str):
            try:
                el.parse(comp, el.Context(n=c.n, d=c.d, constants={
                    "beta": 0, "gamma": 0, "gamma_bar": 0, "lambda": 0, "delta": 0, "T": 0,
                    **block.get("params", {})}))
            except el.ExprSyntaxError as exc:
                raise ConfigError(f"generator.components[{i}]", str(exc)) from None
    try:
        return GeneratorModel(c, comps, alpha=block.get("alpha", "0"),
                              diagonal=block.get("diagonal"), convexity=block.get("convexity"),
                              params=block.get("params"))
    except (el.ExprSyntaxError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError("generator", str(exc)) from None


def _terminal(block: dict, c: StructuralConstants) -> TerminalCondition:
    comps = block.get("components")
    if not comps:
        raise ConfigError("terminal.components", "missing or empty")
    for i, comp in enumerate(comps):
        try:
            el.parse(str(comp), el.Context(n=c.n, d=c.d, state=False, brownian=True))
        except el.ExprSyntaxError as exc:
            raise ConfigError(f"terminal.components[{i}]", str(exc)) from None
    try:
        return TerminalCondition(comps, c.n, c.d, bool(block.get("bounded", False)))
    except (ValueError, TypeError) as exc:
        raise ConfigError("terminal", str(exc)) from None


def _merged(block: dict, name: str) -> dict:
    base = dict(DEFAULTS[name])
    unknown = set(block) - set(base)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    base.update(block)
    return base


def parse_config(tree: Mapping) -> ExperimentConfig:
    """Validate a config tree and build the model objects."""
    if not isinstance(tree, Mapping):
        raise ConfigError("<root>", "config must be an object")
    c = _constants(_block(tree, "constants"))
    model = _model(_block(tree, "generator"), c)
    terminal = _terminal(_block(tree, "terminal"), c)
    sim = _merged(_block(tree, "simulation", required=False), "simulation")
    run = _merged(_block(tree, "run", required=False), "run")
    val = _merged(_block(tree, "validation", required=False), "validation")
    for key in ("R_y", "R_z"):
        if not isinstance(val[key], (int, float)) or not val[key] > 0:
            raise ConfigError(f"validation.{key}", "must be a positive number")
    if not isinstance(val["alpha_points"], int) or val["alpha_points"] < 1:
        raise ConfigError("validation.alpha_points", "must be a positive integer")
    for key in ("M", "N"):
        if not isinstance(sim[key], int) or sim[key] < 1:
            raise ConfigError(f"simulation.{key}", "must be a positive integer")
    if sim["antithetic"] and sim["M"] % 2:
        raise ConfigError("simulation.M", "must be even with antithetic sampling")
    need = 8 * sim["M"] * (sim["N"] + 1) * c.d
    if need > memory_budget():
        raise ConfigError("simulation", f"paths need {need} bytes, above the memory budget "
                                        f"{memory_budget()} (set DIAGBSDE_MEMORY_BUDGET)")
    if run["mode"] not in ("picard", "global", "local"):
        raise ConfigError("run.mode", "must be picard, global or local")
    plan = run["plan"]
    if plan is not None and not isinstance(plan, (int, float, list)):
        raise ConfigError("run.plan", "must be null, a step length or a list of times")
    if not isinstance(run["max_iters"], int) or run["max_iters"] < 1:
        raise ConfigError("run.max_iters", "must be a positive integer")
    if not run["tol"] > 0:
        raise ConfigError("run.tol", "must be positive")
    if any(not 0 < th < 1 for th in run["theta"]):
        raise ConfigError("run.theta", "values must lie in (0, 1)")
    if any(q <= 1 for q in run["q"]):
        raise ConfigError("run.q", "values must exceed 1")
    return ExperimentConfig(dict(tree), c, model, terminal, sim, run, val)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        tree = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(p), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(tree)
