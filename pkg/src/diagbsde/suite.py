"""Built-in oracle suite run by ``diagbsde verify``.

Every case is a full configuration pushed through the same pipeline as
``diagbsde solve`` and compared with a reference ``Y_0`` computed without
simulation.  Tolerances are absolute; ``quick`` runs use ``M = 5000``,
``N = 25`` and the looser tolerance listed per case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import parse_config
from .oracle import OracleCase, deterministic_ode_case, linear_case, pure_quadratic_case
from .runner import execute

__all__ = ["SuiteCase", "CASES", "run_case", "run_suite"]

QUICK = {"M": 5000, "N": 25}


@dataclass(frozen=True)
class SuiteCase:
    name: str
    description: str
    config: dict
    oracle: Callable[[], OracleCase]
    tol: float
    quick_tol: float


def _scalar(component, terminal, *, beta=0.0, C1=0.0, bounded=True, convexity="convex"):
    return {
        "constants": {"n": 1, "d": 1, "T": 1.0, "beta": beta, "gamma": 1.0, "gamma_bar": 1.0,
                      "C1": C1},
        "generator": {"components": [component], "diagonal": [True], "convexity": [convexity]},
        "terminal": {"components": [terminal], "bounded": bounded},
        "simulation": {"M": 20000, "N": 50, "seed": 0},
    }


CASES: dict[str, SuiteCase] = {c.name: c for c in (
    SuiteCase(
        "pure_quadratic",
        "(1/2)|z|^2 with xi = B_T clipped to [-3, 3]",
        _scalar("0.5*norm(zrow(1))^2", "min(max(b1, -3), 3)", C1=3.0),
        lambda: pure_quadratic_case([1.0], [1], [lambda b: np.clip(b, -3, 3)], breakpoints=[-3, 3]),
        1e-2, 3e-2),
    SuiteCase(
        "pure_quadratic_exact",
        "(1/2)|z|^2 with xi = B_T, Y_0 = 1/2",
        _scalar("0.5*norm(zrow(1))^2", "b1", bounded=False),
        lambda: OracleCase("pure_quadratic_exact", {}, [0.5], "closed form", "unbounded terminal"),
        1e-2, 3e-2),
    SuiteCase(
        "convex_concave_mix",
        "n = 2: +(1/2)|z^1|^2 and -(1/2)|z^2|^2, xi^i = sin(B_T)",
        {
            "constants": {"n": 2, "d": 1, "T": 1.0, "gamma": 1.0, "gamma_bar": 1.0, "C1": 1.5},
            "generator": {"components": ["0.5*norm(zrow(1))^2", "-0.5*norm(zrow(2))^2"],
                          "diagonal": [True, True], "convexity": ["convex", "concave"]},
            "terminal": {"components": ["sin(b1)", "sin(b1)"], "bounded": True},
            "simulation": {"M": 20000, "N": 50, "seed": 0},
        },
        lambda: pure_quadratic_case([1.0, 1.0], [1, -1], [np.sin, np.sin]),
        1e-2, 3e-2),
    SuiteCase(
        "linear",
        "0.5 z + 0.1 with xi = sin(B_T)",
        _scalar("0.5*z[1][1] + 0.1", "sin(b1)", C1=1.0),
        lambda: linear_case([0.5], 0.1, lambda b: np.sin(b[:, 0])),
        1e-2, 3e-2),
    SuiteCase(
        "deterministic_ode",
        "0.5 y with xi = 1",
        _scalar("0.5*y1", "1", beta=0.5, C1=1.0),
        lambda: deterministic_ode_case(0.5, [1.0]),
        1e-2, 3e-2),
)}


def run_case(name: str, quick: bool = False, threads: int = 1) -> dict:
    case = CASES[name]
    tree = {k: (dict(v) if isinstance(v, dict) else v) for k, v in case.config.items()}
    if quick:
        tree["simulation"] = {**tree.get("simulation", {}), **QUICK}
    cfg = parse_config(tree)
    ref = case.oracle()
    res = execute(cfg, threads)
    got = np.asarray(res.summary["Y0"]["mean"], dtype=float)
    err = float(np.max(np.abs(got - ref.y0)))
    tol = case.quick_tol if quick else case.tol
    return {"case": name, "reference": ref.y0.tolist(), "estimate": got.tolist(), "error": err,
            "tol": tol, "passed": bool(res.converged and err <= tol and math.isfinite(err)),
            "method": ref.method, "seconds": res.timing["total"]}


def run_suite(names=None, quick: bool = False, threads: int = 1) -> list[dict]:
    names = list(CASES) if not names else list(names)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise KeyError(f"unknown case(s) {unknown}; known: {sorted(CASES)}")
    return [run_case(n, quick, threads) for n in names]
