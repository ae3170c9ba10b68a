"""Solvers and bound calculus for diagonally quadratic BSDEs.

The pieces, bottom up: :mod:`~diagbsde.exprlang` parses expressions,
:mod:`~diagbsde.generator` builds models and samples their structural
assumptions, :mod:`~diagbsde.constants` evaluates the theoretical constants,
:mod:`~diagbsde.paths` simulates Brownian ensembles,
:mod:`~diagbsde.scalar_solver` solves one-dimensional equations by
least-squares Monte Carlo, :mod:`~diagbsde.picard` and
:mod:`~diagbsde.stitcher` assemble multi-dimensional solutions,
:mod:`~diagbsde.norms` measures them and :mod:`~diagbsde.oracle` supplies
reference values.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .constants import BoundReport, bound_report
from .generator import GeneratorModel, StructuralConstants, TerminalCondition
from .oracle import OracleCase, cole_hopf_value
from .paths import PathEnsemble, TimeGrid, simulate
from .picard import BsdeSolution, PicardOptions, picard_iterate, uniqueness_probe
from .scalar_solver import ScalarDriver, SolverOptions, solve_scalar
from .stitcher import StitchPlan, bound_audit, plan, solve_global

__all__ = [
    "__version__",
    "BoundReport",
    "bound_report",
    "GeneratorModel",
    "StructuralConstants",
    "TerminalCondition",
    "OracleCase",
    "cole_hopf_value",
    "PathEnsemble",
    "TimeGrid",
    "simulate",
    "BsdeSolution",
    "PicardOptions",
    "picard_iterate",
    "uniqueness_probe",
    "ScalarDriver",
    "SolverOptions",
    "solve_scalar",
    "StitchPlan",
    "bound_audit",
    "plan",
    "solve_global",
]
