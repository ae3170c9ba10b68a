"""Execute a configured experiment and assemble its report."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .constants import DeskScaleOverflow, exp_moment_constants, local_radii
from .norms import exp_moment, norm_table
from .paths import PathEnsemble, simulate
from .picard import BsdeSolution, IterationTrace, PicardOptions, picard_iterate, theta_monitor
from .scalar_solver import SolverOptions
from .stitcher import bound_audit, default_eps, explicit_plan, plan, solve_global

__all__ = ["RunResult", "build_ensemble", "picard_options", "execute", "to_json"]


@dataclass
class RunResult:
    solution: BsdeSolution
    traces: list
    ensemble: PathEnsemble
    summary: dict
    timing: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.solution.converged)


def build_ensemble(cfg: ExperimentConfig, threads: int = 1) -> PathEnsemble:
    s, c = cfg.simulation, cfg.constants
    return simulate(int(s["seed"]), s["M"], s["N"], c.T, c.d, threads=threads,
                    antithetic=bool(s["antithetic"]))


def picard_options(cfg: ExperimentConfig, threads: int = 1) -> PicardOptions:
    s, r = cfg.simulation, cfg.run
    solver = SolverOptions(basis_degree=s["basis_degree"], inner_iters=s["inner_iters"],
                           z_clip=s["z_clip"], ramps=s["ramps"])
    window = 6 if r["theta"] else 0
    return PicardOptions(max_iters=r["max_iters"], tol=r["tol"], window=window, threads=threads,
                         solver=solver)


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_json(summary: dict) -> str:
    return json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n"


def _alpha_integral(cfg: ExperimentConfig, ens: PathEnsemble) -> np.ndarray:
    t = ens.grid.nodes[:-1]
    vals = cfg.model.alpha(t[None, :], ens.values[:, :-1, :])
    return np.sum(vals, axis=1) * ens.grid.dt


def _local_start(ens: PathEnsemble, eps: float) -> int:
    if eps >= ens.T:
        return 0
    return max(0, math.ceil((ens.T - eps) / ens.grid.dt - 1e-9))


def execute(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    """Run the configured mode; the summary carries no timing information."""
    t_start = time.perf_counter()
    c, run = cfg.constants, cfg.run
    ens = build_ensemble(cfg, threads)
    t_paths = time.perf_counter()
    opts = picard_options(cfg, threads)
    mode = run["mode"]
    moments: dict = {q: [] for q in run["q"]}

    def record(m, sol):
        for q in run["q"]:
            moments[q].append(exp_moment(sol.Y, q, c.gamma).log_value)

    stitch_nodes = None
    if mode == "picard":
        sol, trace = picard_iterate(cfg.model, cfg.terminal, ens, opts, callback=record)
        traces = [trace]
    elif mode == "local":
        eps = local_radii(c)[2]
        k0 = _local_start(ens, eps)
        sol, trace = picard_iterate(cfg.model, cfg.terminal, ens, opts, k0, ens.N, callback=record)
        traces = [trace]
        stitch_nodes = [ens.N, k0]
    else:
        p = run["plan"]
        if p is None:
            sp = plan(ens.grid, default_eps(c))
        elif isinstance(p, list):
            sp = explicit_plan(ens.grid, p)
        else:
            sp = plan(ens.grid, float(p))
        sol = solve_global(cfg.model, cfg.terminal, ens, sp, opts)
        traces = sol.diagnostics["traces"]
        stitch_nodes = list(sp.nodes)
    t_solve = time.perf_counter()

    Y0 = sol.Y[:, 0, :]
    summary: dict = {
        "tool": "diagbsde",
        "version": __version__,
        "config": cfg.resolved(),
        "seed": int(cfg.simulation["seed"]),
        "mode": mode,
        "converged": bool(sol.converged),
        "iterations": [len(t) for t in traces],
        "Y0": {"mean": Y0.mean(axis=0), "std": Y0.std(axis=0),
               "stderr": Y0.std(axis=0) / math.sqrt(Y0.shape[0])},
        "trace": [[{k: (0.0 if k == "seconds" else v) for k, v in row.items()} for row in t.rows]
                  for t in traces],
    }
    if stitch_nodes is not None:
        summary["plan_nodes"] = stitch_nodes
    if sol.k0 == 0 and sol.k1 == ens.N:
        summary["norms"] = [e.as_dict() for e in norm_table(sol.Y, sol.Z, ens, gamma=c.gamma)]
    audits = {}
    for variant in ("i", "ii"):
        try:
            audits[variant] = bound_audit(sol, c, variant).values
        except DeskScaleOverflow as exc:
            audits[variant] = {"overflow": str(exc)}
    summary["bounds"] = audits
    if any(moments.values()):
        xi = cfg.terminal(ens.terminal)
        a_int = _alpha_integral(cfg, ens)
        checks = {}
        for q, logs in moments.items():
            em = exp_moment_constants(c, q)
            log_xi = exp_moment(np.linalg.norm(xi, axis=-1), 1.0, em.weight_xi).log_value
            log_al = exp_moment(a_int, 1.0, em.weight_alpha).log_value
            log_K = em.log_K(log_xi, log_al)
            checks[str(q)] = {"log_moments": logs, "log_K": log_K,
                              "holds": bool(all(v <= log_K for v in logs))}
        summary["exp_moment_check"] = checks
    if run["theta"] and sol.history:
        summary["theta"] = {str(th): theta_monitor(sol.history, th, run["q"][0], c.gamma)
                            for th in run["theta"]}
    timing = {"paths": t_paths - t_start, "solve": t_solve - t_paths,
              "total": time.perf_counter() - t_start}
    return RunResult(sol, traces, ens, summary, timing)
