"""Command line entry point: ``diagbsde {validate,bounds,solve,verify}``.

Exit codes: 0 success, 2 validation violations, 3 non-convergence,
4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .constants import bound_report
from .generator import (SamplingBox, theorem_tags, validate_B, validate_B4, validate_H,
                        validate_H3)
from .picard import PicardDivergence, dump_fields
from .runner import execute, to_json
from .stitcher import StitchError

__all__ = ["main", "build_parser", "run_validate", "run_bounds", "run_solve", "run_verify",
           "EXIT_OK", "EXIT_VIOLATION", "EXIT_NOT_CONVERGED", "EXIT_CONFIG"]

EXIT_OK, EXIT_VIOLATION, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("diagbsde")


def run_validate(cfg: ExperimentConfig, samples: int = 10_000, seed: int = 0,
                 box: SamplingBox | None = None) -> dict:
    """Every sampled assumption check plus the result tags they support."""
    m, term = cfg.model, cfg.terminal
    box = cfg.box if box is None else box
    reports = {}
    for which in ("H1", "H2", "H4", "H5"):
        reports[which] = validate_H(m, which, samples, seed, box)
    reports["H3"] = validate_H3(m, term, seed, box)
    for which in ("B1", "B2", "B3"):
        reports[which] = validate_B(m, which, samples, seed, box)
    reports["B4"] = validate_B4(m, term, seed)
    order = ("H1", "H2", "H3", "H4", "H5", "B1", "B2", "B3", "B4")
    return {"reports": {k: reports[k].as_dict() for k in order},
            "theorems": theorem_tags(reports, cfg.constants)}


def _validate_table(result: dict) -> str:
    lines = [f"{'assumption':<10}  {'status':<6}  {'violations':>10}  {'worst margin':>14}"]
    for name, rep in result["reports"].items():
        status = "pass" if rep["passed"] else "FAIL"
        lines.append(f"{name:<10}  {status:<6}  {rep['violations']:>10d}  {rep['worst_margin']:>14.6g}")
    tags = ", ".join(result["theorems"]) or "none"
    lines.append(f"hypotheses satisfied for results: {tags}")
    return "\n".join(lines)


def run_bounds(cfg: ExperimentConfig, q: float = 2.0):
    return bound_report(cfg.constants, q)


def run_solve(cfg: ExperimentConfig, out: Path, threads: int = 1, deterministic: bool = False,
              fields: bool = False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = execute(cfg, threads)
    except PicardDivergence as exc:
        (out / "trace.csv").write_text(exc.trace.to_csv(deterministic))
        log.error("solve: Picard iteration diverged: %s", exc)
        return EXIT_NOT_CONVERGED
    except StitchError as exc:
        log.error("solve: stitching stopped at interval %d: %s", exc.interval, exc)
        if exc.partial is not None:
            traces = exc.partial.diagnostics.get("traces", [])
            (out / "trace.csv").write_text("".join(t.to_csv(deterministic) for t in traces))
        return EXIT_NOT_CONVERGED
    summary = dict(res.summary)
    if not deterministic:
        summary["timing"] = res.timing
    (out / "summary.json").write_text(to_json(summary))
    (out / "trace.csv").write_text("".join(t.to_csv(deterministic) for t in res.traces))
    if fields:
        dump_fields(res.solution, out / "fields.bin")
    Y0 = ", ".join(f"{v:.6g}" for v in res.summary["Y0"]["mean"])
    print(f"Y0 = [{Y0}]  converged={res.converged}  iterations={res.summary['iterations']}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def run_verify(quick: bool = False, cases=None, threads: int = 1, deterministic: bool = False) -> tuple[int, list]:
    from .suite import run_suite

    rows = run_suite(cases, quick, threads)
    for r in rows:
        status = "PASS" if r["passed"] else "FAIL"
        secs = "" if deterministic else f"  {r['seconds']:.1f}s"
        print(f"{status}  {r['case']:<22} error={r['error']:.3e}  tol={r['tol']:.0e}{secs}")
    ok = all(r["passed"] for r in rows)
    return (EXIT_OK if ok else 1), rows


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diagbsde", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="sampled checks of the structural assumptions")
    v.add_argument("config", type=Path)
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--require", default="", help="comma separated assumptions that must pass")
    v.add_argument("--json", type=Path, help="also write the report here")

    b = sub.add_parser("bounds", help="evaluate the theoretical constants")
    b.add_argument("config", type=Path)
    b.add_argument("--q", type=float, default=2.0)
    b.add_argument("--json", type=Path)

    s = sub.add_parser("solve", help="run the configured solve")
    s.add_argument("config", type=Path)
    s.add_argument("--out", type=Path, default=Path("out"))
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--deterministic", action="store_true", help="omit timings from all outputs")
    s.add_argument("--fields", action="store_true", help="write fields.bin")
    s.add_argument("--plan", help="override run.plan: a step length or comma separated times")

    r = sub.add_parser("verify", help="run the built-in oracle suite")
    r.add_argument("--quick", action="store_true")
    r.add_argument("--case", action="append", help="run only this case (repeatable)")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--deterministic", action="store_true")
    r.add_argument("--json", type=Path)
    return p


def _override_plan(cfg: ExperimentConfig, text: str) -> None:
    parts = [float(x) for x in text.split(",") if x.strip()]
    if not parts:
        raise ConfigError("--plan", "empty")
    cfg.run["plan"] = parts[0] if len(parts) == 1 else parts
    cfg.run["mode"] = "global"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            code, rows = run_verify(args.quick, args.case, args.threads, args.deterministic)
            if args.json:
                args.json.write_text(to_json({"cases": rows}))
            return code
        cfg = load_config(args.config)
        if args.command == "validate":
            result = run_validate(cfg, args.samples, args.seed)
            print(_validate_table(result))
            if args.json:
                args.json.write_text(to_json(result))
            required = [x.strip().upper() for x in args.require.split(",") if x.strip()]
            bad = [k for k in required if k not in result["reports"]]
            if bad:
                raise ConfigError("--require", f"unknown assumption(s) {bad}")
            if any(not result["reports"][k]["passed"] for k in required):
                return EXIT_VIOLATION
            return EXIT_VIOLATION if not result["theorems"] else EXIT_OK
        if args.command == "bounds":
            rep = run_bounds(cfg, args.q)
            print(rep.as_table())
            if args.json:
                args.json.write_text(to_json(rep.as_dict()))
            return EXIT_OK
        if args.plan:
            _override_plan(cfg, args.plan)
        return run_solve(cfg, args.out, args.threads, args.deterministic, args.fields)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
