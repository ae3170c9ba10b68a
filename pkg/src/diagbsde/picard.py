"""Multi-dimensional solves by decoupled Picard iteration.

Each outer iteration freezes the previous iterate inside the generator and
solves ``n`` scalar equations independently:

* ``frozen_y``: component ``i`` uses the driver ``z -> g^i(t, Y^(m)_t, H(0; i, z))``,
  where ``H(0; i, z)`` is the zero matrix with row ``i`` set to ``z``.  This is
  exact for diagonal generators, whose ``g^i`` ignores the other rows.
* ``frozen_yv``: component ``i`` uses ``z -> g^i(t, U_t, H(V_t; i, z))`` with
  ``(U, V) = (Y^(m), Z^(m))``, the local map of the general theory.

The iteration starts from ``(0, 0)`` unless told otherwise.
"""

from __future__ import annotations

import csv
import io
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .generator import GeneratorModel, substitute_row
from .paths import PathEnsemble
from .scalar_solver import ScalarDriver, SolverOptions, solve_scalar

__all__ = [
    "BsdeSolution",
    "IterationTrace",
    "PicardOptions",
    "PicardDivergence",
    "ComponentError",
    "terminal_values",
    "flat_terminal_init",
    "gamma_map",
    "picard_iterate",
    "theta_differences",
    "theta_monitor",
    "ProbeReport",
    "uniqueness_probe",
    "dump_fields",
    "load_fields",
]

FIELDS_MAGIC = b"QBSDEFLD"
_FIELDS_HEADER = struct.Struct("<8sIQQQQQQ")  # magic, version, M, K, n, d, k0, k1


@dataclass
class BsdeSolution:
    """``Y`` ``(M, K+1, n)`` on nodes ``k0..k1`` and ``Z`` ``(M, K, n, d)`` on the intervals."""

    Y: np.ndarray
    Z: np.ndarray
    k0: int
    k1: int
    converged: bool = True
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def Y0(self) -> np.ndarray:
        """Cross-path mean of ``Y`` at the first node, per component."""
        return self.Y[:, 0, :].mean(axis=0)

    @property
    def n(self) -> int:
        return self.Y.shape[2]


def dump_fields(solution: BsdeSolution, path) -> None:
    """Header then little-endian float64 ``Y`` ``(M, K+1, n)`` and ``Z`` ``(M, K, n, d)``."""
    M, K1, n = solution.Y.shape
    d = solution.Z.shape[-1]
    head = _FIELDS_HEADER.pack(FIELDS_MAGIC, 1, M, K1 - 1, n, d, solution.k0, solution.k1)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(solution.Y, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(solution.Z, dtype="<f8").tobytes())


def load_fields(path) -> BsdeSolution:
    with open(path, "rb") as fh:
        head = fh.read(_FIELDS_HEADER.size)
        if len(head) != _FIELDS_HEADER.size:
            raise ValueError("truncated fields header")
        magic, version, M, K, n, d, k0, k1 = _FIELDS_HEADER.unpack(head)
        if magic != FIELDS_MAGIC or version != 1:
            raise ValueError("not a fields file (or unsupported version)")
        data = np.frombuffer(fh.read(), dtype="<f8")
    ny, nz = M * (K + 1) * n, M * K * n * d
    if data.size != ny + nz:
        raise ValueError("payload size does not match header")
    Y = data[:ny].reshape(M, K + 1, n).astype(np.float64)
    Z = data[ny:].reshape(M, K, n, d).astype(np.float64)
    return BsdeSolution(Y, Z, k0, k1)


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)

    def append(self, m, dY, dZ, ratio, seconds):
        self.rows.append({"m": m, "dY": dY, "dZ": dZ, "ratio": ratio, "seconds": seconds})

    def __len__(self):
        return len(self.rows)

    @property
    def dY(self) -> list:
        return [r["dY"] for r in self.rows]

    def to_csv(self, deterministic: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "dY", "dZ", "ratio", "seconds"])
        for r in self.rows:
            secs = 0.0 if deterministic else r["seconds"]
            w.writerow([r["m"], repr(r["dY"]), repr(r["dZ"]), repr(r["ratio"]), repr(secs)])
        return buf.getvalue()


@dataclass
class PicardOptions:
    max_iters: int = 30
    tol: float = 1e-4
    mode: str = "frozen_y"
    window: int = 0
    threads: int = 1
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.mode not in ("frozen_y", "frozen_yv"):
            raise ValueError("mode must be 'frozen_y' or 'frozen_yv'")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


class PicardDivergence(RuntimeError):
    def __init__(self, message, trace: IterationTrace, solution: BsdeSolution | None = None):
        super().__init__(message)
        self.trace = trace
        self.solution = solution


class ComponentError(RuntimeError):
    def __init__(self, index: int, exc: Exception):
        super().__init__(f"component {index}: {exc}")
        self.index = index
        self.__cause__ = exc


def terminal_values(terminal, ensemble: PathEnsemble, n: int, k1: int | None = None) -> np.ndarray:
    """``xi`` per path, shape ``(M, n)``, from a callable of ``B`` or an array."""
    k1 = ensemble.N if k1 is None else k1
    vals = terminal(ensemble.values[:, k1, :]) if callable(terminal) else terminal
    vals = np.array(vals, dtype=float).reshape(ensemble.M, -1)
    if vals.shape[1] != n:
        raise ValueError(f"terminal has {vals.shape[1]} components, model has {n}")
    return vals


def flat_terminal_init(terminal, ensemble: PathEnsemble, n: int, k0: int = 0,
                       k1: int | None = None) -> np.ndarray:
    """Initial iterate ``Y^(0)_t = h(B_t)``: the terminal map applied along the path."""
    k1 = ensemble.N if k1 is None else k1
    if not callable(terminal):
        return np.repeat(np.asarray(terminal, dtype=float)[:, None, :], k1 - k0 + 1, axis=1)
    B = ensemble.values[:, k0:k1 + 1, :]
    M, K, d = B.shape
    return np.asarray(terminal(B.reshape(M * K, d)), dtype=float).reshape(M, K, n)


def _component_driver(model: GeneratorModel, i: int, U: np.ndarray, V: np.ndarray | None, k0: int):
    n, d = model.n, model.d

    def fn(k, t, b, y, z):
        j = k - k0
        if V is None:
            full = np.zeros((z.shape[0], n, d))
            full[:, i - 1, :] = z
        else:
            full = substitute_row(V[:, j], i, z)
        return model.component(i, t, U[:, j], full)

    return ScalarDriver(fn, name=f"g{i}")


def gamma_map(model: GeneratorModel, frozen, terminal, ensemble: PathEnsemble,
              opts: SolverOptions | None = None, k0: int = 0, k1: int | None = None,
              threads: int = 1, order=None) -> BsdeSolution:
    """One application of the decoupled map.

    Parameters
    ----------
    frozen : (U, V)
        ``U`` of shape ``(M, K+1, n)``; ``V`` of shape ``(M, K, n, d)`` or
        ``None`` for the ``frozen_y`` form (other rows set to zero).
    order : sequence of int, optional
        Order in which components are submitted; the output does not depend on it.
    """
    k1 = ensemble.N if k1 is None else k1
    n, d, M = model.n, model.d, ensemble.M
    U, V = frozen
    U = np.asarray(U, dtype=float)
    if U.shape != (M, k1 - k0 + 1, n):
        raise ValueError(f"U must have shape {(M, k1 - k0 + 1, n)}, got {U.shape}")
    if V is not None and np.shape(V) != (M, k1 - k0, n, d):
        raise ValueError(f"V must have shape {(M, k1 - k0, n, d)}, got {np.shape(V)}")
    xi = terminal_values(terminal, ensemble, n, k1)
    order = list(range(1, n + 1)) if order is None else list(order)
    if sorted(order) != list(range(1, n + 1)):
        raise ValueError("order must be a permutation of 1..n")

    def solve(i):
        try:
            drv = _component_driver(model, i, U, V, k0)
            return i, solve_scalar(drv, xi[:, i - 1], ensemble, opts, k0, k1)
        except Exception as exc:  # noqa: BLE001 - re-raised with the component index
            raise ComponentError(i, exc) from exc

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=min(threads, n)) as pool:
            results = dict(pool.map(solve, order))
    else:
        results = dict(solve(i) for i in order)
    Y = np.stack([results[i].Y for i in range(1, n + 1)], axis=-1)
    Z = np.stack([results[i].Z for i in range(1, n + 1)], axis=2)
    diag = {f"component_{i}": {"z_clip": results[i].diagnostics["z_clip"],
                               "clipped": results[i].diagnostics["clipped"],
                               "deficient_steps": results[i].diagnostics["deficient_steps"]}
            for i in range(1, n + 1)}
    return BsdeSolution(Y, Z, k0, k1, diagnostics=diag)


def _h2_norm(dZ: np.ndarray, dt: float) -> float:
    return float(math.sqrt(np.mean(np.sum(dZ * dZ, axis=(1, 2, 3)) * dt)))


def picard_iterate(model: GeneratorModel, terminal, ensemble: PathEnsemble,
                   opts: PicardOptions | None = None, k0: int = 0, k1: int | None = None,
                   init=None, callback=None) -> tuple[BsdeSolution, IterationTrace]:
    """Iterate the decoupled map until ``max |Y^(m) - Y^(m-1)| <= tol``.

    Parameters
    ----------
    init : array ``(M, K+1, n)`` or ``(Y, Z)`` pair, optional
        Starting iterate; default ``(0, 0)``.
    callback : callable, optional
        Called as ``callback(m, solution)`` after every iteration.

    Returns
    -------
    (BsdeSolution, IterationTrace)
        ``solution.converged`` is false when ``max_iters`` ran out; the last
        iterate is returned.  With ``opts.window > 0`` the last ``window``
        ``Y`` iterates are kept in ``solution.history``.

    Raises
    ------
    PicardDivergence
        After three consecutive increases of ``dY``.
    """
    opts = opts or PicardOptions()
    k1 = ensemble.N if k1 is None else k1
    n, d, M, K = model.n, model.d, ensemble.M, k1 - k0
    if init is None:
        Y = np.zeros((M, K + 1, n))
        Z = np.zeros((M, K, n, d))
    elif isinstance(init, tuple):
        Y, Z = (np.asarray(a, dtype=float) for a in init)
    else:
        Y = np.asarray(init, dtype=float)
        Z = np.zeros((M, K, n, d))
    trace = IterationTrace()
    history = [Y] if opts.window else []
    increases = 0
    sol = None
    for m in range(1, opts.max_iters + 1):
        start = time.perf_counter()
        V = Z if opts.mode == "frozen_yv" else None
        sol = gamma_map(model, (Y, V), terminal, ensemble, opts.solver, k0, k1, opts.threads)
        dY = float(np.max(np.abs(sol.Y - Y)))
        dZ = _h2_norm(sol.Z - Z, ensemble.grid.dt)
        prev = trace.rows[-1]["dY"] if trace.rows else None
        ratio = dY / prev if prev else (0.0 if prev == 0 else math.nan)
        trace.append(m, dY, dZ, ratio, time.perf_counter() - start)
        Y, Z = sol.Y, sol.Z
        if callback is not None:
            callback(m, sol)
        if opts.window:
            history.append(Y)
            del history[:-opts.window]
        if dY <= opts.tol:
            sol.converged = True
            break
        increases = increases + 1 if prev is not None and dY > prev else 0
        if increases >= 3:
            sol.converged = False
            sol.history = history
            raise PicardDivergence(f"dY increased three times in a row (last {dY:.4g})", trace, sol)
    else:
        sol.converged = False
    sol.history = history
    sol.diagnostics["iterations"] = len(trace)
    return sol, trace


def theta_differences(Y_m: np.ndarray, Y_mp: np.ndarray, theta: float):
    """``((Y_mp - theta Y_m)/(1-theta), (Y_m - theta Y_mp)/(1-theta))``."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    Y_m, Y_mp = np.asarray(Y_m, dtype=float), np.asarray(Y_mp, dtype=float)
    return (Y_mp - theta * Y_m) / (1 - theta), (Y_m - theta * Y_mp) / (1 - theta)


def theta_monitor(iterates, theta: float = 0.5, q: float = 2.0, gamma: float = 1.0,
                  p: int = 1) -> list[dict]:
    """Exponential moments of the theta-differences across stored iterates.

    For each ``m`` with ``m + p`` available, computes per path
    ``S = sup_t (|dY_theta| + |dY~_theta|)`` (Euclidean norm over components)
    and reports ``log E[exp(q gamma S)]`` and, when representable, the moment.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    out = []
    for m in range(len(iterates) - p):
        a, b = theta_differences(iterates[m], iterates[m + p], theta)
        s = np.max(np.linalg.norm(a, axis=-1) + np.linalg.norm(b, axis=-1), axis=1)
        qq, note = q, ""
        lm = float(logsumexp(qq * gamma * s) - math.log(s.size))
        while lm > 700 and qq > 1.0 + 1e-9:
            qq = max(1.0 + 1e-9, qq / 2)
            lm = float(logsumexp(qq * gamma * s) - math.log(s.size))
            note = f"overflow at q={q}; reported at q={qq:g}"
        out.append({"m": m, "p": p, "theta": theta, "q": qq, "log_moment": lm,
                    "moment": math.exp(lm) if lm < 700 else None,
                    "sup_mean": float(np.mean(s)), "note": note})
    return out


@dataclass
class ProbeReport:
    sup_diff: float
    converged: tuple
    iterations: tuple
    tol: float

    @property
    def agree(self) -> bool:
        return self.sup_diff <= 2 * self.tol

    def as_dict(self) -> dict:
        return {"sup_diff": self.sup_diff, "converged": list(self.converged),
                "iterations": list(self.iterations), "tol": self.tol, "agree": self.agree}


def uniqueness_probe(model: GeneratorModel, terminal, ensemble: PathEnsemble,
                     opts: PicardOptions | None = None, init_a=None, init_b="flat",
                     k0: int = 0, k1: int | None = None) -> ProbeReport:
    """Run the iteration from two starting points and compare the limits.

    ``init_b="flat"`` starts from ``h(B_t)``.  The report states agreement; it
    never asserts it.
    """
    opts = opts or PicardOptions()
    if isinstance(init_b, str):
        if init_b != "flat":
            raise ValueError("init_b must be an array or 'flat'")
        init_b = flat_terminal_init(terminal, ensemble, model.n, k0, k1)
    sa, ta = picard_iterate(model, terminal, ensemble, opts, k0, k1, init_a)
    sb, tb = picard_iterate(model, terminal, ensemble, opts, k0, k1, init_b)
    diff = float(np.max(np.abs(sa.Y - sb.Y)))
    return ProbeReport(diff, (sa.converged, sb.converged), (len(ta), len(tb)), opts.tol)
