"""Coupled two-component system solved by Picard iteration.

Each component is diagonal in Z (its generator sees only its own row) and the
components talk to each other through ``Y``.  The trace shows the sup-distance
between successive iterates shrinking geometrically.  The probe starts a second
run from ``h(B_t)`` instead of zero and checks that both land on the same
fixed point.
"""

from __future__ import annotations

from diagbsde.generator import GeneratorModel, StructuralConstants, TerminalCondition
from diagbsde.paths import simulate
from diagbsde.picard import PicardOptions, picard_iterate, theta_monitor, uniqueness_probe


def main() -> None:
    c = StructuralConstants(n=2, d=1, T=1.0, beta=0.5, gamma=1.0, gamma_bar=1.0, C1=1.0, C2=0.5)
    model = GeneratorModel(c, ["0.5*norm(zrow(1))^2 + 0.5*sin(y2)",
                               "-0.5*norm(zrow(2))^2 + 0.5*cos(y1)"],
                           alpha="0.5", diagonal=[True, True], convexity=["convex", "concave"])
    term = TerminalCondition(["sin(b1)", "sin(b1)"], 2, 1, bounded=True)
    ens = simulate(0, 20000, 50, 1.0, antithetic=True)

    sol, trace = picard_iterate(model, term, ens, PicardOptions(max_iters=15, window=6))
    for row in trace.rows:
        print(f"m={row['m']:2d}  dY={row['dY']:.3e}  dZ={row['dZ']:.3e}")
    print("Y0 =", sol.Y0, "converged:", sol.converged)

    for r in theta_monitor(sol.history, theta=0.5, q=2.0, gamma=1.0):
        print(f"theta moment at m={r['m']}: {r['moment']:.4f}")

    probe = uniqueness_probe(model, term, ens)
    print(f"uniqueness probe: sup diff {probe.sup_diff:.2e}")


if __name__ == "__main__":
    main()
