"""Minimizing the largest eigenvalue of an affine matrix pencil over the simplex.

``f(x) = lambda_1(A0 + sum_i x_i A_i)`` is nonsmooth wherever the top
eigenvalue is repeated.  Three solvers are compared:

* ABL works with the plain cutting-plane model and a Euclidean prox,
* APL uses the entropy prox on the simplex,
* USL replaces f by its soft-max smoothing and adapts the smoothing
  parameter phase by phase.

USL needs the size ``D_v = ln m`` of the dual spectahedron.  When it is
started with a tiny guess it doubles the guess whenever a phase fails to
make progress; the last run shows those doublings.
"""

import math

from levelopt.harness import InstanceSpec, SolverSettings, build_instance, solve_instance


def main():
    inst = build_instance(InstanceSpec("max_eigenvalue", {"n": 10, "m": 20}, seed=4))
    s = SolverSettings(eps=1e-4)
    print(f"{'method':8} {'lower':>11} {'upper':>11} {'iters':>6} {'phases':>7}")
    for m in ("abl", "apl", "usl"):
        r = solve_instance(inst, m, s)
        print(f"{m:8} {r.lb:11.6f} {r.ub:11.6f} {r.trace.last.iter:6d} "
              f"{len(r.trace.phases):7d}")

    r = solve_instance(inst, "usl", SolverSettings(eps=1e-4, Q1=1e-6))
    doubled = [ph for ph in r.trace.phases if not ph.significant]
    print(f"\nUSL from Q1 = 1e-6 (true size ln 20 = {math.log(20):.3f}):")
    print(f"  {len(doubled)} phases ended by doubling the estimate, final estimate "
          f"{r.trace.meta['Q_final']:.3f}")
    print(f"  bracket [{r.lb:.6f}, {r.ub:.6f}] after {r.trace.last.iter} iterations")


if __name__ == "__main__":
    main()
