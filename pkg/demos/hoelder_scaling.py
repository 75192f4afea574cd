"""How iteration counts grow as the target gap shrinks.

The test function is ``||x - x*||^(1+rho) / (1+rho)`` on the unit box, which
is nonsmooth at rho = 0 and has a Lipschitz gradient at rho = 1.  The same
APL configuration runs on all three without being told rho.  A projected
subgradient method with the same oracle budget is shown for contrast.
"""

from levelopt.harness import (InstanceSpec, SolverSettings, build_instance, scaling_slope,
                              solve_instance, subgradient_baseline)

EPS = [1e-2, 1e-3, 1e-4, 1e-5]


def main():
    for rho in (0.0, 0.5, 1.0):
        inst = build_instance(InstanceSpec("hoelder", {"rho": rho, "n": 10}, seed=7))
        print(f"\nrho = {rho}  (worst-case rate eps^{-2 / (1 + 3 * rho):.2f})")
        print(f"{'eps':>8} {'ABL iters':>10} {'APL iters':>10} {'APL phases':>11} "
              f"{'subgrad gap':>12}")
        apl_iters = []
        for eps in EPS:
            s = SolverSettings(eps=eps)
            abl = solve_instance(inst, "abl", s)
            apl = solve_instance(inst, "apl", s)
            apl_iters.append(apl.trace.last.iter)
            # same number of oracle calls as APL used
            sg = subgradient_baseline(inst, apl.trace.last.oracle_calls)
            print(f"{eps:8.0e} {abl.trace.last.iter:10d} {apl.trace.last.iter:10d} "
                  f"{len(apl.trace.phases):11d} {sg.meta['ub'] - inst.f_star:12.2e}")
        print(f"fitted slope of log(iters) vs log(eps): {scaling_slope(EPS, apl_iters):.2f}")
    print("\nThe counts grow roughly by a constant per decade of eps: each phase "
          "shrinks the gap by a fixed factor and, on this family, needs only a few "
          "iterations.  The worst-case rate is an upper bound that these easy "
          "instances never approach.")


if __name__ == "__main__":
    main()
