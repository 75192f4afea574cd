"""The Lovasz capacity of small graphs as an eigenvalue minimization.

theta(G) is the minimum of ``lambda_1(d + sum_e x_e (E_ij + E_ji))`` where
``d`` is the all-ones matrix with zeros on the edges of G.  For the
5-cycle the answer is sqrt(5); for a complete graph it is 1.

The variables live in a box ``|x_e| <= v - 1`` where ``v`` is any upper bound
on theta.  Tightening the box each time a better upper bound appears is
optional; both runs are shown.
"""

import math

from levelopt.harness import InstanceSpec, SolverSettings, build_instance, solve_instance


def main():
    c5 = [(i, (i + 1) % 5) for i in range(5)]
    graphs = {"C5": (5, c5, math.sqrt(5)),
              "K4": (4, [(i, j) for i in range(4) for j in range(i + 1, 4)], 1.0),
              "random(8)": (8, None, None)}
    for name, (nodes, edges, known) in graphs.items():
        params = {"nodes": nodes} if edges is None else {"nodes": nodes, "edges": edges}
        inst = build_instance(InstanceSpec("lovasz_tiny", params, seed=3))
        for shrink in (False, True):
            r = solve_instance(inst, "apl", SolverSettings(eps=1e-5), shrink=shrink)
            tag = "shrinking box" if shrink else "fixed box"
            ref = f"  (known {known:.6f})" if known is not None else ""
            print(f"{name:10} {tag:14} theta in [{r.lb:.6f}, {r.ub:.6f}] "
                  f"after {r.trace.last.iter} iterations{ref}")
            if shrink:
                widths = r.trace.meta["box_half_widths"]
                print(f"{'':10} box half-width {widths[0]:.3f} -> {widths[-1]:.3f}")


if __name__ == "__main__":
    main()
