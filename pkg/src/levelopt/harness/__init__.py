"""Instance library, baseline, benchmark driver and CLI."""

from .bench import (METHODS, BenchResult, SolverSettings, run_bench, scaling_slope,
                    solve_instance, subgradient_baseline)
from .instances import (Instance, InstanceSpec, build_instance, custom_instance, hoelder_M)

__all__ = ["METHODS", "BenchResult", "SolverSettings", "run_bench", "scaling_slope",
           "solve_instance", "subgradient_baseline", "Instance", "InstanceSpec",
           "build_instance", "custom_instance", "hoelder_M"]
