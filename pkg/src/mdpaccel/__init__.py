"""Accelerated value iteration for discounted MDPs, with spectral analysis tools."""

from .mdp import (DimensionError, InducedChain, Mdp, OracleError, Policy, bellman_apply,
                  exact_optimal_value, exact_policy_value, expected_return, induce_chain,
                  policy_apply, q_values, residual)
from .solvers import (SolveReport, Status, StepSchedule, StopRule, Trace, estimate_rate,
                      run_accelerated, run_gs_vi, run_momentum, run_rvi, run_vc, run_vi)

__version__ = "0.1.0"
