"""End-to-end validation suites driven by ``mdpaccel validate``.

Each suite returns a list of verdict dicts ``{check, passed, value, expected,
tolerance}``. The fixtures and tolerances mirror the acceptance tests.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import analysis as A
from . import solvers as S
from .bench import run_solver
from .instances import (GarnetSpec, cycle_mdp, garnet, hard_chain, only_policy,
                        reversible_walk)
from .mdp import exact_optimal_value, exact_policy_value, induce_chain

RATE_TOL = 0.02
RATE_FIXTURES = ((0, 0.2), (1, 0.3))  # (seed, density) of the n=50 reversible walks
# rate fits run deep into the asymptotic regime, well past the default stop
RATE_STOP = S.StopRule(epsilon=1e-9, max_iters=20_000)
RATE_FLOOR = 1e-12
SUITES = ("rates", "divergence", "lower-bound", "certificates")


def _verdict(check, passed, value=None, expected=None, tolerance=None) -> dict:
    return {"check": check, "passed": bool(passed), "value": value, "expected": expected,
            "tolerance": tolerance}


def fitted_rate(mdp, solver: str) -> float:
    """Fitted geometric rate of ``||v_s - v^pi||`` for a one-action chain."""
    pol = only_policy(mdp)
    v_pi = exact_policy_value(mdp, pol)
    rep = run_solver(solver, mdp, pol, RATE_STOP, oracle=v_pi)
    errs = np.asarray(rep.trace.errors)
    # stop the fit before roundoff noise takes over
    floor = RATE_FLOOR * max(1.0, float(np.max(np.abs(v_pi))))
    hit = np.flatnonzero(errs <= floor)
    if hit.size:
        errs = errs[:hit[0]]
    return S.estimate_rate(errs)


def rates_suite() -> list[dict]:
    out = []
    for seed, density in RATE_FIXTURES:
        base = reversible_walk(50, density, seed)
        for lam in (0.9, 0.99):
            mdp = base.with_discount(lam)
            tag = f"walk(seed={seed},density={density}) lambda={lam}"
            r_vc = fitted_rate(mdp, "vc")
            r_a = fitted_rate(mdp, "a-vc")
            r_m = fitted_rate(mdp, "m-vc")
            for name, got, want in (("vc", r_vc, lam),
                                    ("a-vc", r_a, A.accel_contraction(lam)),
                                    ("m-vc", r_m, A.momentum_contraction(lam))):
                out.append(_verdict(f"rate {name} {tag}", abs(got - want) <= RATE_TOL,
                                    got, want, RATE_TOL))
            out.append(_verdict(f"m-vc faster than a-vc {tag}", r_m < r_a, r_m, r_a))
    return out


def divergence_suite() -> list[dict]:
    out = []
    mdp = cycle_mdp(4, 0.95)
    pol = only_policy(mdp)
    chain = induce_chain(mdp, pol)
    spec = A.chain_spectrum(chain.matrix)
    for variant, solver in (("accelerated", "a-vc"), ("momentum", "m-vc")):
        rho = A.predicted_radius(spec, 0.95, variant)
        out.append(_verdict(f"cycle4 lambda=0.95 {variant} radius > 1", rho > 1.0, rho, 1.0))
        rep = run_solver(solver, mdp, pol)
        out.append(_verdict(f"cycle4 lambda=0.95 {solver} diverges",
                            rep.status is S.Status.DIVERGED, rep.status.value, "Diverged"))
    rep = run_solver("vc", mdp, pol)
    out.append(_verdict("cycle4 lambda=0.95 vc converges", rep.converged, rep.status.value,
                        "Converged"))
    low = mdp.with_discount(0.5)
    rho = A.predicted_radius(spec, 0.5, "accelerated")
    out.append(_verdict("cycle4 lambda=0.5 accelerated radius < 1", rho < 1.0, rho, 1.0))
    rep = run_solver("a-vc", low, pol)
    out.append(_verdict("cycle4 lambda=0.5 a-vc converges", rep.converged, rep.status.value,
                        "Converged"))
    return out


LOWER_BOUND_SOLVERS = ("vi", "r-vi(0.9)", "r-vi(1.1)", "a-vi", "m-vi")


def lower_bound_suite(n: int = 100, discount: float = 0.95) -> list[dict]:
    mdp = hard_chain(n, discount)
    v_star, _ = exact_optimal_value(mdp)
    # M-VI grows transiently along the shift chain (non-normal B), so the
    # divergence detector is disabled: the bound concerns every s <= n-1
    stop = S.StopRule(epsilon=1e-300, max_iters=n - 1, divergence_factor=math.inf)
    out = []
    for solver in LOWER_BOUND_SOLVERS:
        rep = run_solver(solver, mdp, keep_iterates=True, stop=stop)
        lb = A.lower_bound_check(rep.iterates, mdp, v_star)
        out.append(_verdict(f"hard_chain({n}) {solver} zero pattern",
                            not lb.zero_pattern_violations and lb.checked_steps == n - 1,
                            len(lb.zero_pattern_violations), 0))
        out.append(_verdict(f"hard_chain({n}) {solver} error >= lambda^s/(1+lambda)",
                            not lb.bound_violations and lb.checked_steps == n - 1,
                            len(lb.bound_violations), 0))
    return out


def certificates_suite(samples: int = 10, steps: int = 100, discount: float = 0.99,
                       tol: float = A.SANDWICH_TOL) -> list[dict]:
    out = []
    stop = S.StopRule(epsilon=1e-300, max_iters=steps + 1)
    for seed in range(samples):
        mdp = garnet(GarnetSpec(10, 3, seed=seed), discount)
        v_star, pi_star = exact_optimal_value(mdp)
        rep = run_solver("a-vi", mdp, stop=stop, keep_iterates=True)
        cert = A.ltv_certificate(mdp, rep.iterates, v_star, pi_star, tol=tol)
        out.append(_verdict(f"garnet(10,3,seed={seed}) sandwich",
                            cert.ok and len(cert.steps) >= steps, cert.worst_violation, 0.0, tol))
        out.append(_verdict(f"garnet(10,3,seed={seed}) mu reconstruction",
                            cert.worst_reconstruction <= tol, cert.worst_reconstruction, 0.0, tol))
    return out


def run_suite(name: str) -> list[dict]:
    table = {"rates": rates_suite, "divergence": divergence_suite,
             "lower-bound": lower_bound_suite, "certificates": certificates_suite}
    if name not in table:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", A.RadiusLowerBoundWarning)
        verdicts = table[name]()
    for v in verdicts:
        for k in ("value", "expected"):
            if isinstance(v[k], float) and not math.isfinite(v[k]):
                v[k] = repr(v[k])
    return verdicts
