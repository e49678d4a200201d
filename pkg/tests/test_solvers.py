import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpaccel import solvers as S
from mdpaccel.instances import (GarnetSpec, cycle_mdp, garnet, hard_chain, only_policy,
                                random_policy, reversible_walk)
from mdpaccel.mdp import exact_optimal_value, exact_policy_value

GARNET = garnet(GarnetSpec(15, 4, seed=21), 0.9)
V_STAR, PI_STAR = exact_optimal_value(GARNET)
lambdas = st.floats(1e-3, 0.999)


# --- step sizes and thresholds ---------------------------------------------

def test_threshold_values():
    assert S.stopping_threshold(0.9, 1.0) == pytest.approx(0.1 / 1.8)
    assert S.stopping_threshold(0.5, 1.0) == 0.5
    assert S.stopping_threshold(0.9, 3.0) == pytest.approx(3 * S.stopping_threshold(0.9, 1.0))
    with pytest.raises(ValueError):
        S.stopping_threshold(0.0, 1.0)
    with pytest.raises(ValueError):
        S.stopping_threshold(0.9, 0.0)


def test_nesterov_values():
    a, g = S.nesterov_step_sizes(0.8)
    assert a == pytest.approx(1 / 1.8) and g == pytest.approx(0.5)
    assert S.nesterov_step_sizes(0.6)[1] == pytest.approx(1 / 3)
    a, g = S.nesterov_step_sizes(1e-8)
    assert a == pytest.approx(1.0) and g == pytest.approx(0.0, abs=1e-7)


def test_momentum_values():
    a, b = S.momentum_step_sizes(0.8)
    assert (a, b) == (pytest.approx(1.25), pytest.approx(0.25))
    a, b = S.momentum_step_sizes(0.6)
    assert (a, b) == (pytest.approx(10 / 9), pytest.approx(1 / 9))
    a, b = S.momentum_step_sizes(1e-8)
    assert a == pytest.approx(1.0) and b == pytest.approx(0.0, abs=1e-7)


@given(lam=lambdas)
def test_momentum_identity(lam):
    a, b = S.momentum_step_sizes(lam)
    assert abs(a - (1.0 + b)) <= 4 * np.finfo(float).eps


def test_aggressive_values():
    a, g = S.aggressive_step_sizes(0.95)
    assert a == 1.0
    assert g == pytest.approx((1 - math.sqrt(0.05)) ** 2 / 0.95)


def test_schedule_validation():
    with pytest.raises(ValueError):
        S.StepSchedule.constant(0.0)
    with pytest.raises(ValueError):
        S.StepSchedule.diminishing(c=-1.0)
    d = S.StepSchedule.diminishing(1.0, 1.0)
    assert [d.alpha_at(s) for s in range(3)] == [1.0, 0.5, pytest.approx(1 / 3)]


# --- VI, VC, GS-VI ----------------------------------------------------------

def test_vi_chain3_iterates(chain3):
    rep = S.run_vi(chain3, stop=S.StopRule(max_iters=3, epsilon=1e-12), keep_iterates=True)
    want = [[0, 0, 0], [1, 0, 0], [1.5, 0.5, 0], [1.75, 0.75, 0.25]]
    np.testing.assert_array_equal(np.array(rep.iterates), want)
    assert rep.status is S.Status.MAX_ITERS


def test_vi_from_fixed_point():
    rep = S.run_vi(GARNET, v0=V_STAR)
    assert rep.converged and rep.iterations == 1


def test_vi_error_bound():
    rep = S.run_vi(GARNET, stop=S.StopRule(epsilon=1e-6), oracle=V_STAR)
    e = np.array(rep.trace.errors)
    s = np.arange(e.size)
    assert np.all(e <= GARNET.discount ** s * e[0] * (1 + 1e-9) + 1e-12)


def test_vi_difference_rate_garnet():
    mdp = garnet(GarnetSpec(50, 30, seed=0), 0.95)
    rep = S.run_vi(mdp, stop=S.StopRule(epsilon=1e-6))
    assert S.estimate_rate(rep.trace.diff_norms) == pytest.approx(0.95, abs=0.02)


def test_vc_cycle4(cycle4):
    pol = only_policy(cycle4)
    rep = S.run_vc(cycle4, pol)
    assert rep.converged
    assert np.max(np.abs(rep.final_v - np.array([16, 2, 4, 8]) / 15)) <= 1.0
    rep = S.run_vc(cycle4, pol, v0=exact_policy_value(cycle4, pol))
    assert rep.iterations == 1


def test_gs_sweep_chain3(chain3):
    np.testing.assert_array_equal(S.gauss_seidel_sweep(chain3, np.zeros(3)), [1.0, 0.5, 0.25])
    np.testing.assert_allclose(S.gauss_seidel_sweep(chain3, np.array([2.0, 1.0, 0.5])),
                               [2.0, 1.0, 0.5])


def test_gs_sparse_blocks_match_dense(small_garnet):
    v = np.linspace(0, 5, small_garnet.n)
    P = small_garnet.transitions
    sparse = [P[i * small_garnet.a:(i + 1) * small_garnet.a] for i in range(small_garnet.n)]
    np.testing.assert_allclose(S.gauss_seidel_sweep(small_garnet, v, sparse),
                               S.gauss_seidel_sweep(small_garnet, v), rtol=1e-14)


def test_gs_not_slower_than_vi():
    mdp = garnet(GarnetSpec(50, 30, seed=0), 0.99)
    gs, vi = S.run_gs_vi(mdp), S.run_vi(mdp)
    assert gs.converged and vi.converged
    assert gs.iterations <= vi.iterations
    v_star, _ = exact_optimal_value(mdp)
    assert np.max(np.abs(gs.final_v - v_star)) <= 1.0


# --- relaxed VI -------------------------------------------------------------

def test_rvi_alpha_one_is_vi(chain3):
    stop = S.StopRule(epsilon=1e-12, max_iters=30)
    a = S.run_vi(chain3, stop=stop, keep_iterates=True)
    b = S.run_rvi(chain3, schedule=S.StepSchedule.constant(1.0), stop=stop, keep_iterates=True)
    np.testing.assert_allclose(np.array(a.iterates), np.array(b.iterates), atol=1e-12, rtol=0)


def test_rvi_flags_boundary():
    lam = 0.9
    assert S.rvi_rate_factor(lam, 1.05) == pytest.approx(0.995)
    rep = S.run_rvi(GARNET, schedule=S.StepSchedule.constant(2 / 1.9), stop=S.StopRule(max_iters=5))
    assert any("no convergence guarantee" in n for n in rep.notes)
    rep = S.run_rvi(GARNET, schedule=S.StepSchedule.constant(1.05), stop=S.StopRule(max_iters=5))
    assert rep.notes == []


def test_rvi_ratio_below_factor(walk):
    pol = only_policy(walk)
    v_pi = exact_policy_value(walk, pol)
    rep = S.run_rvi(walk, schedule=S.StepSchedule.constant(1.05), policy=pol, oracle=v_pi,
                    stop=S.StopRule(epsilon=1e-6, max_iters=500))
    e = np.array(rep.trace.errors)
    assert np.all(e[1:] <= 0.995 * e[:-1] + 1e-9)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.05, 2 / 1.9 - 1e-3))
def test_prop1_bound(alpha):
    rep = S.run_rvi(GARNET, schedule=S.StepSchedule.constant(alpha), oracle=V_STAR,
                    stop=S.StopRule(epsilon=1e-3, max_iters=300))
    e = np.array(rep.trace.errors)
    q = S.rvi_rate_factor(0.9, alpha)
    assert np.all(e <= q ** np.arange(e.size) * e[0] * (1 + 1e-9) + 1e-9)


def test_rvi_large_alpha_diverges():
    rep = S.run_rvi(GARNET, schedule=S.StepSchedule.constant(3.0))
    assert rep.status is S.Status.DIVERGED
    assert rep.notes


def test_diminishing_schedule_decreases(walk):
    pol = only_policy(walk)
    v_pi = exact_policy_value(walk, pol)
    rep = S.run_rvi(walk, schedule=S.StepSchedule.diminishing(1.0, 0.5), policy=pol,
                    oracle=v_pi, stop=S.StopRule(epsilon=1e-300, max_iters=400))
    e = np.array(rep.trace.errors)
    win = 20
    smooth = np.convolve(e, np.ones(win) / win, mode="valid")[::win]
    assert np.all(np.diff(smooth) < 0)


# --- reductions -------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.04])
def test_reduction_chain(alpha):
    stop = S.StopRule(epsilon=1e-12, max_iters=60)
    rvi = S.run_rvi(GARNET, schedule=S.StepSchedule.constant(alpha), stop=stop,
                    keep_iterates=True)
    v1 = rvi.iterates[1]
    acc = S.run_accelerated(GARNET, v1=v1, schedule=S.StepSchedule.pair(alpha, 0.0), stop=stop,
                            keep_iterates=True)
    mom = S.run_momentum(GARNET, v1=v1, schedule=S.StepSchedule.pair(alpha, 0.0), stop=stop,
                         keep_iterates=True)
    for other in (acc, mom):
        assert len(other.iterates) == len(rvi.iterates)
        np.testing.assert_allclose(np.array(other.iterates), np.array(rvi.iterates),
                                   atol=1e-12 * (1 + np.max(np.abs(V_STAR))), rtol=0)
    if alpha == 1.0:
        vi = S.run_vi(GARNET, stop=stop, keep_iterates=True)
        np.testing.assert_allclose(np.array(vi.iterates), np.array(rvi.iterates), atol=1e-12,
                                   rtol=0)


def test_accelerated_default_v1():
    rep = S.run_accelerated(GARNET, stop=S.StopRule(max_iters=2), keep_iterates=True)
    from mdpaccel.mdp import bellman_apply
    np.testing.assert_array_equal(rep.iterates[1], bellman_apply(GARNET, np.zeros(GARNET.n))[0])


# --- accelerated and momentum -----------------------------------------------

def test_accelerated_faster_than_vc(walk):
    pol = only_policy(walk)
    vc = S.run_vc(walk.with_discount(0.99), pol)
    avc = S.run_accelerated(walk.with_discount(0.99), pol)
    mvc = S.run_momentum(walk.with_discount(0.99), pol)
    assert avc.converged and mvc.converged
    assert avc.iterations < vc.iterations and mvc.iterations < vc.iterations


def test_cycle_divergence():
    mdp = cycle_mdp(4, 0.95)
    pol = only_policy(mdp)
    assert S.run_accelerated(mdp, pol).status is S.Status.DIVERGED
    assert S.run_momentum(mdp, pol).status is S.Status.DIVERGED
    assert S.run_vc(mdp, pol).converged


@pytest.mark.parametrize("seed", range(4))
def test_no_false_divergence(seed):
    for lam in (0.5, 0.9, 0.99):
        mdp = garnet(GarnetSpec(20, 5, seed=seed), lam)
        pol = random_policy(mdp, seed)
        for rep in (S.run_vi(mdp), S.run_vc(mdp, pol), S.run_gs_vi(mdp)):
            assert rep.converged, (rep.solver, lam)
    for mdp in (hard_chain(30, 0.95), cycle_mdp(4, 0.95), reversible_walk(20, 0.3, seed)):
        assert S.run_vi(mdp).converged and S.run_gs_vi(mdp).converged


@pytest.mark.parametrize("runner", ["vi", "gs", "avi", "rvi"])
def test_stopping_soundness(runner):
    eps = 1.0
    for seed in range(3):
        mdp = garnet(GarnetSpec(20, 5, seed=seed), 0.95)
        v_star, _ = exact_optimal_value(mdp)
        run = {"vi": lambda: S.run_vi(mdp), "gs": lambda: S.run_gs_vi(mdp),
               "avi": lambda: S.run_accelerated(mdp),
               "rvi": lambda: S.run_rvi(mdp, schedule=S.StepSchedule.constant(1.02))}[runner]
        rep = run()
        assert rep.converged
        v_greedy = exact_policy_value(mdp, rep.greedy_policy)
        assert np.max(np.abs(v_greedy - v_star)) <= eps


def test_max_iters_status(small_garnet):
    rep = S.run_vi(small_garnet, stop=S.StopRule(max_iters=2))
    assert rep.status is S.Status.MAX_ITERS and rep.iterations == 2


def test_bad_initial_vector(small_garnet):
    with pytest.raises(ValueError):
        S.run_vi(small_garnet, v0=np.zeros(3))
    with pytest.raises(ValueError):
        S.run_vi(small_garnet, v0=np.full(small_garnet.n, np.nan))


# --- rate estimation --------------------------------------------------------

def test_estimate_rate_exact():
    assert S.estimate_rate(0.5 ** np.arange(40)) == pytest.approx(0.5, abs=1e-9)


def test_estimate_rate_noisy():
    rng = np.random.default_rng(0)
    e = 3 * 0.9 ** np.arange(60) + 1e-12 * rng.uniform(size=60)
    assert S.estimate_rate(e) == pytest.approx(0.9, abs=1e-6)


def test_estimate_rate_errors():
    with pytest.raises(ValueError):
        S.estimate_rate(np.ones(5))
    with pytest.raises(ValueError):
        S.estimate_rate(np.r_[np.ones(30), 0.0])


def test_vi_rate_on_walk(walk):
    v = exact_policy_value(walk, only_policy(walk))
    rep = S.run_vi(walk, stop=S.StopRule(epsilon=1e-8), oracle=v)
    assert S.estimate_rate(rep.trace.errors) == pytest.approx(0.9, abs=0.02)


# --- reports and traces -----------------------------------------------------

def test_trace_csv_roundtrip(tmp_path, chain3):
    rep = S.run_vi(chain3, oracle=np.array([2.0, 1.0, 0.5]), stop=S.StopRule(epsilon=1e-3))
    path = tmp_path / "t.csv"
    S.write_trace_csv(rep.trace, path)
    back = S.read_trace_csv(path)
    assert back.diff_norms == rep.trace.diff_norms
    assert back.errors == rep.trace.errors
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,diff_norm,error_to_oracle"
    assert lines[1].startswith("0,,")
    assert len(lines) == rep.iterations + 2


def test_trace_without_oracle(tmp_path, chain3):
    rep = S.run_vi(chain3)
    S.write_trace_csv(rep.trace, tmp_path / "t.csv")
    assert S.read_trace_csv(tmp_path / "t.csv").errors is None


def test_report_json(chain3):
    doc = S.run_vi(chain3).to_json()
    json.dumps(doc)
    assert doc["status"] == "Converged"
    assert set(doc) >= {"status", "iterations", "wall_time_ns", "solver", "schedule", "lambda",
                        "epsilon", "final_residual"}
