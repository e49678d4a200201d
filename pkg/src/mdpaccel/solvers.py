"""Iterative value iteration / value computation schemes.

Every scheme is a two-term recurrence ``v_{s+1} = step(v_s, v_{s-1}, s)``
driven by one loop that owns the stopping rule, divergence detection and
trace recording. One-step schemes simply ignore ``v_{s-1}``.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mdp import Mdp, Policy, bellman_apply, induce_chain, policy_apply, q_values


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes for the relaxed, accelerated and momentum schemes.

    ``second`` is the extrapolation weight (gamma) for acceleration or the
    momentum weight (beta) for heavy-ball; it is ignored by relaxed VI.
    """

    kind: str = "constant"
    alpha: float = 1.0
    second: float = 0.0
    c: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind in ("constant", "constant_pair"):
            if not self.alpha > 0:
                raise ValueError(f"constant step size must be positive, got {self.alpha}")
        elif self.kind == "diminishing":
            if not (self.c > 0 and 0 < self.p <= 1):
                raise ValueError("diminishing rule c/(s+1)^p needs c > 0 and p in (0, 1]")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls("constant", alpha=alpha)

    @classmethod
    def pair(cls, alpha: float, second: float) -> "StepSchedule":
        return cls("constant_pair", alpha=alpha, second=second)

    @classmethod
    def diminishing(cls, c: float = 1.0, p: float = 1.0) -> "StepSchedule":
        return cls("diminishing", c=c, p=p)

    def alpha_at(self, s: int) -> float:
        if self.kind == "diminishing":
            return self.c / (s + 1) ** self.p
        return self.alpha

    def second_at(self, s: int) -> float:
        return self.second

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant(alpha={self.alpha!r})"
        if self.kind == "constant_pair":
            return f"constant_pair(alpha={self.alpha!r},second={self.second!r})"
        return f"diminishing(c={self.c!r},p={self.p!r})"


@dataclass(frozen=True)
class StopRule:
    epsilon: float = 1.0
    max_iters: int = 100_000
    divergence_factor: float = 1e8

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class Trace:
    """``diff_norms[k]`` is ``||v_{k+1} - v_k||``; ``errors[k]`` is ``||v_k - oracle||``."""

    diff_norms: list[float] = field(default_factory=list)
    errors: list[float] | None = None

    def rows(self):
        n = len(self.diff_norms)
        for s in range(n + 1):
            diff = self.diff_norms[s - 1] if s else None
            err = self.errors[s] if self.errors is not None else None
            yield s, diff, err


@dataclass
class SolveReport:
    solver: str
    status: Status
    iterations: int
    final_v: np.ndarray
    greedy_policy: Policy | None
    wall_time_ns: int
    trace: Trace
    schedule: str
    discount: float
    epsilon: float
    final_residual: float
    notes: list[str] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def to_json(self) -> dict:
        return {
            "solver": self.solver,
            "status": self.status.value,
            "iterations": self.iterations,
            "wall_time_ns": self.wall_time_ns,
            "schedule": self.schedule,
            "lambda": self.discount,
            "epsilon": self.epsilon,
            "final_residual": self.final_residual,
            "notes": list(self.notes),
        }


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "diff_norm", "error_to_oracle"])
        for s, diff, err in trace.rows():
            w.writerow([s, "" if diff is None else repr(diff), "" if err is None else repr(err)])


def read_trace_csv(path) -> Trace:
    diffs: list[float] = []
    errors: list[float] = []
    have_errors = True
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["diff_norm"]:
                diffs.append(float(row["diff_norm"]))
            if row["error_to_oracle"]:
                errors.append(float(row["error_to_oracle"]))
            else:
                have_errors = False
    return Trace(diffs, errors if have_errors and errors else None)


def stopping_threshold(discount: float, epsilon: float) -> float:
    """Successive-difference level that certifies an epsilon-optimal greedy policy."""
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return epsilon * (1.0 - discount) / (2.0 * discount)


def nesterov_step_sizes(discount: float) -> tuple[float, float]:
    """(alpha, gamma) = (1/(1+l), (1 - sqrt(1-l^2))/l)."""
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    root = math.sqrt(1.0 - discount * discount)
    return 1.0 / (1.0 + discount), (1.0 - root) / discount


def aggressive_step_sizes(discount: float) -> tuple[float, float]:
    """(1, (1 - sqrt(1-l))^2 / l): the tuning for smoothness 1, strong convexity 1-l."""
    return 1.0, (1.0 - math.sqrt(1.0 - discount)) ** 2 / discount


def momentum_step_sizes(discount: float) -> tuple[float, float]:
    """(alpha, beta) = (2/(1+q), (1-q)/(1+q)) with q = sqrt(1-l^2); alpha = 1 + beta."""
    if not 0.0 < discount < 1.0:
        raise ValueError(f"discount must lie in (0, 1), got {discount}")
    q = math.sqrt(1.0 - discount * discount)
    return 2.0 / (1.0 + q), (1.0 - q) / (1.0 + q)


def rvi_rate_factor(discount: float, alpha: float) -> float:
    return discount * alpha + abs(1.0 - alpha)


def _target_operator(mdp: Mdp, policy: Policy | None) -> Callable[[np.ndarray], np.ndarray]:
    if policy is None:
        return lambda v: np.max(q_values(mdp, v), axis=1)
    chain = induce_chain(mdp, policy)
    L, r, lam = chain.matrix, chain.reward, mdp.discount
    return lambda v: r + lam * (L @ v)


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def _drive(
    name: str,
    mdp: Mdp,
    policy: Policy | None,
    step: Callable[[np.ndarray, np.ndarray | None, int], np.ndarray],
    v0,
    v1,
    stop: StopRule,
    oracle,
    schedule: str,
    notes: list[str],
    keep_iterates: bool,
    stop_scale: Callable[[int], float] | None = None,
) -> SolveReport:
    thr = stopping_threshold(mdp.discount, stop.epsilon)
    cur = np.zeros(mdp.n) if v0 is None else np.array(v0, dtype=np.float64)
    if cur.shape != (mdp.n,) or not np.all(np.isfinite(cur)):
        raise ValueError("initial vector must be finite with length n")
    oracle = None if oracle is None else np.asarray(oracle, dtype=np.float64)
    trace = Trace(errors=[] if oracle is not None else None)
    if oracle is not None:
        trace.errors.append(_sup(cur - oracle))
    iterates = [cur.copy()] if keep_iterates else None
    prev = None
    first = None
    status = Status.MAX_ITERS
    s = 0
    t0 = time.perf_counter_ns()
    with np.errstate(over="ignore", invalid="ignore"):
        while s < stop.max_iters:
            nxt = np.array(v1, dtype=np.float64) if (s == 0 and v1 is not None) else step(cur, prev, s)
            s += 1
            diff = _sup(nxt - cur)
            trace.diff_norms.append(diff)
            if oracle is not None:
                trace.errors.append(_sup(nxt - oracle))
            if keep_iterates:
                iterates.append(nxt.copy())
            prev, cur = cur, nxt
            if not math.isfinite(diff) or not np.all(np.isfinite(cur)):
                status = Status.DIVERGED
                break
            if first is None:
                first = diff
            gauge = diff if stop_scale is None else diff / stop_scale(s - 1)
            if gauge <= thr:
                status = Status.CONVERGED
                break
            if diff > stop.divergence_factor * first:
                status = Status.DIVERGED
                break
    wall = time.perf_counter_ns() - t0

    greedy = None
    final_res = math.inf
    if np.all(np.isfinite(cur)):
        if policy is None:
            tv, greedy = bellman_apply(mdp, cur)
        else:
            tv = policy_apply(induce_chain(mdp, policy), mdp.discount, cur)
        final_res = _sup(cur - tv)
    return SolveReport(name, status, s, cur, greedy, wall, trace, schedule, mdp.discount,
                       stop.epsilon, final_res, notes, iterates)


def run_vi(mdp: Mdp, v0=None, stop: StopRule = StopRule(), *, oracle=None,
           keep_iterates: bool = False) -> SolveReport:
    F = _target_operator(mdp, None)
    return _drive("vi", mdp, None, lambda v, _p, _s: F(v), v0, None, stop, oracle,
                  "constant(alpha=1.0)", [], keep_iterates)


def run_vc(mdp: Mdp, policy: Policy, v0=None, stop: StopRule = StopRule(), *, oracle=None,
           keep_iterates: bool = False) -> SolveReport:
    F = _target_operator(mdp, policy)
    return _drive("vc", mdp, policy, lambda v, _p, _s: F(v), v0, None, stop, oracle,
                  "constant(alpha=1.0)", [], keep_iterates)


def _alpha_notes(discount: float, schedule: StepSchedule) -> list[str]:
    if schedule.kind == "diminishing":
        return []
    a = schedule.alpha
    if rvi_rate_factor(discount, a) >= 1.0 - 1e-12:
        return [f"no convergence guarantee: alpha={a!r} outside (0, 2/(1+lambda))"]
    return []


def run_rvi(mdp: Mdp, v0=None, schedule: StepSchedule = StepSchedule.constant(1.0),
            stop: StopRule = StopRule(), *, policy: Policy | None = None, oracle=None,
            keep_iterates: bool = False) -> SolveReport:
    """Relaxed VI ``v - alpha_s (v - F(v))``; ``policy`` switches F from T to T_pi."""
    F = _target_operator(mdp, policy)

    def step(v, _prev, s):
        a = schedule.alpha_at(s)
        return v - a * (v - F(v))

    name = "r-vi" if policy is None else "r-vc"
    # With shrinking steps the raw difference stalls long before convergence.
    # Test the Bellman residual diff / alpha_s against lambda * threshold
    # instead: then ||v - v*|| <= eps / 2 and the greedy policy is eps-optimal.
    scale = None
    if schedule.kind == "diminishing":
        lam = mdp.discount
        scale = lambda s: schedule.alpha_at(s) * lam  # noqa: E731
    return _drive(name, mdp, policy, step, v0, None, stop, oracle, schedule.describe(),
                  _alpha_notes(mdp.discount, schedule), keep_iterates, scale)


def gauss_seidel_sweep(mdp: Mdp, v: np.ndarray, blocks=None) -> np.ndarray:
    """One ascending in-place sweep: state i sees the updated values of states < i."""
    out = np.array(v, dtype=np.float64)
    lam = mdp.discount
    if blocks is None:
        blocks = _state_blocks(mdp)
    for i, block in enumerate(blocks):
        out[i] = np.max(mdp.rewards[i] + lam * (block @ out))
    return out


def _state_blocks(mdp: Mdp):
    P = mdp.transitions
    if mdp.n * mdp.a * mdp.n <= 4_000_000:
        dense = mdp.dense_kernel()
        return [dense[i] for i in range(mdp.n)]
    return [P[i * mdp.a:(i + 1) * mdp.a] for i in range(mdp.n)]


def run_gs_vi(mdp: Mdp, v0=None, stop: StopRule = StopRule(), *, oracle=None,
              keep_iterates: bool = False) -> SolveReport:
    blocks = _state_blocks(mdp)
    return _drive("gs-vi", mdp, None, lambda v, _p, _s: gauss_seidel_sweep(mdp, v, blocks),
                  v0, None, stop, oracle, "constant(alpha=1.0)", [], keep_iterates)


def _default_v1(F, v0, n):
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=np.float64)
    return F(v0)


def run_accelerated(mdp: Mdp, policy: Policy | None = None, v0=None, v1=None,
                    schedule: StepSchedule | None = None, stop: StopRule = StopRule(), *,
                    oracle=None, keep_iterates: bool = False) -> SolveReport:
    """Nesterov-style scheme: extrapolate ``h = v_s + gamma (v_s - v_{s-1})``, then relax at h.

    ``policy=None`` targets the optimal value (A-VI); a policy targets its
    value vector (A-VC). Defaults: alpha = 1/(1+l), gamma = (1-sqrt(1-l^2))/l,
    ``v1 = F(v0)``.
    """
    if schedule is None:
        schedule = StepSchedule.pair(*nesterov_step_sizes(mdp.discount))
    F = _target_operator(mdp, policy)

    def step(v, prev, s):
        h = v + schedule.second_at(s) * (v - prev)
        return h - schedule.alpha_at(s) * (h - F(h))

    if v1 is None:
        v1 = _default_v1(F, v0, mdp.n)
    name = "a-vi" if policy is None else "a-vc"
    return _drive(name, mdp, policy, step, v0, v1, stop, oracle, schedule.describe(),
                  [], keep_iterates)


def run_momentum(mdp: Mdp, policy: Policy | None = None, v0=None, v1=None,
                 schedule: StepSchedule | None = None, stop: StopRule = StopRule(), *,
                 oracle=None, keep_iterates: bool = False) -> SolveReport:
    """Heavy-ball scheme ``v_s - alpha (v_s - F(v_s)) + beta (v_s - v_{s-1})``."""
    if schedule is None:
        schedule = StepSchedule.pair(*momentum_step_sizes(mdp.discount))
    F = _target_operator(mdp, policy)

    def step(v, prev, s):
        return v - schedule.alpha_at(s) * (v - F(v)) + schedule.second_at(s) * (v - prev)

    if v1 is None:
        v1 = _default_v1(F, v0, mdp.n)
    name = "m-vi" if policy is None else "m-vc"
    return _drive(name, mdp, policy, step, v0, v1, stop, oracle, schedule.describe(),
                  [], keep_iterates)


def estimate_rate(errors, discard: float = 0.25, min_points: int = 20) -> float:
    """Geometric rate from a least-squares fit of ``log(error)`` against iteration."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size < min_points:
        raise ValueError(f"need at least {min_points} trace points, got {e.size}")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("errors must be finite and strictly positive")
    k0 = int(e.size * discard)
    s = np.arange(k0, e.size, dtype=np.float64)
    slope, _ = np.polyfit(s, np.log(e[k0:]), 1)
    return float(np.exp(slope))
