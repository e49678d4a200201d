"""Solver registry, instance families and the sweep harness behind the CLI."""

from __future__ import annotations

import csv
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from statistics import mean

import numpy as np

from . import solvers as S
from .instances import (GarnetSpec, cycle_mdp, garnet, hard_chain, only_policy,
                        random_policy, reversible_walk)
from .io import load_mdp
from .mdp import Mdp, Policy

SUMMARY_HEADER = ["family", "n", "a", "seed", "solver", "schedule", "lambda", "epsilon",
                  "status", "iterations", "wall_time_ms", "final_residual"]
AGGREGATE_HEADER = ["family", "n", "a", "solver", "lambda", "samples", "converged",
                    "mean_iterations", "min_iterations", "max_iterations",
                    "mean_wall_time_ms", "min_wall_time_ms", "max_wall_time_ms"]
DEFAULT_SWEEP_SOLVERS = ("vi", "gs-vi", "r-vi(0.9)", "r-vi(1.1)", "a-vi")
EXIT_CODES = {S.Status.CONVERGED: 0, S.Status.DIVERGED: 2, S.Status.MAX_ITERS: 3}

_ARGS = re.compile(r"^(?P<base>[a-z\-]+?)(?:\((?P<args>[^)]*)\))?$")


@dataclass(frozen=True)
class SolverSpec:
    """A parsed solver name such as ``a-vc``, ``r-vi(1.1)`` or ``m-vi(1.2,0.2)``."""

    base: str
    args: tuple[float, ...] = ()

    @property
    def needs_policy(self) -> bool:
        return self.base.endswith("vc") or self.base in ("a-vc-aggressive",)

    @property
    def label(self) -> str:
        if not self.args:
            return self.base
        return f"{self.base}({','.join(repr(x) for x in self.args)})"


KNOWN = {"vi", "vc", "gs-vi", "r-vi", "r-vc", "r-vi-dim", "a-vi", "a-vc", "m-vi", "m-vc",
         "a-vi-aggressive", "a-vc-aggressive"}


def parse_solver(name: str) -> SolverSpec:
    m = _ARGS.match(name.strip().lower())
    if not m or m.group("base") not in KNOWN:
        raise ValueError(f"unknown solver {name!r}; known: {sorted(KNOWN)}")
    raw = m.group("args")
    args = tuple(float(x) for x in raw.split(",")) if raw else ()
    base = m.group("base")
    if base in ("r-vi", "r-vc") and len(args) != 1:
        raise ValueError(f"{base} needs one step size, e.g. {base}(1.1)")
    if base in ("a-vi", "a-vc", "m-vi", "m-vc") and len(args) not in (0, 2):
        raise ValueError(f"{base} takes no arguments or (alpha, second)")
    return SolverSpec(base, args)


def split_solver_list(text: str) -> list[str]:
    """Split ``vi,r-vi(1.1),m-vi(1.2,0.2)`` on commas outside parentheses."""
    return [t.strip() for t in re.split(r",(?![^()]*\))", text) if t.strip()]


def run_solver(spec: SolverSpec | str, mdp: Mdp, policy: Policy | None = None,
               stop: S.StopRule = S.StopRule(), *, v0=None, oracle=None,
               keep_iterates: bool = False) -> S.SolveReport:
    if isinstance(spec, str):
        spec = parse_solver(spec)
    if spec.needs_policy and policy is None:
        raise ValueError(f"solver {spec.base} evaluates a policy; none given")
    kw = dict(oracle=oracle, keep_iterates=keep_iterates)
    lam = mdp.discount
    b = spec.base
    if b == "vi":
        rep = S.run_vi(mdp, v0, stop, **kw)
    elif b == "vc":
        rep = S.run_vc(mdp, policy, v0, stop, **kw)
    elif b == "gs-vi":
        rep = S.run_gs_vi(mdp, v0, stop, **kw)
    elif b in ("r-vi", "r-vc"):
        rep = S.run_rvi(mdp, v0, S.StepSchedule.constant(spec.args[0]), stop,
                        policy=policy if b == "r-vc" else None, **kw)
    elif b == "r-vi-dim":
        c, p = (spec.args + (1.0, 1.0))[:2] if spec.args else (1.0, 1.0)
        rep = S.run_rvi(mdp, v0, S.StepSchedule.diminishing(c, p), stop, **kw)
    elif b in ("a-vi", "a-vc", "a-vi-aggressive", "a-vc-aggressive"):
        if b.endswith("aggressive"):
            sched = S.StepSchedule.pair(*S.aggressive_step_sizes(lam))
        elif spec.args:
            sched = S.StepSchedule.pair(*spec.args)
        else:
            sched = S.StepSchedule.pair(*S.nesterov_step_sizes(lam))
        rep = S.run_accelerated(mdp, policy if "vc" in b else None, v0, None, sched, stop, **kw)
    elif b in ("m-vi", "m-vc"):
        sched = (S.StepSchedule.pair(*spec.args) if spec.args
                 else S.StepSchedule.pair(*S.momentum_step_sizes(lam)))
        rep = S.run_momentum(mdp, policy if b == "m-vc" else None, v0, None, sched, stop, **kw)
    else:  # pragma: no cover - parse_solver guards this
        raise ValueError(b)
    rep.solver = spec.label
    return rep


# ---------------------------------------------------------------------------
# instance families
# ---------------------------------------------------------------------------

FAMILIES = ("garnet", "hard-chain", "cycle", "reversible-walk", "file")


def build_instance(family: str, discount: float, *, n: int = 50, a: int = 30,
                   branch: float = 0.8, density: float = 0.2, seed: int = 0,
                   instance: str | None = None) -> Mdp:
    if family == "garnet":
        return garnet(GarnetSpec(n, a, branch=branch, seed=seed), discount)
    if family == "hard-chain":
        return hard_chain(n, discount)
    if family == "cycle":
        return cycle_mdp(n, discount)
    if family == "reversible-walk":
        return reversible_walk(n, density, seed, discount=discount)
    if family == "file":
        if instance is None:
            raise ValueError("family 'file' needs an instance path")
        return load_mdp(instance).with_discount(discount)
    raise ValueError(f"unknown family {family!r}; choose from {FAMILIES}")


def build_policy(kind: str, mdp: Mdp, seed: int) -> Policy:
    if kind == "only":
        if mdp.a != 1:
            raise ValueError("--policy only needs a single-action MDP")
        return only_policy(mdp)
    if kind == "random":
        return random_policy(mdp, seed)
    if kind == "uniform":
        return random_policy(mdp, seed, randomized=True)
    raise ValueError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    family: str = "garnet"
    n: int = 50
    a: int = 30
    branch: float = 0.8
    density: float = 0.2
    instance: str | None = None
    solvers: list[str] = field(default_factory=lambda: list(DEFAULT_SWEEP_SOLVERS))
    lambdas: list[float] = field(default_factory=lambda: [0.9, 0.99])
    epsilon: float = 1.0
    samples: int = 10
    seed_base: int = 0
    policy: str = "random"
    max_iters: int = 100_000
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        if not self.solvers or not self.lambdas:
            raise ValueError("solver and lambda lists must be nonempty")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        for s in self.solvers:
            parse_solver(s)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)

    def instance_kwargs(self, seed: int) -> dict:
        return dict(n=self.n, a=self.a, branch=self.branch, density=self.density,
                    seed=seed, instance=self.instance)


@lru_cache(maxsize=8)
def _cached_instance(family, n, a, branch, density, seed, instance) -> Mdp:
    # discount is swapped per cell; 0.5 is a placeholder
    return build_instance(family, 0.5, n=n, a=a, branch=branch, density=density,
                          seed=seed, instance=instance)


def _run_cell(args) -> dict:
    cfg_dict, seed, solver, lam = args
    cfg = ExperimentConfig(**cfg_dict)
    kw = cfg.instance_kwargs(seed)
    base = _cached_instance(cfg.family, kw["n"], kw["a"], kw["branch"], kw["density"],
                            seed, kw["instance"])
    mdp = base.with_discount(lam)
    spec = parse_solver(solver)
    row = {"family": cfg.family, "n": mdp.n, "a": mdp.a, "seed": seed, "solver": spec.label,
           "lambda": lam, "epsilon": cfg.epsilon}
    try:
        pol = build_policy(cfg.policy, mdp, seed) if spec.needs_policy else None
        rep = run_solver(spec, mdp, pol, S.StopRule(cfg.epsilon, cfg.max_iters))
        row.update(schedule=rep.schedule, status=rep.status.value, iterations=rep.iterations,
                   wall_time_ms=rep.wall_time_ns / 1e6, final_residual=rep.final_residual)
    except Exception as exc:  # a failed cell is recorded, never fatal
        row.update(schedule="", status=f"Error: {type(exc).__name__}: {exc}", iterations="",
                   wall_time_ms="", final_residual="")
    return row


def sweep_cells(cfg: ExperimentConfig):
    d = asdict(cfg)
    for k in range(cfg.samples):
        seed = cfg.seed_base + k
        for solver in cfg.solvers:
            for lam in cfg.lambdas:
                yield d, seed, solver, float(lam)


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Run every (seed, solver, lambda) cell; rows come back in that order."""
    cells = list(sweep_cells(cfg))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_run_cell, cells))
    return [_run_cell(c) for c in cells]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_summary(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in SUMMARY_HEADER])


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["family"], r["n"], r["a"], r["solver"], r["lambda"]), []).append(r)
    out = []
    for (fam, n, a, solver, lam), rs in groups.items():
        ok = [r for r in rs if isinstance(r["iterations"], int)]
        its = [r["iterations"] for r in ok] or [math.nan]
        wt = [r["wall_time_ms"] for r in ok] or [math.nan]
        out.append({"family": fam, "n": n, "a": a, "solver": solver, "lambda": lam,
                    "samples": len(rs),
                    "converged": sum(r["status"] == "Converged" for r in rs),
                    "mean_iterations": mean(its), "min_iterations": min(its),
                    "max_iterations": max(its), "mean_wall_time_ms": mean(wt),
                    "min_wall_time_ms": min(wt), "max_wall_time_ms": max(wt)})
    return out


def write_aggregate(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_HEADER)
        for r in aggregate(rows):
            w.writerow([_fmt(r[k]) for k in AGGREGATE_HEADER])


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

def plot_rows(traces: dict[str, S.Trace], reference_lambda: float | None = None,
              reference_length: int | None = None) -> list[tuple[str, int, float]]:
    """Long-form ``(solver, iteration, log10_error)`` rows."""
    rows = []
    longest = 0
    for label, tr in traces.items():
        if tr.errors is None:
            raise ValueError(f"trace {label!r} has no error_to_oracle column")
        with np.errstate(divide="ignore"):
            logs = np.log10(np.asarray(tr.errors, dtype=np.float64))
        rows.extend((label, s, float(x)) for s, x in enumerate(logs))
        longest = max(longest, len(tr.errors))
    if reference_lambda is not None:
        length = reference_length if reference_length is not None else longest
        rows.extend(("lambda^s", s, s * math.log10(reference_lambda)) for s in range(length))
    return rows


def write_plot_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "iteration", "log10_error"])
        for label, s, x in rows:
            w.writerow([label, s, repr(x)])
