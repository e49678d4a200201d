"""``mdpaccel`` command line: generate, solve, sweep, validate, plotdata, spectrum."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis as A
from . import bench as B
from . import solvers as S
from .io import save_mdp
from .mdp import exact_optimal_value, exact_policy_value, induce_chain


class ConfigError(Exception):
    pass


def _instance_args(p: argparse.ArgumentParser, sweep: bool = False) -> None:
    g = p.add_argument_group("instance")
    g.add_argument("--family", choices=B.FAMILIES, default=None if sweep else "garnet")
    g.add_argument("--instance", help="instance JSON file (implies --family file)")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--a", type=int, default=None)
    g.add_argument("--branch", type=float, default=None, help="successor fraction of n")
    g.add_argument("--density", type=float, default=None, help="edge density (reversible-walk)")
    g.add_argument("--seed", type=int, default=0)


def _defaults(ns) -> dict:
    fam = "file" if ns.instance else ns.family
    return dict(family=fam, n=ns.n if ns.n is not None else 50, a=ns.a if ns.a is not None else 30,
                branch=ns.branch if ns.branch is not None else 0.8,
                density=ns.density if ns.density is not None else 0.2,
                seed=ns.seed, instance=ns.instance)


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_generate(ns) -> int:
    mdp = B.build_instance(discount=ns.discount, **_defaults(ns))
    save_mdp(mdp, ns.out)
    print(f"wrote {ns.out} (n={mdp.n}, a={mdp.a})")
    return 0


def cmd_solve(ns) -> int:
    kw = _defaults(ns)
    mdp = B.build_instance(discount=ns.discount, **kw)
    spec = B.parse_solver(ns.solver)
    policy = B.build_policy(ns.policy, mdp, ns.seed) if spec.needs_policy else None
    oracle = None
    if ns.oracle or ns.init == "oracle":
        oracle = (exact_policy_value(mdp, policy) if policy is not None
                  else exact_optimal_value(mdp)[0])
    v0 = oracle if ns.init == "oracle" else None
    stop = S.StopRule(ns.epsilon, ns.max_iters)
    rep = B.run_solver(spec, mdp, policy, stop, v0=v0, oracle=oracle if ns.oracle else None)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = rep.to_json()
    doc.update(family=kw["family"], n=mdp.n, a=mdp.a, seed=ns.seed)
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    S.write_trace_csv(rep.trace, out / "trace.csv")
    print(f"{rep.solver}: {rep.status.value} after {rep.iterations} iterations "
          f"(residual {rep.final_residual:.3e})")
    return B.EXIT_CODES[rep.status]


def cmd_sweep(ns) -> int:
    overrides = {k: getattr(ns, k) for k in ("family", "n", "a", "branch", "density",
                                             "instance", "epsilon", "samples", "seed_base",
                                             "policy", "max_iters", "workers", "out")}
    if ns.instance:
        overrides["family"] = "file"
    if ns.solvers:
        overrides["solvers"] = B.split_solver_list(ns.solvers)
    if ns.lambdas:
        overrides["lambdas"] = [float(x) for x in ns.lambdas.split(",")]
    try:
        if ns.config:
            cfg = B.ExperimentConfig.from_file(ns.config, **overrides)
        else:
            cfg = B.ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    rows = B.run_sweep(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    B.write_summary(rows, out / "summary.csv")
    B.write_aggregate(rows, out / "aggregate.csv")
    failed = sum(r["status"].startswith("Error") for r in rows)
    print(f"{len(rows)} cells written to {out / 'summary.csv'} ({failed} failed)")
    return 0


def cmd_validate(ns) -> int:
    from .validation import run_suite

    suites = list(ns.suite) if ns.suite else ["rates", "divergence", "lower-bound",
                                              "certificates"]
    report = {name: run_suite(name) for name in suites}
    _write_json(report, ns.out)
    bad = [v["check"] for vs in report.values() for v in vs if not v["passed"]]
    for name, vs in report.items():
        print(f"{name}: {sum(v['passed'] for v in vs)}/{len(vs)} passed", file=sys.stderr)
    return 1 if bad else 0


def cmd_plotdata(ns) -> int:
    labels = ns.label or []
    if labels and len(labels) != len(ns.traces):
        raise ConfigError("--label must be given once per trace")
    traces = {}
    for i, path in enumerate(ns.traces):
        label = labels[i] if labels else Path(path).parent.name or Path(path).stem
        tr = S.read_trace_csv(path)
        if tr.errors is None:
            raise ConfigError(f"{path} has no error_to_oracle column; rerun solve with --oracle")
        traces[label] = tr
    rows = B.plot_rows(traces, ns.reference_lambda, ns.reference_length)
    B.write_plot_rows(rows, ns.out)
    print(f"{len(rows)} rows written to {ns.out}")
    return 0


def cmd_spectrum(ns) -> int:
    mdp = B.build_instance(discount=ns.discount, **_defaults(ns))
    policy = B.build_policy(ns.policy, mdp, ns.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", A.RadiusLowerBoundWarning)
        rep = A.spectrum_report(induce_chain(mdp, policy), ns.discount, ns.variant)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _write_json(rep, ns.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdpaccel", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded instance to JSON")
    _instance_args(g)
    g.add_argument("--lambda", dest="discount", type=float, default=0.9)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one solver; exit 0/2/3 on Converged/Diverged/MaxIters")
    _instance_args(s)
    s.add_argument("--lambda", dest="discount", type=float, required=True)
    s.add_argument("--solver", required=True, help="e.g. vi, a-vc, r-vi(1.1), m-vi(1.2,0.2)")
    s.add_argument("--epsilon", type=float, default=1.0)
    s.add_argument("--max-iters", type=int, default=100_000)
    s.add_argument("--policy", choices=("only", "random", "uniform"), default="random")
    s.add_argument("--init", choices=("zero", "oracle"), default="zero")
    s.add_argument("--oracle", action="store_true", help="record error to the exact solution")
    s.add_argument("--out", default="run")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="seed x solver x lambda grid to summary CSV")
    _instance_args(w, sweep=True)
    w.add_argument("--config", help="JSON config; flags override its keys")
    w.add_argument("--solvers", help="comma-separated solver list, e.g. vi,r-vi(1.1),a-vi")
    w.add_argument("--lambdas", help="','-separated discount list")
    w.add_argument("--epsilon", type=float)
    w.add_argument("--samples", type=int)
    w.add_argument("--seed-base", type=int)
    w.add_argument("--policy", choices=("only", "random", "uniform"))
    w.add_argument("--max-iters", type=int)
    w.add_argument("--workers", type=int)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="run validation suites and emit JSON verdicts")
    v.add_argument("suite", nargs="*", help="rates, divergence, lower-bound, certificates")
    v.add_argument("--out")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("plotdata", help="merge traces into solver,iteration,log10_error CSV")
    d.add_argument("traces", nargs="+")
    d.add_argument("--label", action="append")
    d.add_argument("--reference-lambda", type=float)
    d.add_argument("--reference-length", type=int)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_plotdata)

    c = sub.add_parser("spectrum", help="predicted radius and eigenvalues of the iteration matrix")
    _instance_args(c)
    c.add_argument("--lambda", dest="discount", type=float, required=True)
    c.add_argument("--policy", choices=("only", "random", "uniform"), default="only")
    c.add_argument("--variant", choices=("accelerated", "momentum"), default="accelerated")
    c.add_argument("--out")
    c.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (ConfigError, ValueError, FileNotFoundError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
