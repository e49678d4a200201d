"""Error curves log10 ||v_s - v*|| on the hard chain, with a lambda^s reference.

No first-order method beats lambda^s/(1+lambda) before step n. The shift
structure is strongly non-normal, so the momentum schemes can grow transiently
by many orders of magnitude before they settle.

    python3 scripts/hard_chain_errors.py --n 100 --lambda 0.95 --steps 300
"""

import argparse
import math
from pathlib import Path

from mdpaccel.bench import plot_rows, run_solver, write_plot_rows
from mdpaccel.instances import hard_chain, hard_chain_value
from mdpaccel.solvers import StopRule, write_trace_csv

SOLVERS = ["vi", "r-vi(0.9)", "r-vi(1.1)", "a-vi", "a-vi-aggressive"]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--lambda", dest="discount", type=float, default=0.95)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--out", default="results/hard_chain")
    args = p.parse_args()
    mdp = hard_chain(args.n, args.discount)
    v_star = hard_chain_value(args.n, args.discount)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stop = StopRule(epsilon=1e-300, max_iters=args.steps, divergence_factor=math.inf)
    traces = {}
    for solver in SOLVERS:
        rep = run_solver(solver, mdp, stop=stop, oracle=v_star)
        traces[solver] = rep.trace
        write_trace_csv(rep.trace, out / f"{solver}.csv")
    rows = plot_rows(traces, reference_lambda=args.discount, reference_length=args.steps + 1)
    write_plot_rows(rows, out / "errors.csv")
    for solver, tr in traces.items():
        s = args.n - 1
        print(f"{solver:>16}: log10 error at s={s}: {math.log10(tr.errors[s]):8.3f}, "
              f"at s={args.steps}: {math.log10(tr.errors[-1]):8.3f}")
    print(f"{'lambda^s':>16}: at s={args.n - 1}: {(args.n - 1) * math.log10(args.discount):8.3f}")


if __name__ == "__main__":
    main()
