"""VC vs A-VC vs M-VC on random Garnet MDPs, evaluating a random policy.

Writes summary.csv and aggregate.csv per instance size under --out.

    python3 scripts/value_computation.py --samples 10 --out results/value
"""

import argparse
from pathlib import Path

from mdpaccel.bench import ExperimentConfig, run_sweep, write_aggregate, write_summary

SIZES = ((150, 100), (50, 30))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lambdas", default="0.8,0.9,0.95,0.99,0.999")
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="results/value")
    args = p.parse_args()
    lambdas = [float(x) for x in args.lambdas.split(",")]
    for n, a in SIZES:
        out = Path(args.out) / f"garnet_{n}x{a}"
        cfg = ExperimentConfig(family="garnet", n=n, a=a, solvers=["vc", "a-vc", "m-vc"],
                               lambdas=lambdas, epsilon=args.epsilon, samples=args.samples,
                               policy="random", workers=args.workers, out=str(out))
        rows = run_sweep(cfg)
        out.mkdir(parents=True, exist_ok=True)
        write_summary(rows, out / "summary.csv")
        write_aggregate(rows, out / "aggregate.csv")
        print(f"garnet({n},{a}): {len(rows)} cells -> {out}")


if __name__ == "__main__":
    main()
