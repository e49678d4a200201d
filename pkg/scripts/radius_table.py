"""Predicted vs power-iteration spectral radius of the accelerated iteration matrices.

    python3 scripts/radius_table.py --lambdas 0.5,0.9,0.95,0.99
"""

import argparse

from mdpaccel import analysis as A
from mdpaccel.instances import cycle_mdp, only_policy, reversible_walk
from mdpaccel.mdp import induce_chain


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lambdas", default="0.5,0.9,0.95,0.99")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    chains = {"cycle4": cycle_mdp(4, 0.5), f"walk{args.n}": reversible_walk(args.n, 0.3, args.seed)}
    print("chain,variant,lambda,predicted,power,converges")
    for name, mdp in chains.items():
        chain = induce_chain(mdp, only_policy(mdp))
        for lam in (float(x) for x in args.lambdas.split(",")):
            for variant in ("accelerated", "momentum"):
                im = A.iteration_matrix(chain, lam, variant)
                power = A.power_iteration_radius(im.matrix)
                print(f"{name},{variant},{lam},{im.radius:.6f},{power:.6f},{im.radius < 1}")


if __name__ == "__main__":
    main()
