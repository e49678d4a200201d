"""Seeded generators for the MDP families used in the experiments.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; the draw
order inside each generator is fixed, so a seed pins the instance exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .mdp import Mdp, Policy


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class GarnetSpec:
    n: int
    a: int
    branch: float = 0.8
    reward_max: float = 100.0
    seed: int = 0
    # branch is read as a fraction of n unless absolute=True
    absolute: bool = False

    def resolved_branch(self) -> int:
        if self.absolute:
            b = int(self.branch)
        else:
            if not 0.0 < self.branch <= 1.0:
                raise ValueError(f"fractional branch must lie in (0, 1], got {self.branch}")
            b = max(1, int(round(self.branch * self.n)))
        if not 1 <= b <= self.n:
            raise ValueError(f"branch resolves to {b}, need 1 <= b <= n={self.n}")
        return b


def garnet(spec: GarnetSpec, discount: float = 0.9) -> Mdp:
    """Random Garnet MDP with exactly ``b`` successors per state-action pair."""
    n, a = spec.n, spec.a
    b = spec.resolved_branch()
    rng = make_rng(spec.seed)
    indices = np.empty((n * a, b), dtype=np.int64)
    probs = np.empty((n * a, b))
    for row in range(n * a):
        succ = rng.choice(n, size=b, replace=False)
        cuts = np.sort(rng.uniform(size=b - 1))
        indices[row] = succ
        probs[row] = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    rewards = rng.uniform(0.0, spec.reward_max, size=(n, a))
    P = sp.csr_matrix((probs.ravel(), indices.ravel(), np.arange(0, n * a * b + 1, b)),
                      shape=(n * a, n))
    prov = {"family": "garnet", **asdict(spec)}
    return Mdp(n, a, P, rewards, discount, provenance=prov)


def hard_chain(n: int, discount: float) -> Mdp:
    """One-action chain: state 0 absorbing with reward 1, state i moves to i - 1."""
    if n < 2:
        raise ValueError("hard_chain needs n >= 2")
    cols = np.concatenate(([0], np.arange(n - 1)))
    P = sp.csr_matrix((np.ones(n), cols, np.arange(n + 1)), shape=(n, n))
    r = np.zeros((n, 1))
    r[0, 0] = 1.0
    return Mdp(n, 1, P, r, discount, provenance={"family": "hard-chain", "n": n})


def hard_chain_value(n: int, discount: float) -> np.ndarray:
    return discount ** np.arange(n) / (1.0 - discount)


def cycle_mdp(n: int, discount: float, reward=None) -> Mdp:
    """One-action directed cycle ``i -> i + 1 (mod n)``; reward defaults to e_1."""
    if n < 4 or n % 2:
        raise ValueError(f"cycle_mdp needs an even n >= 4 (the counterexample construction), got {n}")
    r = np.zeros(n) if reward is None else np.asarray(reward, dtype=np.float64)
    if reward is None:
        r[0] = 1.0
    P = sp.csr_matrix((np.ones(n), (np.arange(n), (np.arange(n) + 1) % n)), shape=(n, n))
    return Mdp(n, 1, P, r.reshape(n, 1), discount, provenance={"family": "cycle", "n": n})


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            stack.append(j)
    return bool(seen.all())


def reversible_weights(n: int, density: float, rng: np.random.Generator,
                       max_tries: int = 100) -> np.ndarray:
    """Symmetric positive edge weights (self-loops included) of a connected graph.

    Draws Erdos-Renyi graphs until one is connected; after ``max_tries`` the
    last draw is patched with a random spanning path.
    """
    for _ in range(max_tries):
        upper = np.triu(rng.uniform(size=(n, n)) < density, k=1)
        adj = upper | upper.T
        w = np.triu(rng.uniform(0.1, 1.0, size=(n, n)), k=1)
        w = np.where(adj, w + w.T, 0.0)
        np.fill_diagonal(w, rng.uniform(0.1, 1.0, size=n))
        if n == 1 or _connected(adj):
            return w
    # sparse small graphs rarely connect: join the last draw along a random path
    order = rng.permutation(n)
    for i, j in zip(order[:-1], order[1:]):
        if w[i, j] == 0.0:
            w[i, j] = w[j, i] = rng.uniform(0.1, 1.0)
    return w


def reversible_walk(n: int, density: float, seed: int, discount: float = 0.9,
                    reward_max: float = 100.0) -> Mdp:
    """Random walk on a weighted undirected graph; irreducible and reversible."""
    rng = make_rng(seed)
    w = reversible_weights(n, density, rng)
    L = w / w.sum(axis=1, keepdims=True)
    r = rng.uniform(0.0, reward_max, size=(n, 1))
    prov = {"family": "reversible-walk", "n": n, "density": density, "seed": seed}
    return Mdp(n, 1, sp.csr_matrix(L), r, discount, provenance=prov)


def random_policy(mdp: Mdp, seed: int, randomized: bool = False) -> Policy:
    """Uniform random action per state, or the uniform randomized policy."""
    if randomized:
        return Policy.uniform(mdp.n, mdp.a)
    rng = make_rng(seed)
    return Policy.deterministic(rng.integers(0, mdp.a, size=mdp.n), mdp.a)


def only_policy(mdp: Mdp) -> Policy:
    return Policy.deterministic(np.zeros(mdp.n, dtype=np.int64), mdp.a)
