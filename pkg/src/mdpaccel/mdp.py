"""Finite MDP data model, Bellman operators and exact linear-algebra oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

ROW_TOL = 1e-12
ORACLE_RTOL = 1e-9
MAX_DIRECT_STATES = 5000


class DimensionError(ValueError):
    """Raised when a vector or policy does not match the MDP shape."""


class OracleError(RuntimeError):
    """Raised when an exact oracle cannot certify its answer."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Mdp:
    """A finite discounted MDP.

    ``transitions`` is a CSR matrix of shape ``(n * a, n)``; row ``i * a + k``
    is the next-state distribution of action ``k`` in state ``i``.
    """

    n: int
    a: int
    transitions: sp.csr_matrix
    rewards: np.ndarray
    discount: float
    initial_dist: np.ndarray | None = None
    provenance: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        n, a = int(self.n), int(self.a)
        if n < 1 or a < 1:
            raise ValueError(f"need n >= 1 and a >= 1, got n={n}, a={a}")
        if not 0.0 < float(self.discount) < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        P = sp.csr_matrix(self.transitions, dtype=np.float64)
        if P.shape != (n * a, n):
            raise DimensionError(f"transitions shape {P.shape} != {(n * a, n)}")
        P.sum_duplicates()
        P.sort_indices()
        if P.nnz and P.data.min() < 0.0:
            raise ValueError("transition probabilities must be non-negative")
        sums = np.asarray(P.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if bad.size:
            i, k = divmod(int(bad[0]), a)
            raise ValueError(f"transition row (state {i}, action {k}) sums to {sums[bad[0]]!r}")
        r = np.array(self.rewards, dtype=np.float64).reshape(n, a)
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        for arr in (P.data, P.indices, P.indptr):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", _frozen(r))
        if self.initial_dist is not None:
            p0 = np.array(self.initial_dist, dtype=np.float64).ravel()
            if p0.shape != (n,) or p0.min() < 0 or abs(p0.sum() - 1.0) > ROW_TOL:
                raise ValueError("initial_dist must be a probability vector of length n")
            object.__setattr__(self, "initial_dist", _frozen(p0))

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Iterable[tuple[int, float]]],
        rewards,
        discount: float,
        n: int,
        a: int,
        initial_dist=None,
        provenance: dict | None = None,
    ) -> "Mdp":
        """Build from one sparse ``[(state, prob), ...]`` row per (state, action)."""
        if len(rows) != n * a:
            raise DimensionError(f"expected {n * a} transition rows, got {len(rows)}")
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for row in rows:
            for j, p in row:
                j = int(j)
                if not 0 <= j < n:
                    raise ValueError(f"next-state index {j} out of range for n={n}")
                indices.append(j)
                data.append(float(p))
            indptr.append(len(indices))
        P = sp.csr_matrix((data, indices, indptr), shape=(n * a, n))
        return cls(n, a, P, rewards, discount, initial_dist, provenance)

    @classmethod
    def from_dense(cls, P, rewards, discount: float, **kwargs) -> "Mdp":
        """Build from a dense kernel of shape ``(n, a, n)``."""
        P = np.asarray(P, dtype=np.float64)
        n, a, _ = P.shape
        return cls(n, a, sp.csr_matrix(P.reshape(n * a, n)), rewards, discount, **kwargs)

    def with_discount(self, discount: float) -> "Mdp":
        return Mdp(self.n, self.a, self.transitions, self.rewards, discount,
                   self.initial_dist, self.provenance)

    def rows(self, i: int, k: int) -> list[tuple[int, float]]:
        P = self.transitions
        r = i * self.a + k
        lo, hi = P.indptr[r], P.indptr[r + 1]
        return list(zip(P.indices[lo:hi].tolist(), P.data[lo:hi].tolist()))

    def dense_kernel(self) -> np.ndarray:
        return self.transitions.toarray().reshape(self.n, self.a, self.n)


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic (``actions``) or randomized (``matrix``, n x A) policy."""

    n_actions: int
    actions: np.ndarray | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if (self.actions is None) == (self.matrix is None):
            raise ValueError("give exactly one of actions or matrix")
        if self.actions is not None:
            acts = np.array(self.actions, dtype=np.int64).ravel()
            if acts.size and (acts.min() < 0 or acts.max() >= self.n_actions):
                raise ValueError(f"action indices must lie in [0, {self.n_actions})")
            object.__setattr__(self, "actions", _frozen(acts))
        else:
            m = np.array(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[1] != self.n_actions:
                raise DimensionError(f"policy matrix shape {m.shape} incompatible with A={self.n_actions}")
            if m.min() < 0 or np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_TOL):
                raise ValueError("randomized policy rows must be probability vectors")
            object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "Policy":
        return cls(n_actions, actions=actions)

    @classmethod
    def randomized(cls, matrix) -> "Policy":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m.shape[1], matrix=m)

    @classmethod
    def uniform(cls, n: int, n_actions: int) -> "Policy":
        return cls(n_actions, matrix=np.full((n, n_actions), 1.0 / n_actions))

    @property
    def kind(self) -> str:
        return "deterministic" if self.actions is not None else "randomized"

    @property
    def n(self) -> int:
        return len(self.actions) if self.actions is not None else self.matrix.shape[0]

    def as_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        m = np.zeros((self.n, self.n_actions))
        m[np.arange(self.n), self.actions] = 1.0
        return m

    def __eq__(self, other) -> bool:
        if not isinstance(other, Policy) or other.n_actions != self.n_actions:
            return NotImplemented
        if self.kind == other.kind == "deterministic":
            return bool(np.array_equal(self.actions, other.actions))
        return bool(np.array_equal(self.as_matrix(), other.as_matrix()))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class InducedChain:
    """Markov chain ``L_pi`` (dense n x n) and reward ``r_pi`` of a fixed policy."""

    matrix: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        L = np.array(self.matrix, dtype=np.float64)
        r = np.array(self.reward, dtype=np.float64).ravel()
        if L.ndim != 2 or L.shape[0] != L.shape[1] or r.shape != (L.shape[0],):
            raise DimensionError(f"chain shapes {L.shape} / {r.shape} are inconsistent")
        if L.min() < 0 or np.any(np.abs(L.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("induced chain must be row-stochastic")
        object.__setattr__(self, "matrix", _frozen(L))
        object.__setattr__(self, "reward", _frozen(r))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _check_vector(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise DimensionError(f"value vector has shape {v.shape}, expected ({n},)")
    return v


def q_values(mdp: Mdp, v) -> np.ndarray:
    """State-action values ``r_ia + lambda * P_ia^T v`` as an (n, A) array."""
    v = _check_vector(v, mdp.n)
    return mdp.rewards + mdp.discount * (mdp.transitions @ v).reshape(mdp.n, mdp.a)


def bellman_apply(mdp: Mdp, v) -> tuple[np.ndarray, Policy]:
    """Apply the Bellman operator; ties in the greedy policy go to the smallest action."""
    q = q_values(mdp, v)
    acts = np.argmax(q, axis=1)
    return q[np.arange(mdp.n), acts], Policy.deterministic(acts, mdp.a)


def induce_chain(mdp: Mdp, policy: Policy) -> InducedChain:
    if policy.n != mdp.n or policy.n_actions != mdp.a:
        raise DimensionError(
            f"policy is {policy.n} x {policy.n_actions}, MDP is {mdp.n} x {mdp.a}")
    if policy.kind == "deterministic":
        rows = np.arange(mdp.n) * mdp.a + policy.actions
        L = mdp.transitions[rows].toarray()
        r = mdp.rewards[np.arange(mdp.n), policy.actions]
    else:
        pi = policy.matrix
        # weight row (i, k) of P by pi[i, k] and sum over k
        W = sp.csr_matrix((pi.ravel(), (np.repeat(np.arange(mdp.n), mdp.a),
                                         np.arange(mdp.n * mdp.a))),
                          shape=(mdp.n, mdp.n * mdp.a))
        L = (W @ mdp.transitions).toarray()
        r = np.sum(pi * mdp.rewards, axis=1)
    return InducedChain(L, r)


def policy_apply(chain: InducedChain, discount: float, v) -> np.ndarray:
    """Policy operator ``r_pi + lambda * L_pi v``."""
    v = _check_vector(v, chain.n)
    return chain.reward + discount * (chain.matrix @ v)


def residual(mdp: Mdp, v) -> float:
    """Sup-norm Bellman residual ``||v - T(v)||``."""
    tv, _ = bellman_apply(mdp, v)
    return float(np.max(np.abs(np.asarray(v) - tv)))


def policy_residual(chain: InducedChain, discount: float, v) -> float:
    return float(np.max(np.abs(np.asarray(v) - policy_apply(chain, discount, v))))


def solve_chain(chain: InducedChain, discount: float) -> np.ndarray:
    """Solve ``(I - lambda L) v = r`` by LU factorisation."""
    n = chain.n
    if n > MAX_DIRECT_STATES:
        raise ValueError(f"direct solve limited to n <= {MAX_DIRECT_STATES}, got {n}")
    A = np.eye(n) - discount * chain.matrix
    try:
        v = np.linalg.solve(A, chain.reward)
    except np.linalg.LinAlgError as exc:
        raise OracleError("singular Bellman system; L_pi is not stochastic?") from exc
    res = policy_residual(chain, discount, v)
    if not np.all(np.isfinite(v)) or res > ORACLE_RTOL * (1.0 + np.max(np.abs(v))):
        raise OracleError(f"direct solve residual {res:.3e} exceeds tolerance")
    return v


def exact_policy_value(mdp: Mdp, policy: Policy) -> np.ndarray:
    return solve_chain(induce_chain(mdp, policy), mdp.discount)


def exact_optimal_value(mdp: Mdp) -> tuple[np.ndarray, Policy]:
    """Policy iteration with exact evaluation.

    An action is only switched when it improves the state-action value by more
    than round-off, so ties never make the policy cycle.
    """
    acts = np.argmax(mdp.rewards, axis=1)
    cap = mdp.n * mdp.a + 1
    for _ in range(cap):
        policy = Policy.deterministic(acts, mdp.a)
        v = exact_policy_value(mdp, policy)
        q = q_values(mdp, v)
        best = np.argmax(q, axis=1)
        rows = np.arange(mdp.n)
        gain = q[rows, best] - q[rows, acts]
        switch = gain > 1e-12 * (1.0 + np.max(np.abs(v)))
        if not switch.any():
            res = residual(mdp, v)
            if res > ORACLE_RTOL * (1.0 + np.max(np.abs(v))):
                raise OracleError(f"policy iteration fixed point has residual {res:.3e}")
            return v, policy
        acts = np.where(switch, best, acts)
    raise OracleError(f"policy iteration exceeded {cap} improvement steps")


def expected_return(mdp: Mdp, v) -> float:
    """``p0 . v``; uniform ``p0`` when the MDP carries none."""
    v = _check_vector(v, mdp.n)
    p0 = mdp.initial_dist if mdp.initial_dist is not None else np.full(mdp.n, 1.0 / mdp.n)
    return float(p0 @ v)
