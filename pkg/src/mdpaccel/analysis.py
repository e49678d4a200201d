"""Spectral analysis of induced chains and of the 2n x 2n iteration matrices.

The value-computation schemes are affine recursions ``x_{s+1} = B x_s + b``
on stacked iterates ``x_s = (v_s, v_{s-1})``. Their asymptotic rate is
``rho(B)``, which is predicted here from the spectrum of the induced chain
through the per-eigenvalue quadratics, and cross-checked against a power
estimate on the assembled matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .mdp import InducedChain, Mdp, Policy, bellman_apply, induce_chain
from .solvers import momentum_step_sizes, nesterov_step_sizes

BALANCE_TOL = 1e-10
SANDWICH_TOL = 1e-8
MAX_ASSEMBLED_STATES = 2000


class ReducibleChainError(ValueError):
    pass


class UnsupportedSpectrumError(NotImplementedError):
    pass


class RadiusLowerBoundWarning(UserWarning):
    """The predicted radius only used the dominant eigenvalue of the chain."""


def condition_number(discount: float) -> float:
    return (1.0 + discount) / (1.0 - discount)


def accel_contraction(discount: float) -> float:
    """``1 - sqrt(1/kappa)``: the accelerated radius on reversible chains."""
    return 1.0 - math.sqrt((1.0 - discount) / (1.0 + discount))


def momentum_contraction(discount: float) -> float:
    """``l / (1 + sqrt(1 - l^2))``: the heavy-ball radius on reversible chains."""
    return discount / (1.0 + math.sqrt(1.0 - discount * discount))


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

def strongly_connected(L) -> tuple[int, np.ndarray]:
    """Number of strongly connected components of the positivity digraph and labels."""
    return connected_components(np.asarray(L) > 0, directed=True, connection="strong")


def is_irreducible(L) -> bool:
    return strongly_connected(L)[0] == 1


def stationary_distribution(L, tol: float = BALANCE_TOL, max_iters: int = 20_000) -> np.ndarray:
    """Unique stationary distribution of an irreducible stochastic matrix.

    Power iteration on ``L^T``; periodic chains (where it oscillates) fall back
    to a direct solve of ``(L^T - I) nu = 0, sum(nu) = 1``.
    """
    L = np.asarray(L, dtype=np.float64)
    n = L.shape[0]
    count, labels = strongly_connected(L)
    if count > 1:
        reach = labels == labels[0]
        others = np.flatnonzero(~reach)
        raise ReducibleChainError(
            f"chain is reducible: {count} strongly connected components; states "
            f"{others[:10].tolist()}{'...' if others.size > 10 else ''} are not in the "
            f"component of state 0")
    nu = np.full(n, 1.0 / n)
    LT = L.T
    for _ in range(max_iters):
        nxt = LT @ nu
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - nu)) <= 1e-15:
            nu = nxt
            break
        nu = nxt
    if np.max(np.abs(LT @ nu - nu)) > tol:
        A = np.vstack([LT - np.eye(n), np.ones((1, n))])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        nu = np.linalg.lstsq(A, rhs, rcond=None)[0]
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def balance_violation(L, nu) -> float:
    F = np.asarray(nu)[:, None] * np.asarray(L)
    return float(np.max(np.abs(F - F.T)))


def check_reversible(L, nu, tol: float = BALANCE_TOL) -> bool:
    return balance_violation(L, nu) <= tol


def _cycle_lengths(L: np.ndarray) -> list[int] | None:
    """Cycle lengths if ``L`` is a permutation matrix, else None."""
    n = L.shape[0]
    if not (np.all((L == 0) | (L == 1)) and np.all(L.sum(axis=0) == 1)):
        return None
    succ = np.argmax(L, axis=1)
    seen = np.zeros(n, dtype=bool)
    lengths = []
    for i in range(n):
        if seen[i]:
            continue
        k, j = 0, i
        while not seen[j]:
            seen[j] = True
            j = succ[j]
            k += 1
        lengths.append(k)
    return lengths


@dataclass(frozen=True)
class ChainSpectrum:
    eigenvalues: np.ndarray  # complex
    stationary: np.ndarray | None
    reversible: bool
    method: str  # "symmetrized" | "analytic_cycle" | "general"

    @property
    def full(self) -> bool:
        return self.method != "general"


def chain_spectrum(L, nu=None, full: bool = True) -> ChainSpectrum:
    """Spectrum of a stochastic matrix on the two structured paths.

    * permutation matrices (the cycle counterexample): roots of unity, exactly;
    * reversible chains: eigenvalues of ``D^{1/2} L D^{-1/2}``, which is symmetric;
    * anything else: only the dominant eigenvalue 1, unless ``full`` is asked
      for, which raises.
    """
    L = np.asarray(L, dtype=np.float64)
    n = L.shape[0]
    lengths = _cycle_lengths(L)
    if lengths is not None:
        eig = np.concatenate([np.exp(2j * np.pi * np.arange(k) / k) for k in lengths])
        # snap the real roots of unity so +-1 and 0 imaginary parts are exact
        eig = np.where(np.abs(eig.imag) < 1e-15, eig.real + 0j, eig)
        eig = np.where(np.abs(eig.real) < 1e-15, 1j * eig.imag, eig)
        rev = bool(np.array_equal(L, L.T))
        stat = np.full(n, 1.0 / n) if len(lengths) == 1 else None
        return ChainSpectrum(eig, stat, rev, "analytic_cycle")
    if nu is None:
        try:
            nu = stationary_distribution(L)
        except ReducibleChainError:
            nu = np.full(n, 1.0 / n) if np.array_equal(L, L.T) else None
    if nu is not None and check_reversible(L, nu) and np.all(np.asarray(nu) > 0):
        d = np.sqrt(np.asarray(nu, dtype=np.float64))
        S = d[:, None] * L / d[None, :]
        mu = np.linalg.eigvalsh(0.5 * (S + S.T))
        mu = np.clip(mu, -1.0, 1.0)
        return ChainSpectrum(mu[::-1].astype(complex), np.asarray(nu), True, "symmetrized")
    if full:
        raise UnsupportedSpectrumError("unsupported: general nonsymmetric full spectrum")
    return ChainSpectrum(np.array([1.0 + 0j]), nu, False, "general")


# ---------------------------------------------------------------------------
# omega roots
# ---------------------------------------------------------------------------

def accel_omega_roots(mu, discount: float) -> tuple[complex, complex]:
    """Roots of ``w^2 - (mu+1) t w + (mu+1) t^2 / 2`` with ``t = 1 - sqrt(1/kappa)``."""
    mu = complex(mu)
    if abs(mu) > 1.0 + 1e-10:
        raise ValueError(f"|mu| = {abs(mu)} exceeds 1; not an eigenvalue of a stochastic matrix")
    t = accel_contraction(discount)
    root = np.sqrt(mu * mu - 1.0 + 0j)
    return complex(0.5 * t * (mu + 1.0 + root)), complex(0.5 * t * (mu + 1.0 - root))


def _momentum_roots(mu: complex, discount: float) -> tuple[complex, complex]:
    c = momentum_contraction(discount)
    root = np.sqrt(mu * mu - 1.0 + 0j)
    return complex(c * (mu + root)), complex(c * (mu - root))


def momentum_omega_roots(mu, discount: float) -> tuple[complex, complex]:
    """Roots ``c (mu +- i sqrt(1 - mu^2))``, ``c = l / (1 + sqrt(1 - l^2))``, real ``mu``."""
    if isinstance(mu, complex):
        if abs(mu.imag) > 1e-10:
            raise ValueError("momentum roots are defined here for real mu (reversible chains)")
        mu = mu.real
    mu = float(mu)
    if abs(mu) > 1.0 + 1e-10:
        raise ValueError(f"|mu| = {abs(mu)} > 1")
    mu = min(1.0, max(-1.0, mu))
    c = momentum_contraction(discount)
    s = math.sqrt(1.0 - mu * mu)
    return complex(c * mu, c * s), complex(c * mu, -c * s)


def omega_roots(mu, discount: float, variant: str) -> tuple[complex, complex]:
    if variant == "accelerated":
        return accel_omega_roots(mu, discount)
    if variant == "momentum":
        mu = complex(mu)
        if abs(mu.imag) <= 1e-12:
            return momentum_omega_roots(mu.real, discount)
        return _momentum_roots(mu, discount)
    raise ValueError(f"unknown variant {variant!r}")


def predicted_eigenvalues(spectrum: ChainSpectrum, discount: float, variant: str) -> np.ndarray:
    return np.array([w for mu in spectrum.eigenvalues for w in omega_roots(mu, discount, variant)])


def predicted_radius(spectrum: ChainSpectrum, discount: float, variant: str) -> float:
    """``max |w|`` over the roots of every chain eigenvalue.

    On a ``general`` spectrum only mu = 1 is known, so the result is a lower
    bound and a :class:`RadiusLowerBoundWarning` is issued.
    """
    if not spectrum.full:
        warnings.warn("general chain: radius uses mu = 1 only and is a lower bound",
                      RadiusLowerBoundWarning, stacklevel=2)
    return float(np.max(np.abs(predicted_eigenvalues(spectrum, discount, variant))))


# ---------------------------------------------------------------------------
# iteration matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IterationMatrix:
    matrix: np.ndarray
    offset: np.ndarray
    variant: str
    discount: float
    kappa: float
    radius: float
    eigenvalues: np.ndarray | None
    spectrum: ChainSpectrum | None = field(default=None, repr=False)

    def apply(self, x) -> np.ndarray:
        return self.matrix @ x + self.offset

    def fixed_point(self, v) -> np.ndarray:
        return np.concatenate([v, v])


def _spectrum_or_none(L: np.ndarray) -> ChainSpectrum | None:
    try:
        return chain_spectrum(L)
    except UnsupportedSpectrumError:
        return None


def _finish(B, b, variant, discount, L) -> IterationMatrix:
    spec = _spectrum_or_none(L)
    if spec is not None:
        eig = predicted_eigenvalues(spec, discount, variant)
        radius = float(np.max(np.abs(eig)))
    else:
        eig = None
        radius = power_iteration_radius(B)
    return IterationMatrix(B, b, variant, discount, condition_number(discount), radius, eig, spec)


def _guard(n: int):
    if n > MAX_ASSEMBLED_STATES:
        raise ValueError(f"2n x 2n assembly limited to n <= {MAX_ASSEMBLED_STATES}, got {n}")


def accel_blocks(L: np.ndarray, discount: float) -> np.ndarray:
    n = L.shape[0]
    t = accel_contraction(discount)
    IL = np.eye(n) + L
    return np.block([[t * IL, -0.5 * t * t * IL], [np.eye(n), np.zeros((n, n))]])


def accel_iteration_matrix(chain: InducedChain, discount: float) -> IterationMatrix:
    """``B = [[t(I+L), -t^2/2 (I+L)], [I, 0]]`` and offset ``(alpha r, 0)``.

    The offset is what reproduces the scheme exactly; ``alpha = 1/(1+l)``.
    """
    _guard(chain.n)
    alpha, _ = nesterov_step_sizes(discount)
    B = accel_blocks(chain.matrix, discount)
    b = np.concatenate([alpha * chain.reward, np.zeros(chain.n)])
    return _finish(B, b, "accelerated", discount, chain.matrix)


def momentum_iteration_matrix(chain: InducedChain, discount: float) -> IterationMatrix:
    """``B = [[l(1+beta) L, -beta I], [I, 0]]`` with offset ``(alpha r, 0)``."""
    _guard(chain.n)
    n = chain.n
    alpha, beta = momentum_step_sizes(discount)
    B = np.block([[discount * (1.0 + beta) * chain.matrix, -beta * np.eye(n)],
                  [np.eye(n), np.zeros((n, n))]])
    b = np.concatenate([alpha * chain.reward, np.zeros(n)])
    return _finish(B, b, "momentum", discount, chain.matrix)


def iteration_matrix(chain: InducedChain, discount: float, variant: str) -> IterationMatrix:
    if variant == "accelerated":
        return accel_iteration_matrix(chain, discount)
    if variant == "momentum":
        return momentum_iteration_matrix(chain, discount)
    raise ValueError(f"unknown variant {variant!r}")


def power_iteration_radius(B, max_squarings: int = 64, tol: float = 1e-15) -> float:
    """Spectral radius from ``||B^m||^{1/m}`` with ``m = 2^k`` by repeated squaring.

    Tracking the norm instead of a single eigenvector copes with complex
    dominant pairs and with defective (Jordan) dominant eigenvalues, where the
    plain power ratio converges only like 1/m.
    """
    A = np.array(B, dtype=np.float64)
    nrm = np.linalg.norm(A, 2)
    if nrm == 0.0:
        return 0.0
    A /= nrm
    log_scale = math.log(nrm)
    est = math.exp(log_scale)
    m = 1
    for _ in range(max_squarings):
        A = A @ A
        m *= 2
        nrm = np.linalg.norm(A, 2)
        if nrm == 0.0:
            return 0.0
        A /= nrm
        log_scale = 2.0 * log_scale + math.log(nrm)
        new = math.exp(log_scale / m)
        if abs(new - est) <= tol * max(1.0, new):
            return new
        est = new
    return est


def det_residual(B, omega) -> float:
    """``|det(B - omega I)|`` from an LU factorisation."""
    M = np.asarray(B, dtype=complex) - complex(omega) * np.eye(B.shape[0])
    sign, logdet = np.linalg.slogdet(M)
    return 0.0 if sign == 0 else float(np.exp(logdet))


def min_singular_value(B, omega) -> float:
    M = np.asarray(B, dtype=complex) - complex(omega) * np.eye(B.shape[0])
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def spectrum_report(chain: InducedChain, discount: float, variant: str) -> dict:
    """JSON-ready summary of the predicted radius for one policy."""
    spec = chain_spectrum(chain.matrix, full=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RadiusLowerBoundWarning)
        radius = predicted_radius(spec, discount, variant)
    moduli = np.sort(np.abs(predicted_eigenvalues(spec, discount, variant)))[::-1]
    return {
        "variant": variant,
        "lambda": discount,
        "kappa": condition_number(discount),
        "predicted_radius": radius,
        "eigen_moduli": moduli.tolist(),
        "reversible": spec.reversible,
        "method": spec.method,
        "exact": spec.full,
    }


# ---------------------------------------------------------------------------
# accelerated VI as a time-varying linear system
# ---------------------------------------------------------------------------

@dataclass
class CertificateStep:
    s: int
    greedy: Policy
    mu: np.ndarray
    sandwich_violation: float
    reconstruction_error: float


@dataclass
class LtvCertificate:
    steps: list[CertificateStep]
    tol: float

    @property
    def ok(self) -> bool:
        return all(st.sandwich_violation <= self.tol and st.reconstruction_error <= self.tol
                   and st.mu.min() >= 0.0 and st.mu.max() <= 1.0 for st in self.steps)

    @property
    def worst_violation(self) -> float:
        return max((st.sandwich_violation for st in self.steps), default=0.0)

    @property
    def worst_reconstruction(self) -> float:
        return max((st.reconstruction_error for st in self.steps), default=0.0)


class CertificateError(AssertionError):
    pass


def mixed_policy(mu, star: Policy, greedy: Policy) -> Policy:
    mu = np.asarray(mu)[:, None]
    return Policy.randomized(mu * star.as_matrix() + (1.0 - mu) * greedy.as_matrix())


def ltv_certificate(mdp: Mdp, iterates, v_star, pi_star: Policy, tol: float = SANDWICH_TOL,
                    strict: bool = False) -> LtvCertificate:
    """Certify each accelerated-VI step as ``u_{s+1} = B_{pi_hat} u_s``.

    For ``s >= 1`` with ``u_s = x_s - x*``, checks
    ``B_{pi*} u_s <= u_{s+1} <= B_{pi_s} u_s`` where ``pi_s`` is greedy at the
    extrapolated point, solves the per-state mixing weight ``mu_i`` and
    rebuilds ``u_{s+1}`` through the mixed policy. Tolerances are relative to
    ``||u_s||``. The iterates must come from the default (Nesterov) tuning.
    """
    lam = mdp.discount
    _, gamma = nesterov_step_sizes(lam)
    v_star = np.asarray(v_star, dtype=np.float64)
    x_star = np.concatenate([v_star, v_star])
    L_star = induce_chain(mdp, pi_star).matrix
    B_star = accel_blocks(L_star, lam)
    vs = [np.asarray(v, dtype=np.float64) for v in iterates]
    n = mdp.n
    steps = []
    for s in range(1, len(vs) - 1):
        h = vs[s] + gamma * (vs[s] - vs[s - 1])
        _, greedy = bellman_apply(mdp, h)
        B_s = accel_blocks(induce_chain(mdp, greedy).matrix, lam)
        u = np.concatenate([vs[s], vs[s - 1]]) - x_star
        u_next = np.concatenate([vs[s + 1], vs[s]]) - x_star
        scale = max(float(np.max(np.abs(u))), np.finfo(float).tiny)
        lo, hi = B_star @ u, B_s @ u
        viol = max(0.0, float(np.max(lo - u_next)), float(np.max(u_next - hi))) / scale
        gap = hi[:n] - lo[:n]
        t = u_next[:n]
        mu = np.ones(n)
        live = gap > tol * scale
        mu[live] = (hi[:n][live] - t[live]) / gap[live]
        mu = np.clip(mu, 0.0, 1.0)
        pi_hat = mixed_policy(mu, pi_star, greedy)
        B_hat = accel_blocks(induce_chain(mdp, pi_hat).matrix, lam)
        rec = float(np.max(np.abs(B_hat @ u - u_next))) / scale
        step = CertificateStep(s, greedy, mu, viol, rec)
        if strict and (viol > tol or rec > tol):
            raise CertificateError(f"step {s}: sandwich {viol:.3e}, reconstruction {rec:.3e}")
        steps.append(step)
    return LtvCertificate(steps, tol)


# ---------------------------------------------------------------------------
# lower bound on the hard chain
# ---------------------------------------------------------------------------

@dataclass
class LowerBoundReport:
    checked_steps: int
    zero_pattern_violations: list[tuple[int, int]]
    bound_violations: list[tuple[int, float, float]]

    @property
    def ok(self) -> bool:
        return not self.zero_pattern_violations and not self.bound_violations


def lower_bound_check(iterates, mdp: Mdp, v_star) -> LowerBoundReport:
    """Check ``v_{s,i} = 0`` for ``i >= s`` (0-based) and ``||v_s - v*|| >= l^s/(1+l)``.

    Applies to steps ``1 <= s <= n - 1`` of a first-order scheme started at 0.
    """
    lam = mdp.discount
    v_star = np.asarray(v_star, dtype=np.float64)
    zero_bad: list[tuple[int, int]] = []
    bound_bad: list[tuple[int, float, float]] = []
    last = min(len(iterates) - 1, mdp.n - 1)
    for s in range(1, last + 1):
        v = np.asarray(iterates[s])
        nz = np.flatnonzero(v[s:] != 0.0)
        zero_bad.extend((s, s + int(i)) for i in nz)
        err = float(np.max(np.abs(v - v_star)))
        bound = lam ** s / (1.0 + lam)
        if err < bound:
            bound_bad.append((s, err, bound))
    return LowerBoundReport(last, zero_bad, bound_bad)
