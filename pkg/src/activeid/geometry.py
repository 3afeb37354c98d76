"""Block-Toeplitz maps, distinguishability matrices and persistent-excitation coefficients.

Stacking convention: a block of length ``tau`` holds inputs u(0..tau-1) and is
credited with the states x(1..tau) they produce, so block (r, c) of ``S_u`` is
``A^(r-c) B`` and ``S_u @ U`` stacks the noise-free x(1), ..., x(tau).  The
per-block gap between the reference system and candidate i is

    sum_{t=0}^{tau-1} || dA x(t+1) + dB u(t) ||^2_{Sigma_w^-1},

whose expectation is ``U' W U + 2 U' m + c0 + noise_trace`` for a
deterministic block ``U`` started from ``x0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import solve_triangular

from .lti import LinearSystem, NoiseModel, Scenario


@dataclass(frozen=True, eq=False)
class ToeplitzPair:
    S_u: np.ndarray
    S_w: np.ndarray
    tau: int


@dataclass(frozen=True, eq=False)
class DistinguishabilityProfile:
    index: int
    W: np.ndarray
    m: np.ndarray
    c0: float
    noise_trace: float
    tau: int
    reference: int = 0

    @property
    def constant(self) -> float:
        return self.c0 + self.noise_trace

    def objective(self, U: np.ndarray) -> float:
        """Expected block gap for a deterministic input block U."""
        return float(U @ self.W @ U + 2.0 * U @ self.m + self.c0 + self.noise_trace)


@dataclass(frozen=True)
class PECoefficients:
    c_u: float
    c_w: float
    tau: int
    kind: Literal["random", "optimal", "algorithm"]


def _powers(A: np.ndarray, k: int) -> list[np.ndarray]:
    out = [np.eye(A.shape[0])]
    for _ in range(1, k):
        out.append(A @ out[-1])
    return out


def _block_toeplitz(blocks: list[np.ndarray]) -> np.ndarray:
    """Lower block-triangular Toeplitz matrix with blocks[k] on the k-th subdiagonal."""
    tau = len(blocks)
    p, q = blocks[0].shape
    T = np.zeros((p * tau, q * tau))
    for r in range(tau):
        for c in range(r + 1):
            T[r * p : (r + 1) * p, c * q : (c + 1) * q] = blocks[r - c]
    return T


def toeplitz_from(system: LinearSystem, noise: NoiseModel, tau: int) -> ToeplitzPair:
    if tau < 1:
        raise ValueError("tau must be >= 1")
    P = _powers(system.A, tau)
    S_u = _block_toeplitz([Pk @ system.B for Pk in P])
    S_w = _block_toeplitz([Pk @ noise.chol for Pk in P])
    return ToeplitzPair(S_u, S_w, tau)


def build_toeplitz(true_system: LinearSystem, noise: NoiseModel, tau: int) -> ToeplitzPair:
    return toeplitz_from(true_system, noise, tau)


class ProfileBuilder:
    """Holds everything about (reference, candidate, tau) that does not depend on x0.

    The whitened residual maps are kept so that profiles for many initial states
    (one per episode) cost a couple of matrix-vector products.
    """

    def __init__(self, scenario: Scenario, i: int, tau: int, reference: int | None = None):
        if tau < 1:
            raise ValueError("tau must be >= 1")
        n = len(scenario.systems)
        ref = scenario.true_index if reference is None else reference
        if not (0 <= i < n and 0 <= ref < n):
            raise IndexError(f"candidate index {i} / reference {ref} out of range 0..{n - 1}")
        self.index, self.reference, self.tau = i, ref, tau
        sys_ref = scenario.systems[ref]
        dA, dB = sys_ref.difference(scenario.systems[i])
        L = scenario.noise.chol
        # whitened differences: ||v||^2_{Sigma^-1} = ||L^-1 v||^2
        wA = solve_triangular(L, dA, lower=True)
        wB = solve_triangular(L, dB, lower=True)
        P = _powers(sys_ref.A, tau + 1)
        n_x = scenario.n_x
        # G maps U to the whitened noise-free residual stack; diag(wB) on the block diagonal
        blocks = [wA @ P[k] @ sys_ref.B for k in range(tau)]
        blocks[0] = blocks[0] + wB
        self.G = _block_toeplitz(blocks)
        self.H = _block_toeplitz([wA @ P[k] @ L for k in range(tau)])
        self.F = np.vstack([wA @ P[k + 1] for k in range(tau)])  # free response of x0
        W = self.G.T @ self.G
        self.W = 0.5 * (W + W.T)
        self.noise_trace = float(np.sum(self.H * self.H))
        self.n_x = n_x

    def profile(self, x0=None) -> DistinguishabilityProfile:
        if x0 is None:
            m = np.zeros(self.W.shape[0])
            c0 = 0.0
        else:
            x0 = np.asarray(x0, dtype=float).reshape(-1)
            if x0.shape != (self.n_x,):
                raise ValueError(f"x0 has dimension {x0.shape[0]}, expected {self.n_x}")
            h = self.F @ x0
            m = self.G.T @ h
            c0 = float(h @ h)
        return DistinguishabilityProfile(
            self.index, self.W, m, c0, self.noise_trace, self.tau, self.reference
        )


def build_profile(
    scenario: Scenario, i: int, tau: int, x0=None, reference: int | None = None
) -> DistinguishabilityProfile:
    """Distinguishability profile of candidate ``i`` against ``reference`` (default: truth)."""
    return ProfileBuilder(scenario, i, tau, reference).profile(x0)


def alternatives(scenario: Scenario, reference: int | None = None) -> list[int]:
    ref = scenario.true_index if reference is None else reference
    return [i for i in range(len(scenario.systems)) if i != ref]


def expected_error(
    profile: DistinguishabilityProfile, U, rho: float = 0.0, sigma_u2: float = 0.0
) -> float:
    """Closed-form mean block gap for the input (1-rho) U + rho u_p, u_p ~ N(0, sigma_u2 I)."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if sigma_u2 < 0:
        raise ValueError("sigma_u2 must be nonnegative")
    U = np.asarray(U, dtype=float).reshape(-1)
    if U.shape != profile.m.shape:
        raise ValueError(f"U has dimension {U.shape[0]}, expected {profile.m.shape[0]}")
    a = 1.0 - rho
    return float(
        a * a * (U @ profile.W @ U)
        + 2.0 * a * (U @ profile.m)
        + profile.c0
        + sigma_u2 * rho * rho * np.trace(profile.W)
        + profile.noise_trace
    )


def lambda_max(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])


def lambda_mean(M: np.ndarray) -> float:
    return float(np.trace(M)) / M.shape[0]


def impulse_energies(scenario: Scenario, i: int, tau: int, reference: int | None = None):
    """Squared Frobenius norms of the whitened residual impulse responses, k = 0..tau-1.

    Returns (a, b) with a_k = |block k of the input map|^2 and
    b_k = |block k of the noise map|^2.
    """
    ref = scenario.true_index if reference is None else reference
    sys_ref = scenario.systems[ref]
    dA, dB = sys_ref.difference(scenario.systems[i])
    L = scenario.noise.chol
    wA = solve_triangular(L, dA, lower=True)
    wB = solve_triangular(L, dB, lower=True)
    a = np.empty(tau)
    b = np.empty(tau)
    P = wA.copy()  # wA A^k
    for k in range(tau):
        gu = P @ sys_ref.B
        if k == 0:
            gu = gu + wB
        gw = P @ L
        a[k] = np.sum(gu * gu)
        b[k] = np.sum(gw * gw)
        P = P @ sys_ref.A
    return a, b


def profile_traces(scenario: Scenario, i: int, tau: int, reference: int | None = None):
    """(tr W_i(tau), noise trace) in O(tau) without assembling the Toeplitz matrices."""
    a, b = impulse_energies(scenario, i, tau, reference)
    w = tau - np.arange(tau)
    return float(w @ a), float(w @ b)


def _noise_floor(scenario: Scenario, tau: int, reference: int | None = None) -> float:
    return min(
        profile_traces(scenario, i, tau, reference)[1] for i in alternatives(scenario, reference)
    ) / tau


def pe_random(scenario: Scenario, tau: int, reference: int | None = None) -> PECoefficients:
    """PE coefficients of isotropic Gaussian input.

    lambda_mean is linear in the mixture weights, so its minimum over the
    simplex sits at a vertex: c_u = min_i lambda_mean(W_i).
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    n_u = scenario.n_u
    c_u = min(
        profile_traces(scenario, i, tau, reference)[0] / (n_u * tau)
        for i in alternatives(scenario, reference)
    )
    return PECoefficients(c_u, _noise_floor(scenario, tau, reference), tau, "random")


def pe_optimal(
    scenario: Scenario, tau: int, reference: int | None = None, tol: float = 1e-8
) -> PECoefficients:
    from .design import minimize_mixture

    Ws = [ProfileBuilder(scenario, i, tau, reference).W for i in alternatives(scenario, reference)]
    sol = minimize_mixture(Ws, tol=tol)
    return PECoefficients(sol.value, _noise_floor(scenario, tau, reference), tau, "optimal")


def pe_algorithm(
    scenario: Scenario,
    tau: int,
    p_err: float,
    rho: float,
    *,
    optimal: PECoefficients | None = None,
    random: PECoefficients | None = None,
) -> PECoefficients:
    """PE coefficient of the CE input mixed with isotropic noise.

    ``p_err`` bounds the probability that the drawn estimate is wrong.
    """
    if not (0 <= p_err <= 1 and 0 <= rho <= 1):
        raise ValueError("p_err and rho must lie in [0, 1]")
    opt = optimal or pe_optimal(scenario, tau)
    rnd = random or pe_random(scenario, tau)
    c_u = (1 - p_err) * (1 - rho) * opt.c_u + rho * rnd.c_u
    return PECoefficients(c_u, rnd.c_w, tau, "algorithm")


def sigma_delta(
    scenario: Scenario, i: int, tau: int, sigma_u2: float, reference: int | None = None
) -> np.ndarray:
    """Covariance of dA_i x(tau) + dB_i u(tau) under u ~ N(0, sigma_u2 I), x(0) = 0."""
    ref = scenario.true_index if reference is None else reference
    sys_ref = scenario.systems[ref]
    dA, dB = sys_ref.difference(scenario.systems[i])
    Sw = scenario.noise.sigma_w
    BB = sigma_u2 * sys_ref.B @ sys_ref.B.T
    X = np.zeros_like(Sw)
    P = np.eye(scenario.n_x)
    for _ in range(tau):
        X += P @ (BB + Sw) @ P.T
        P = sys_ref.A @ P
    S = dA @ X @ dA.T + sigma_u2 * dB @ dB.T
    return 0.5 * (S + S.T)


def eta_bound(scenario: Scenario, tau: int, sigma_u2: float) -> float:
    """Largest exponential-weights temperature covered by the concentration argument.

    lambda_max((Sigma_D^1/2)' Sigma_w^-1 Sigma_D^1/2) equals the top eigenvalue of
    L^-1 Sigma_D L^-T for any square root, so no square root of Sigma_D is formed.
    """
    L = scenario.noise.chol
    worst = 0.0
    for i in alternatives(scenario):
        S = sigma_delta(scenario, i, tau, sigma_u2)
        if not np.any(S):
            raise ValueError(f"Sigma_Delta for candidate {i} vanishes; candidate is indistinguishable")
        K = solve_triangular(L, solve_triangular(L, S, lower=True).T, lower=True)
        worst = max(worst, lambda_max(K))
    return 1.0 / (512.0 * tau * worst)
