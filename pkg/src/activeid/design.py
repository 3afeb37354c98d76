"""Max-min excitation design.

The design problem

    max_{|U|^2 <= r^2} min_i  U' W_i U + 2 U' m_i + k_i

is nonconvex.  Its convex relaxation over mixtures p of the candidates,
min_p lambda_max(sum_i p_i W_i), is solved first; the top eigenvector of the
optimal mixture seeds a projected gradient ascent on a softmin smoothing of the
inner minimum.  The relaxation value is kept as an upper bound so the gap of the
returned input is always reported.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import linprog, minimize

from .geometry import DistinguishabilityProfile, ProfileBuilder, alternatives
from .lti import Scenario

log = logging.getLogger(__name__)


class MixtureSolverError(RuntimeError):
    def __init__(self, msg: str, best: "MixtureSolution"):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True, eq=False)
class MixtureSolution:
    p: np.ndarray
    value: float
    top_vector: np.ndarray
    iterations: int
    certified_gap: float
    lower_bound: float


@dataclass(frozen=True, eq=False)
class ExcitationPlan:
    U: np.ndarray
    tau: int
    energy: float
    achieved_minimum: float
    method: Literal["mixture_eigvec", "refined"]
    upper_bound: float
    mixture: MixtureSolution
    objectives: np.ndarray

    @property
    def gap(self) -> float:
        return max(self.upper_bound - self.achieved_minimum, 0.0)

    def as_inputs(self, n_u: int) -> np.ndarray:
        return self.U.reshape(self.tau, n_u)


def top_eigvector(M: np.ndarray, rel_tol: float = 1e-9) -> tuple[float, np.ndarray]:
    """Top eigenpair with a deterministic pick inside a degenerate top eigenspace.

    The returned vector is the projection onto the top eigenspace of the
    lowest-index basis vector with a nonzero projection.
    """
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    lam = vals[-1]
    k = np.searchsorted(vals, lam - rel_tol * (1.0 + abs(lam)))
    V = vecs[:, k:]
    if V.shape[1] == 1:
        v = V[:, 0]
    else:
        proj = V @ V.T
        j = int(np.argmax(np.linalg.norm(proj, axis=0) > 1e-8))
        v = proj[:, j] / np.linalg.norm(proj[:, j])
    j = int(np.argmax(np.abs(v) > 1e-12))
    if v[j] < 0:
        v = -v
    return float(lam), v


def _check_stack(W_list: Sequence[np.ndarray]) -> np.ndarray:
    if len(W_list) == 0:
        raise ValueError("need at least one matrix")
    Ws = np.stack([np.asarray(W, dtype=float) for W in W_list])
    if Ws.ndim != 3 or Ws.shape[1] != Ws.shape[2]:
        raise ValueError(f"matrices must be square and of equal size, got {Ws.shape}")
    scale = max(np.abs(Ws).max(), 1e-300)
    if np.abs(Ws - Ws.transpose(0, 2, 1)).max() > 1e-9 * scale:
        raise ValueError("input matrices must be symmetric")
    return 0.5 * (Ws + Ws.transpose(0, 2, 1))


def _lp_certificate(cuts: np.ndarray) -> float:
    """Best lower bound max_mu min_i (mu' G)_i over convex weights on the cuts.

    Each cut row is g = (v' W_i v)_i for a unit v, so mu' G is the evaluation of
    the density matrix sum_j mu_j v_j v_j' and the bound is rigorous whatever the
    LP tolerance.
    """
    J, N = cuts.shape
    c = np.zeros(J + 1)
    c[-1] = -1.0
    res = linprog(
        c,
        A_ub=np.hstack([-cuts.T, np.ones((N, 1))]),
        b_ub=np.zeros(N),
        A_eq=np.concatenate([np.ones(J), [0.0]])[None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * J + [(None, None)],
        method="highs",
    )
    if res.status != 0:
        return -np.inf
    mu = np.clip(res.x[:J], 0.0, None)
    return float((mu / mu.sum() @ cuts).min())


def _barrier_polish(Ws, p, tol, max_iter, on_eval, cuts):
    """Log-barrier path for  min t  s.t.  t I - sum_i p_i W_i > 0, p in the simplex.

    Returns (iterations, best certified lower bound).  At a centred point
    X = S^-1 / tr(S^-1) is a density matrix and min_i <W_i, X> bounds the optimum
    from below.
    """
    N, n, _ = Ws.shape
    p = np.clip(p, 1e-3 / N, None)
    p = p / p.sum()
    lam = np.linalg.eigvalsh(np.tensordot(p, Ws, axes=1))[-1]
    t = lam + 0.5 * max(abs(lam), 1e-3)
    s = float(n + N)
    lower = -np.inf
    eye = np.eye(n)

    def phi(t, p):
        if p.min() <= 0:
            return np.inf
        try:
            C = np.linalg.cholesky(t * eye - np.tensordot(p, Ws, axes=1))
        except np.linalg.LinAlgError:
            return np.inf
        return s * t - 2.0 * np.log(np.diag(C)).sum() - np.log(p).sum()

    it = 0
    while it < max_iter:
        it += 1
        sig, Q = np.linalg.eigh(t * eye - np.tensordot(p, Ws, axes=1))
        best_f = on_eval(p)
        d = 1.0 / np.sqrt(sig)
        K = (Q.T @ Ws @ Q) * d[None, :, None] * d[None, None, :]
        diagK = np.einsum("kii->ki", K)
        gt = s - np.sum(1.0 / sig)
        gp = diagK.sum(axis=1) - 1.0 / p
        H = np.zeros((N + 2, N + 2))
        H[0, 0] = np.sum(1.0 / sig**2)
        H[0, 1 : N + 1] = H[1 : N + 1, 0] = -diagK @ (1.0 / sig)
        H[1 : N + 1, 1 : N + 1] = K.reshape(N, -1) @ K.reshape(N, -1).T + np.diag(1.0 / p**2)
        H[1 : N + 1, N + 1] = H[N + 1, 1 : N + 1] = 1.0
        try:
            step = np.linalg.solve(H, -np.concatenate([[gt], gp, [0.0]]))
        except np.linalg.LinAlgError:
            break
        dt, dp = step[0], step[1 : N + 1]
        dec = -(gt * dt + gp @ dp)
        if not np.isfinite(dec):
            break
        # roundoff in the decrement grows with s (gradient entries are O(s))
        centred = dec < max(1e-9, 1e-13 * s)
        if not centred:
            a, f0 = 1.0, phi(t, p)
            while a > 1e-14 and phi(t + a * dt, p + a * dp) > f0 - 0.25 * a * dec:
                a *= 0.5
            # no decrease within roundoff of phi counts as centred
            centred = a <= 1e-14
            if not centred:
                t, p = t + a * dt, p + a * dp
                continue
        # a negative decrement is roundoff near the centre; X is a density
        # matrix at any strictly feasible point, so the certificate stays valid
        if centred:
            # inactive weights only decay like 1/s; dropping them finds face optima early
            for cut in (1e-6, 1e-3):
                keep = p >= cut * p.max()
                if not keep.all():
                    best_f = on_eval(np.where(keep, p, 0.0))
            X = (Q / sig) @ Q.T
            X /= np.trace(X)
            lower = max(lower, float(np.einsum("kij,ij->k", Ws, X).min()))
            # X concentrates on the top eigenspace of the mixture; its leading
            # eigenvectors let the LP reweight that mass exactly
            k = min(n, N + 2)
            V = Q[:, :k]
            cuts.extend(np.einsum("ia,kij,ja->ak", V, Ws, V))
            lower = max(lower, _lp_certificate(np.asarray(cuts)))
            if best_f - lower <= tol * (1.0 + abs(best_f)) or (n + N) / s < 1e-3 * tol:
                break
            s *= 4.0
    return it, lower


def minimize_mixture(
    W_list: Sequence[np.ndarray],
    tol: float = 1e-8,
    max_iter: int = 500,
    eg_iters: int = 30,
) -> MixtureSolution:
    """Minimise lambda_max(sum_i p_i W_i) over the probability simplex.

    Exponentiated-gradient steps with the subgradient g_i = v' W_i v warm up
    the weights; a log-barrier Newton path then polishes them.  The certified
    gap is value minus the best dual lower bound found (see _lp_certificate and
    _barrier_polish).
    """
    Ws = _check_stack(W_list)
    N = len(Ws)
    if N == 1:
        lam, v = top_eigvector(Ws[0])
        return MixtureSolution(np.ones(1), lam, v, 1, 0.0, lam)

    scale = max(float(np.linalg.eigvalsh(Ws.sum(axis=0))[-1]) / N, 1e-300)
    Ws_s = Ws / scale
    cuts: list[np.ndarray] = []
    best = [np.inf, None]

    def on_eval(p):
        p = np.clip(p, 0.0, None)
        p = p / p.sum()  # Newton steps keep sum(p) = 1 only up to roundoff
        lam, v = top_eigvector(np.tensordot(p, Ws_s, axes=1))
        cuts.append(np.einsum("i,kij,j->k", v, Ws_s, v))
        if lam < best[0]:
            best[0], best[1] = lam, p.copy()
        return best[0]

    p = np.full(N, 1.0 / N)
    it = 0
    for k in range(1, min(eg_iters, max_iter) + 1):
        it += 1
        on_eval(p)
        g = cuts[-1]
        spread = np.ptp(g)
        if spread <= 0:
            break
        p = p * np.exp(-np.sqrt(2.0 * np.log(N) / k) * (g - g.min()) / spread)
        p /= p.sum()

    lower = _lp_certificate(np.asarray(cuts))
    if best[0] - lower > tol * (1.0 + abs(best[0])):
        used, lb = _barrier_polish(Ws_s, best[1].copy(), tol, max_iter - it, on_eval, cuts)
        it += used
        lower = max(lower, lb, _lp_certificate(np.asarray(cuts)))

    p_best = best[1]
    value, v = top_eigvector(np.tensordot(p_best, Ws, axes=1))
    lower *= scale
    gap = max(value - lower, 0.0)
    sol = MixtureSolution(p_best, value, v, it, gap, lower)
    if gap > 100 * tol * (1.0 + abs(value)):
        raise MixtureSolverError(
            f"mixture solver stopped after {it} iterations with gap {gap:.3e}", sol
        )
    return sol


def design_objectives(
    profiles: Sequence[DistinguishabilityProfile], U: np.ndarray
) -> np.ndarray:
    return np.array([pr.objective(U) for pr in profiles])


def _softmin_ascent(
    profiles: Sequence[DistinguishabilityProfile],
    U: np.ndarray,
    radius: float,
    beta: float,
    iters: int,
) -> np.ndarray:
    Ws = np.stack([pr.W for pr in profiles])
    ms = np.stack([pr.m for pr in profiles])
    ks = np.array([pr.constant for pr in profiles])

    def value_grad(U):
        WU = Ws @ U
        obj = WU @ U + 2.0 * ms @ U + ks
        z = -beta * obj
        zmax = z.max()
        e = np.exp(z - zmax)
        s = e.sum()
        F = -(zmax + np.log(s)) / beta
        pi = e / s
        return F, 2.0 * (pi @ (WU + ms))

    def project(V):
        n = np.linalg.norm(V)
        return V if n <= radius else V * (radius / n)

    F, g = value_grad(U)
    step = radius / max(np.linalg.norm(g), 1e-300)
    for _ in range(iters):
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        while True:
            V = project(U + step * g)
            Fv, gv = value_grad(V)
            if Fv >= F + 1e-4 * g @ (V - U) or step < 1e-14 * radius / gn:
                break
            step *= 0.5
        if np.linalg.norm(V - U) <= 1e-12 * radius:
            break
        U, F, g = V, Fv, gv
        step *= 2.0
    return U


def _epigraph_polish(
    profiles: Sequence[DistinguishabilityProfile], U: np.ndarray, radius: float, iters: int
) -> np.ndarray:
    """Local solve of max t s.t. f_i(U) >= t, |U|^2 <= radius^2, started at U.

    Removes the bias of the softmin surrogate, whose temperature does not
    follow the scale of the objectives.
    """
    Ws = np.stack([pr.W for pr in profiles])
    ms = np.stack([pr.m for pr in profiles])
    ks = np.array([pr.constant for pr in profiles])
    s = max(float(np.abs(design_objectives(profiles, U)).max()), 1e-300)
    n = len(U)

    def cons(z):
        V, t = z[:n], z[n]
        obj = np.einsum("i,kij,j->k", V, Ws, V) + 2.0 * ms @ V + ks
        return np.concatenate([obj / s - t, [1.0 - V @ V / radius**2]])

    def cons_jac(z):
        V = z[:n]
        J = np.zeros((len(ks) + 1, n + 1))
        J[:-1, :n] = 2.0 * (Ws @ V + ms) / s
        J[:-1, n] = -1.0
        J[-1, :n] = -2.0 * V / radius**2
        return J

    z0 = np.concatenate([U, [design_objectives(profiles, U).min() / s]])
    res = minimize(
        lambda z: -z[n],
        z0,
        jac=lambda z: np.concatenate([np.zeros(n), [-1.0]]),
        constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
        method="SLSQP",
        options={"maxiter": iters, "ftol": 1e-15},
    )
    return project_ball(res.x[:n], radius) if np.all(np.isfinite(res.x)) else U


def project_ball(V: np.ndarray, radius: float) -> np.ndarray:
    n = np.linalg.norm(V)
    return V if n <= radius else V * (radius / n)


def design_from_profiles(
    profiles: Sequence[DistinguishabilityProfile],
    gamma_u: float,
    tau: int,
    *,
    mixture: MixtureSolution | None = None,
    refine_iters: int = 200,
    tol: float = 1e-8,
) -> ExcitationPlan:
    if mixture is None:
        mixture = minimize_mixture([pr.W for pr in profiles], tol=tol)
    radius = gamma_u * np.sqrt(tau)
    v = mixture.top_vector
    if v @ (mixture.p @ np.stack([pr.m for pr in profiles])) < 0:
        v = -v
    U0 = radius * v
    lam_max = [float(np.linalg.eigvalsh(pr.W)[-1]) for pr in profiles]
    beta = 50.0 / (1.0 + float(np.median(lam_max)))
    U1 = _softmin_ascent(profiles, U0.copy(), radius, beta, refine_iters)
    U2 = _epigraph_polish(profiles, U1, radius, refine_iters) if len(profiles) > 1 else U1

    obj0 = design_objectives(profiles, U0)
    U, obj, method = U0, obj0, "mixture_eigvec"
    for V in (U1, U2):
        objv = design_objectives(profiles, V)
        if objv.min() > obj.min():
            U, obj, method = V, objv, "refined"

    # weak duality: min_i f_i(U) <= sum_i p_i f_i(U) <= r^2 lam + 2 r |sum p m| + max k
    pm = mixture.p @ np.stack([pr.m for pr in profiles])
    upper = (
        radius**2 * mixture.value
        + 2.0 * radius * float(np.linalg.norm(pm))
        + max(pr.constant for pr in profiles)
    )
    achieved = float(obj.min())
    scale = 1.0 + abs(upper)
    if achieved > upper + 1e-8 * scale:
        raise AssertionError(f"design exceeds its relaxation bound: {achieved} > {upper}")
    return ExcitationPlan(
        U=U,
        tau=tau,
        energy=float(U @ U),
        achieved_minimum=achieved,
        method=method,
        upper_bound=float(upper),
        mixture=mixture,
        objectives=obj,
    )


class CEDesigner:
    """Certainty-equivalence designer for a fixed reference index and block length.

    Everything independent of the initial state (the W_i, the mixture solution)
    is computed once; each call only rebuilds the x0-dependent terms.
    """

    def __init__(self, scenario: Scenario, reference: int, tau: int, strict: bool = True, **kw):
        self.scenario, self.reference, self.tau = scenario, reference, tau
        self.builders = [
            ProfileBuilder(scenario, i, tau, reference) for i in alternatives(scenario, reference)
        ]
        self.kw = kw
        Ws = [b.W for b in self.builders]
        try:
            self.mixture = minimize_mixture(Ws, tol=kw.get("tol", 1e-8))
        except MixtureSolverError as e:
            if strict:
                raise
            # the relaxation only seeds the design and bounds it from above
            log.warning("%s; continuing with the best iterate", e)
            self.mixture = e.best

    def profiles(self, x0=None) -> list[DistinguishabilityProfile]:
        return [b.profile(x0) for b in self.builders]

    def __call__(self, x0=None) -> ExcitationPlan:
        return design_from_profiles(
            self.profiles(x0),
            self.scenario.gamma_u,
            self.tau,
            mixture=self.mixture,
            **self.kw,
        )


def design_ce_input(
    scenario: Scenario, estimate_index: int, tau: int, x0=None, **kw
) -> ExcitationPlan:
    """Design as if ``systems[estimate_index]`` were the true system."""
    if not 0 <= estimate_index < len(scenario.systems):
        raise IndexError(f"estimate_index {estimate_index} out of range")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return CEDesigner(scenario, estimate_index, tau, **kw)(x0)


def design_oracle_input(scenario: Scenario, tau: int, x0=None, **kw) -> ExcitationPlan:
    return design_ce_input(scenario, scenario.true_index, tau, x0, **kw)
