"""Sample-complexity lower bounds and the design-benefit diagnostic."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from .design import minimize_mixture
from .geometry import (
    PECoefficients,
    ProfileBuilder,
    alternatives,
    impulse_energies,
    pe_optimal,
    pe_random,
)
from .lti import Scenario


class HorizonCapError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Deterministic:
    """A fixed stacked input U of length n_u * horizon."""

    U: np.ndarray


@dataclass(frozen=True)
class Isotropic:
    """u(t) i.i.d. N(0, sigma_u2 I); ``None`` means gamma_u^2 / n_u."""

    sigma_u2: float | None = None


@dataclass(frozen=True)
class Optimal:
    """The max-min oracle input, evaluated through its mixture relaxation."""


InputDescriptor = Union[Deterministic, Isotropic, Optimal]


@dataclass(frozen=True, eq=False)
class LowerBoundReport:
    horizon: int
    lhs_per_candidate: np.ndarray
    lhs: float
    threshold: float
    satisfied: bool
    delta: float
    kind: Literal["deterministic", "isotropic", "optimal"]
    # optimal kind only: input term plus the largest / smallest noise trace
    lhs_max_trace: float | None = None
    lhs_min_trace: float | None = None


@dataclass(frozen=True)
class BenefitDiagnostic:
    tau: int
    c_opt: float
    c_rand: float
    ratio: float
    noise_floor: float


def threshold(delta: float) -> float:
    """Right-hand side 2 log(1 / (2.4 delta)) of the lower bound."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 2.0 * math.log(1.0 / (2.4 * delta))


def lower_bound_lhs(
    scenario: Scenario, inp: InputDescriptor, horizon: int, delta: float = 0.05
) -> LowerBoundReport:
    """Evaluate the left-hand side of the lower bound at horizon T for x(0) = 0."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    thr = threshold(delta)
    idx = alternatives(scenario)
    extra = {}
    if isinstance(inp, Deterministic):
        U = np.asarray(inp.U, dtype=float).reshape(-1)
        if U.shape[0] != scenario.n_u * horizon:
            raise ValueError(f"U has length {U.shape[0]}, expected {scenario.n_u * horizon}")
        if U @ U > scenario.gamma_u**2 * horizon * (1 + 1e-9):
            warnings.warn("input energy exceeds gamma_u^2 * horizon; bound still evaluated")
        per = []
        for i in idx:
            b = ProfileBuilder(scenario, i, horizon)
            g = b.G @ U
            per.append(float(g @ g) + b.noise_trace)
        kind = "deterministic"
    elif isinstance(inp, Isotropic):
        s2 = scenario.gamma_u**2 / scenario.n_u if inp.sigma_u2 is None else inp.sigma_u2
        per = []
        for i in idx:
            tr_w, noise = trace_series(scenario, i, horizon)
            per.append(s2 * tr_w[-1] + noise[-1])
        kind = "isotropic"
    elif isinstance(inp, Optimal):
        Ws, noise = [], []
        for i in idx:
            b = ProfileBuilder(scenario, i, horizon)
            Ws.append(b.W)
            noise.append(b.noise_trace)
        lam = minimize_mixture(Ws).value
        term = scenario.gamma_u**2 * horizon * lam
        per = [term + nt for nt in noise]
        extra = dict(lhs_max_trace=term + max(noise), lhs_min_trace=term + min(noise))
        kind = "optimal"
    else:
        raise TypeError(f"unknown input descriptor {inp!r}")
    per = np.asarray(per)
    lhs = float(per.min())
    return LowerBoundReport(horizon, per, lhs, thr, lhs >= thr, delta, kind, **extra)


def trace_series(scenario: Scenario, i: int, horizon: int, reference: int | None = None):
    """Arrays of tr W_i(T) and the noise trace for T = 1..horizon.

    With a_k, b_k the impulse-response energies, tr W(T) = sum_{k<T} (T-k) a_k
    and likewise for the noise; both are cumulative sums.
    """
    a, b = impulse_energies(scenario, i, horizon, reference)
    T = np.arange(1, horizon + 1, dtype=float)
    k = np.arange(horizon, dtype=float)

    def ramp(x):
        # sum_{k<T} (T-k) x_k = T * S0(T) - S1(T)
        return T * np.cumsum(x) - np.cumsum(k * x)

    return ramp(a), ramp(b)


def _isotropic_curve(scenario: Scenario, horizon: int) -> np.ndarray:
    """Isotropic LHS for every T = 1..horizon."""
    s2 = scenario.gamma_u**2 / scenario.n_u
    curves = []
    for i in alternatives(scenario):
        tr_w, noise = trace_series(scenario, i, horizon)
        curves.append(s2 * tr_w + noise)
    return np.min(curves, axis=0)


def min_horizon(
    scenario: Scenario,
    input_kind: Literal["optimal", "isotropic"],
    delta: float,
    cap: int = 100_000,
) -> int:
    """Smallest horizon whose lower-bound LHS reaches the threshold.

    The optimal kind uses the max-trace form.  Doubling brackets the answer and
    bisection narrows it; both LHS forms are nondecreasing in the horizon.
    """
    thr = threshold(delta)
    if thr <= 0:
        return 1
    if input_kind == "isotropic":
        hi = 1
        while True:
            curve = _isotropic_curve(scenario, min(hi, cap))
            hit = np.nonzero(curve >= thr)[0]
            if len(hit):
                return int(hit[0]) + 1
            if hi >= cap:
                raise HorizonCapError(f"lower bound not met within the horizon cap {cap}")
            hi *= 2
    if input_kind != "optimal":
        raise ValueError(f"unknown input kind {input_kind!r}")

    def ok(T: int) -> bool:
        return lower_bound_lhs(scenario, Optimal(), T, delta).lhs_max_trace >= thr

    lo, hi = 0, 1
    while not ok(hi):
        if hi >= cap:
            raise HorizonCapError(f"lower bound not met within the horizon cap {cap}")
        lo, hi = hi, min(2 * hi, cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def benefit(scenario: Scenario, tau: int) -> BenefitDiagnostic:
    opt = pe_optimal(scenario, tau)
    rnd = pe_random(scenario, tau)
    ratio = opt.c_u / rnd.c_u if rnd.c_u > 0 else math.inf
    return BenefitDiagnostic(tau, opt.c_u, rnd.c_u, ratio, rnd.c_w)


def stopping_episode_bound(
    pe: PECoefficients,
    gamma_u: float,
    n_alternatives: int,
    delta: float,
    eta: float,
    a: float = 1.0,
) -> float:
    """Episode count after which the sequential test is guaranteed to have stopped.

    Smallest k with k tau (gamma_u^2 c_u + c_w) >= 8 (2a + 1/(2 eta)) log(N / delta).
    Informational: the constant is loose and never gates termination.
    """
    if not (0 < delta < 1 and eta > 0):
        raise ValueError("need 0 < delta < 1 and eta > 0")
    rate = pe.tau * (gamma_u**2 * pe.c_u + pe.c_w)
    need = 8.0 * (2.0 * a + 1.0 / (2.0 * eta)) * math.log(n_alternatives / delta)
    if rate <= 0:
        return math.inf
    return float(max(1, math.ceil(need / rate)))
