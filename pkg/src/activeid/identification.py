"""Sequential identification with a likelihood-ratio stopping rule and CE input design.

Episodes are numbered from 1.  Episode k applies an input block of length tau
starting at state x((k-1) tau); the sampling weights for that block come from
the prediction errors accumulated before it (uniform at k = 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .design import CEDesigner
from .geometry import pe_random
from .lti import Scenario, Trajectory, prediction_errors, sample_isotropic_input, simulate

RhoKind = Literal["constant", "inv_k", "inv_k_sq", "exp_decay", "oracle_rule"]
StrategyKind = Literal["oracle_optimal", "certainty_equivalence", "isotropic", "fixed_sequence"]


@dataclass(frozen=True)
class RhoSchedule:
    kind: RhoKind = "constant"
    value: float = 0.0  # only used by "constant"

    def __post_init__(self):
        if self.kind not in ("constant", "inv_k", "inv_k_sq", "exp_decay", "oracle_rule"):
            raise ValueError(f"unknown rho schedule {self.kind!r}")
        if self.kind == "constant" and not 0.0 <= self.value <= 1.0:
            raise ValueError("constant rho must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class StrategyConfig:
    kind: StrategyKind
    rho: RhoSchedule = field(default_factory=RhoSchedule)
    eta: float = 0.01
    U_full: np.ndarray | None = None  # (T, n_u) for fixed_sequence
    label: str | None = None

    def __post_init__(self):
        if self.kind not in ("oracle_optimal", "certainty_equivalence", "isotropic", "fixed_sequence"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.kind == "fixed_sequence":
            if self.U_full is None:
                raise ValueError("fixed_sequence needs U_full")
            U = np.array(self.U_full, dtype=float)
            if U.ndim == 1:
                U = U[:, None]
            U.setflags(write=False)
            object.__setattr__(self, "U_full", U)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind in ("isotropic", "fixed_sequence"):
            return self.kind
        r = self.rho
        rho = f"const{r.value:g}" if r.kind == "constant" else r.kind
        short = "ce" if self.kind == "certainty_equivalence" else "oracle"
        return f"{short}:rho={rho}:eta={self.eta:g}"


@dataclass(frozen=True, eq=False)
class EpisodeRecord:
    k: int
    eps: np.ndarray
    weights: np.ndarray
    posterior: np.ndarray
    likelihood_true_raw: float
    drawn_estimate: int | None
    rho_used: float
    plan_energy: float
    terminated: bool
    declared: int | None


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    episodes: list[EpisodeRecord]
    declared: int | None
    stop_episode: int | None
    correct: bool
    trajectory: Trajectory

    def __post_init__(self):
        assert (self.declared is None) == (self.stop_episode is None)


def stopping_threshold(n_alternatives: int, delta: float) -> float:
    return 2.0 * math.log(n_alternatives / delta)


def termination_check(eps, n_alternatives: int, delta: float) -> int | None:
    """Index j with eps_i - eps_j > 2 log(N / delta) for every i != j, if any."""
    eps = np.asarray(eps, dtype=float)
    if len(eps) != n_alternatives + 1:
        raise ValueError(f"eps has length {len(eps)}, expected N+1={n_alternatives + 1}")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    thr = stopping_threshold(n_alternatives, delta)
    j = int(np.argmin(eps))
    others = np.delete(eps, j)
    if np.all(others - eps[j] > thr):
        return j
    return None


def exp_weights(eps, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights exp(-eta eps_i) scaled by exp(eta min eps) to avoid underflow, and their normalisation."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    z = -eta * np.asarray(eps, dtype=float)
    w = np.exp(z - z.max())
    return w, w / w.sum()


def rho_value(schedule: RhoSchedule, k: int, posterior=None, c_opt=None, c_rand=None) -> float:
    if schedule.kind == "constant":
        return schedule.value
    if schedule.kind == "inv_k":
        return 1.0 / (1.0 + k)
    if schedule.kind == "inv_k_sq":
        return 1.0 / (1.0 + k) ** 2
    if schedule.kind == "exp_decay":
        return math.exp(-k)
    # switch to pure design once the (proxy) error probability makes it worthwhile
    p_err = 1.0 - float(np.max(posterior))
    return 0.0 if (1.0 - p_err) * c_opt >= c_rand else 1.0


class DesignCache:
    """Per-run cache of CE designers and PE coefficients, keyed by reference index."""

    def __init__(self, scenario: Scenario, tau: int):
        self.scenario, self.tau = scenario, tau
        self._designers: dict[int, CEDesigner] = {}
        self._pe: dict[int, tuple[float, float]] = {}

    def designer(self, ref: int) -> CEDesigner:
        if ref not in self._designers:
            self._designers[ref] = CEDesigner(self.scenario, ref, self.tau, strict=False)
        return self._designers[ref]

    def pe(self, ref: int) -> tuple[float, float]:
        if ref not in self._pe:
            sol = self.designer(ref).mixture
            rnd = pe_random(self.scenario, self.tau, reference=ref)
            self._pe[ref] = (sol.value, rnd.c_u)
        return self._pe[ref]


def _draw_index(posterior: np.ndarray, rng: np.random.Generator) -> int:
    c = np.cumsum(posterior)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(c) - 1))


def design_episode_input(
    scenario: Scenario,
    strategy: StrategyConfig,
    k: int,
    eps,
    x_start,
    rng: np.random.Generator,
    tau: int,
    cache: DesignCache | None = None,
) -> tuple[np.ndarray, dict]:
    """Input block (tau, n_u) for episode k plus the bookkeeping for its record.

    Random draws happen in a fixed order: estimate index (only if rho < 1),
    then the isotropic part (only if rho > 0).  With rho = 1 the draws are
    exactly those of the isotropic strategy.
    """
    x_start = np.asarray(x_start, dtype=float).reshape(-1)
    if x_start.shape != (scenario.n_x,):
        raise ValueError(f"x_start has dimension {x_start.shape[0]}, expected {scenario.n_x}")
    n_u, g = scenario.n_u, scenario.gamma_u
    _, posterior = exp_weights(eps, strategy.eta)
    info = dict(drawn_estimate=None, rho_used=1.0)

    if strategy.kind == "isotropic":
        u = sample_isotropic_input(g, n_u, tau, rng)
    elif strategy.kind == "fixed_sequence":
        U = strategy.U_full
        if len(U) < k * tau:
            raise ValueError(f"fixed sequence has {len(U)} steps, episode {k} needs {k * tau}")
        if U.shape[1] != n_u:
            raise ValueError(f"fixed sequence has n_u={U.shape[1]}, expected {n_u}")
        u = U[(k - 1) * tau : k * tau].copy()
        info["rho_used"] = 0.0
    else:
        cache = cache or DesignCache(scenario, tau)
        if strategy.kind == "oracle_optimal":
            ref_rule = scenario.true_index
        else:
            ref_rule = int(np.argmax(posterior))
        c_opt = c_rand = None
        if strategy.rho.kind == "oracle_rule":
            c_opt, c_rand = cache.pe(ref_rule)
        rho = rho_value(strategy.rho, k, posterior, c_opt, c_rand)
        info["rho_used"] = rho
        u = np.zeros((tau, n_u))
        if rho < 1.0:
            if strategy.kind == "certainty_equivalence":
                ref = _draw_index(posterior, rng)
            else:
                ref = scenario.true_index
            info["drawn_estimate"] = ref
            plan = cache.designer(ref)(x_start)
            u = math.sqrt(1.0 - rho) * plan.as_inputs(n_u)
        if rho > 0.0:
            u_eta = sample_isotropic_input(g, n_u, tau, rng)
            u = u_eta if rho == 1.0 else u + math.sqrt(rho) * u_eta
    info["plan_energy"] = float(np.sum(u * u))
    return u, info


def run_identification(
    scenario: Scenario,
    strategy: StrategyConfig,
    tau: int,
    delta: float,
    max_episodes: int,
    rng,
    *,
    stop_on_declare: bool = True,
    cache: DesignCache | None = None,
) -> IdentificationResult:
    """Run the sequential test on one trajectory of the true system.

    ``rng`` (Generator, SeedSequence or int) is split into a noise stream and an
    input stream, so strategies sharing a seed see the same process noise.
    With ``stop_on_declare=False`` the loop runs all episodes; the first
    declaration is kept.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if max_episodes < 1:
        raise ValueError("max_episodes must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    noise_rng, input_rng = rng.spawn(2)
    cache = cache or DesignCache(scenario, tau)
    N = scenario.n_alternatives
    truth = scenario.true_system
    eps = np.zeros(N + 1)
    x = np.zeros(scenario.n_x)
    states, inputs = [x[None, :]], []
    records: list[EpisodeRecord] = []
    declared = stop = None

    for k in range(1, max_episodes + 1):
        u, info = design_episode_input(scenario, strategy, k, eps, x, input_rng, tau, cache)
        seg = simulate(truth, scenario.noise, u, x0=x, rng=noise_rng)
        eps = eps + prediction_errors(seg, scenario.systems, scenario.noise)
        x = seg.states[-1]
        states.append(seg.states[1:])
        inputs.append(u)
        w, post = exp_weights(eps, strategy.eta)
        lik = exp_weights(eps, 0.5)[1]
        winner = termination_check(eps, N, delta)
        if winner is not None and declared is None:
            declared, stop = winner, k
        records.append(
            EpisodeRecord(
                k=k,
                eps=eps.copy(),
                weights=w,
                posterior=post,
                likelihood_true_raw=float(lik[scenario.true_index]),
                terminated=winner is not None,
                declared=winner,
                **info,
            )
        )
        if declared is not None and stop_on_declare:
            break

    traj = Trajectory(np.vstack(states), np.vstack(inputs))
    return IdentificationResult(records, declared, stop, declared == scenario.true_index, traj)
