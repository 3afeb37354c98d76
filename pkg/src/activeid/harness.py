"""Scenario catalog, Monte Carlo runner and CSV export."""
from __future__ import annotations

import csv
import io
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .design import design_oracle_input
from .identification import (
    DesignCache,
    RhoSchedule,
    StrategyConfig,
    run_identification,
)
from .lti import LinearSystem, NoiseModel, Scenario

log = logging.getLogger(__name__)

# ---------------------------------------------------------------- scenarios

_EX_A_STAR = np.array([[0.0, 0.1], [0.0, 0.0]])
_EX_A_ONE = np.array([[0.0, 0.2], [0.0, 0.0]])
_EX_B = np.array([[0.0], [1.0]])

_S5_A = [
    np.array([[0, 0.1, 0], [0, 0, 0], [0, 0, 0.9]]),
    np.array([[0, 0, 0.1], [0, 0, 0], [0, 0, 0.9]]),
    np.array([[0, 0, 0.1], [0, 0, 0], [0, 0, 0.8]]),
    np.array([[0, 0.1, 0], [0, 0, 0], [0, 0, 0.8]]),
]
_S5_B = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def example_3_1(d: int = 0, sigma_w: float = 1.0, gamma_u: float = 1.0) -> Scenario:
    """Two-system example; d > 0 appends d integrator modes, each with its own input."""
    if d < 0:
        raise ValueError("d must be >= 0")
    n_x = 2 + d

    def lift(A2):
        A = np.eye(n_x)
        A[:2, :2] = A2
        return A

    B = np.zeros((n_x, 1 + d))
    B[:2, :1] = _EX_B
    B[2:, 1:] = np.eye(d)
    systems = (LinearSystem(lift(_EX_A_STAR), B), LinearSystem(lift(_EX_A_ONE), B))
    return Scenario(systems, NoiseModel.isotropic(n_x, sigma_w), gamma_u, 0, f"example_3_1(d={d})")


def section5() -> Scenario:
    systems = tuple(LinearSystem(A, _S5_B) for A in _S5_A)
    return Scenario(systems, NoiseModel.isotropic(3), 1.0, 0, "section5")


def appendix_f1() -> Scenario:
    def lift(A2):
        A = np.diag([0.0, 0.0, 0.9, 0.9, 0.9, 0.9])
        A[:2, :2] = A2
        return A

    B = np.zeros((6, 5))
    B[1:, :] = np.eye(5)
    systems = (LinearSystem(lift(_EX_A_STAR), B), LinearSystem(lift(_EX_A_ONE), B))
    return Scenario(systems, NoiseModel.isotropic(6, 0.1), 1.0, 0, "appendix_f1")


def appendix_f2(seed: int = 0, std: float = 0.1, n_random: int = 20) -> Scenario:
    """Truth from the three-state example at index 0 plus Gaussian perturbations of (A, B)."""
    rng = np.random.default_rng(seed)
    A, B = _S5_A[0], _S5_B
    systems = [LinearSystem(A, B)]
    for _ in range(n_random):
        systems.append(
            LinearSystem(A + std * rng.standard_normal(A.shape), B + std * rng.standard_normal(B.shape))
        )
    return Scenario(tuple(systems), NoiseModel.isotropic(3), 1.0, 0, f"appendix_f2(seed={seed})")


_NAME = re.compile(r"^(\w+?)(?:\((.*)\))?$")


def builtin_scenario(name: str) -> Scenario:
    """Look up ``example_3_1``, ``example_3_1(d=4)``, ``section5``, ``appendix_f1``,
    ``appendix_f2`` or ``appendix_f2(seed=3, std=0.1)``."""
    m = _NAME.match(name.strip())
    if not m:
        raise KeyError(f"unknown scenario {name!r}")
    base, argstr = m.group(1), m.group(2)
    kwargs = {}
    if argstr:
        for part in argstr.split(","):
            if "=" not in part:
                raise KeyError(f"scenario arguments must be key=value, got {part!r}")
            k, v = part.split("=", 1)
            kwargs[k.strip()] = float(v) if "." in v or "e" in v.lower() else int(v)
    table = {
        "example_3_1": example_3_1,
        "section5": section5,
        "appendix_f1": appendix_f1,
        "appendix_f2": appendix_f2,
    }
    if base not in table:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(table)}")
    try:
        return table[base](**kwargs)
    except TypeError as e:
        raise KeyError(f"bad arguments for scenario {base!r}: {e}") from None


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "systems": [{"A": s.A.tolist(), "B": s.B.tolist()} for s in sc.systems],
        "true_index": sc.true_index,
        "sigma_w": sc.noise.sigma_w.tolist(),
        "gamma_u": sc.gamma_u,
    }


def scenario_from_dict(d: dict, name: str = "custom") -> Scenario:
    try:
        systems = tuple(LinearSystem(s["A"], s["B"]) for s in d["systems"])
        noise = NoiseModel(d["sigma_w"])
        return Scenario(systems, noise, float(d.get("gamma_u", 1.0)), int(d.get("true_index", 0)), name)
    except KeyError as e:
        raise ValueError(f"scenario file is missing field {e}") from None


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2))


def load_scenario(ref: str) -> Scenario:
    """A builtin name, or a path to a JSON scenario file."""
    p = Path(ref)
    if ref.endswith(".json") or p.is_file():
        return scenario_from_dict(json.loads(p.read_text()), name=p.stem)
    return builtin_scenario(ref)


# ---------------------------------------------------------------- strategies

_RHO = {"inv_k", "inv_k_sq", "exp_decay", "oracle_rule"}


def parse_strategy(text: str, eta_default: float = 0.01) -> StrategyConfig:
    """Parse ``ce:rho=const0:eta=0.01``, ``oracle``, ``isotropic`` and the like.

    ``offline`` is accepted as a marker for the full-horizon oracle design; the
    runner resolves it into a fixed sequence.
    """
    parts = [p.strip() for p in text.strip().split(":") if p.strip()]
    if not parts:
        raise ValueError("empty strategy")
    head = parts[0]
    kinds = {
        "ce": "certainty_equivalence",
        "oracle": "oracle_optimal",
        "isotropic": "isotropic",
        "offline": "fixed_sequence",
    }
    if head not in kinds:
        raise ValueError(f"unknown strategy {head!r}; choose from {sorted(kinds)}")
    rho, eta = RhoSchedule(), eta_default
    for opt in parts[1:]:
        if "=" not in opt:
            raise ValueError(f"strategy option must be key=value, got {opt!r}")
        key, val = opt.split("=", 1)
        if key == "rho":
            if val.startswith("const"):
                rho = RhoSchedule("constant", float(val[5:] or 0))
            elif val in _RHO:
                rho = RhoSchedule(val)
            else:
                raise ValueError(f"unknown rho schedule {val!r}")
        elif key == "eta":
            eta = float(val)
        else:
            raise ValueError(f"unknown strategy option {key!r}")
    if head == "offline":
        # placeholder sequence, replaced by _resolve_offline
        return StrategyConfig("fixed_sequence", eta=eta, U_full=np.zeros((1, 1)), label="offline")
    if head == "isotropic":
        return StrategyConfig("isotropic", eta=eta)
    return StrategyConfig(kinds[head], rho=rho, eta=eta)


def _resolve_offline(st: StrategyConfig, sc: Scenario, tau: int, episodes: int) -> StrategyConfig:
    if st.label != "offline":
        return st
    plan = design_oracle_input(sc, tau * episodes)
    return StrategyConfig("fixed_sequence", eta=st.eta, U_full=plan.as_inputs(sc.n_u), label="offline")


# ---------------------------------------------------------------- runner

@dataclass(eq=False)
class ExperimentSpec:
    scenario: Scenario
    strategies: Sequence[StrategyConfig]
    tau: int = 15
    episodes: int = 5
    delta: float = 0.05
    mc_runs: int = 100
    base_seed: int = 0
    output: str | None = None
    workers: int = 1
    stop_on_declare: bool = False

    def __post_init__(self):
        if self.mc_runs < 1 or self.episodes < 1 or self.tau < 1:
            raise ValueError("mc_runs, episodes and tau must all be >= 1")
        if not self.strategies:
            raise ValueError("need at least one strategy")


@dataclass(frozen=True)
class RunRow:
    scenario: str
    strategy: str
    seed: int
    run: int
    episode: int
    likelihood_true: float
    posterior_true: float
    declared_flag: bool
    declared_index: int | None
    rho_used: float
    plan_energy: float
    error: str = ""


ROW_FIELDS = [
    "scenario", "strategy", "seed", "run", "episode", "likelihood_true", "posterior_true",
    "declared_flag", "declared_index", "rho_used", "plan_energy", "error",
]


def run_seed(base_seed: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=(run,))


def _run_chunk(spec: ExperimentSpec, st: StrategyConfig, runs: Sequence[int]) -> list[RunRow]:
    sc = spec.scenario
    cache = DesignCache(sc, spec.tau)
    rows = []
    for r in runs:
        try:
            res = run_identification(
                sc, st, spec.tau, spec.delta, spec.episodes,
                np.random.default_rng(run_seed(spec.base_seed, r)),
                stop_on_declare=spec.stop_on_declare, cache=cache,
            )
        except Exception as e:  # one bad run must not sink the batch
            log.warning("run %d of %s failed: %s", r, st.name, e)
            rows.append(RunRow(sc.name, st.name, spec.base_seed, r, -1, np.nan, np.nan,
                               False, None, np.nan, np.nan, f"{type(e).__name__}: {e}"))
            continue
        declared = None
        for ep in res.episodes:
            if declared is None and ep.declared is not None:
                declared = ep.declared
            rows.append(RunRow(
                sc.name, st.name, spec.base_seed, r, ep.k,
                ep.likelihood_true_raw, float(ep.posterior[sc.true_index]),
                declared is not None, declared, ep.rho_used, ep.plan_energy,
            ))
    return rows


def run_experiment(spec: ExperimentSpec) -> list[RunRow]:
    """All (strategy, run) identifications; rows sorted by (strategy, run, episode).

    Run r of every strategy uses the same seed, so strategies see the same
    process noise.
    """
    strategies = [_resolve_offline(s, spec.scenario, spec.tau, spec.episodes) for s in spec.strategies]
    names = [s.name for s in strategies]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate strategy labels: {names}")
    runs = list(range(spec.mc_runs))
    jobs = []
    n_chunks = max(1, spec.workers)
    for st in strategies:
        for c in range(n_chunks):
            chunk = runs[c::n_chunks]
            if chunk:
                jobs.append((st, chunk))
    if spec.workers <= 1:
        parts = [_run_chunk(spec, st, chunk) for st, chunk in jobs]
    else:
        with ProcessPoolExecutor(spec.workers) as pool:
            parts = list(pool.map(_run_chunk, [spec] * len(jobs), *zip(*jobs)))
    rows = [r for part in parts for r in part]
    rows.sort(key=lambda r: (r.strategy, r.run, r.episode))
    if spec.output:
        write_rows(rows, spec.output)
    return rows


@dataclass(frozen=True)
class SummaryRow:
    strategy: str
    episode: int
    n: int
    likelihood_mean: float
    likelihood_std: float
    posterior_mean: float
    posterior_std: float


SUMMARY_FIELDS = [
    "strategy", "episode", "n", "likelihood_mean", "likelihood_std", "posterior_mean", "posterior_std",
]


def summarize(rows: Sequence[RunRow], n_candidates: int | None = None) -> list[SummaryRow]:
    """Per (strategy, episode) mean and population std (ddof=0) over runs.

    With ``n_candidates`` given, an episode-0 row at the uniform prior
    1/n_candidates is prepended for every strategy.
    """
    groups: dict[tuple[str, int], list[RunRow]] = {}
    for r in rows:
        if r.error:
            continue
        groups.setdefault((r.strategy, r.episode), []).append(r)
    out = []
    if n_candidates:
        for s in sorted({k[0] for k in groups}):
            u = 1.0 / n_candidates
            out.append(SummaryRow(s, 0, 0, u, 0.0, u, 0.0))
    for (s, ep), grp in groups.items():
        lik = np.array([r.likelihood_true for r in grp])
        post = np.array([r.posterior_true for r in grp])
        out.append(SummaryRow(s, ep, len(grp), float(lik.mean()), float(lik.std()),
                              float(post.mean()), float(post.std())))
    out.sort(key=lambda r: (r.strategy, r.episode))
    return out


def summary_table(summary: Sequence[SummaryRow], column: str = "likelihood_mean") -> dict[str, dict[int, float]]:
    table: dict[str, dict[int, float]] = {}
    for r in summary:
        table.setdefault(r.strategy, {})[r.episode] = getattr(r, column)
    return table


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows, fields: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in fields])
    return buf.getvalue()


def write_rows(rows: Sequence[RunRow], path) -> None:
    Path(path).write_text(rows_to_csv(rows, ROW_FIELDS))


def write_summary(summary: Sequence[SummaryRow], path) -> None:
    Path(path).write_text(rows_to_csv(summary, SUMMARY_FIELDS))
