"""Command line entry point: ``run``, ``analyze`` and ``design``.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import HorizonCapError, benefit, min_horizon
from .design import MixtureSolverError, design_ce_input
from .geometry import eta_bound, pe_optimal, pe_random
from .harness import (
    ExperimentSpec,
    load_scenario,
    parse_strategy,
    run_experiment,
    summarize,
    write_summary,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scenario(ref: str):
    try:
        return load_scenario(ref)
    except KeyError as e:
        raise UsageError(str(e).strip("'\"")) from None


def cmd_run(args) -> int:
    sc = _scenario(args.scenario)
    try:
        strategies = [parse_strategy(s, args.eta) for s in args.strategies.split(",") if s.strip()]
        spec = ExperimentSpec(
            sc, strategies, tau=args.tau, episodes=args.episodes, delta=args.delta,
            mc_runs=args.mc, base_seed=args.seed, output=args.out, workers=args.workers,
            stop_on_declare=args.stop_on_declare,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    rows = run_experiment(spec)
    summary = summarize(rows, n_candidates=len(sc.systems))
    summary_path = args.summary or str(Path(args.out).with_name(Path(args.out).stem + "_summary.csv"))
    write_summary(summary, summary_path)
    errors = sum(1 for r in rows if r.error)
    print(f"wrote {len(rows)} rows to {args.out} and the summary to {summary_path}"
          + (f" ({errors} failed runs)" if errors else ""))
    return EXIT_OK


def cmd_analyze(args) -> int:
    sc = _scenario(args.scenario)
    tau = args.tau
    b = benefit(sc, tau)
    rnd, opt = pe_random(sc, tau), pe_optimal(sc, tau)
    horizons = {}
    for d in args.deltas:
        horizons[str(d)] = {
            "optimal": min_horizon(sc, "optimal", d),
            "isotropic": min_horizon(sc, "isotropic", d),
        }
    out = {
        "scenario": sc.name,
        "tau": tau,
        "benefit": {"c_opt": b.c_opt, "c_rand": b.c_rand, "ratio": b.ratio, "noise_floor": b.noise_floor},
        "pe_random": {"c_u": rnd.c_u, "c_w": rnd.c_w},
        "pe_optimal": {"c_u": opt.c_u, "c_w": opt.c_w},
        "lower_bound_horizons": horizons,
        "eta_bound": eta_bound(sc, tau, sc.gamma_u**2 / sc.n_u),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _read_x0(path: str) -> np.ndarray:
    text = Path(path).read_text()
    try:
        return np.asarray(json.loads(text), dtype=float).reshape(-1)
    except json.JSONDecodeError:
        return np.asarray(text.split(), dtype=float)


def cmd_design(args) -> int:
    sc = _scenario(args.scenario)
    est = sc.true_index if args.estimate is None else args.estimate
    if not 0 <= est < len(sc.systems):
        raise UsageError(f"--estimate must lie in 0..{len(sc.systems) - 1}")
    x0 = None if args.x0 is None else _read_x0(args.x0)
    if x0 is not None and x0.shape != (sc.n_x,):
        raise UsageError(f"x0 has dimension {x0.shape[0]}, expected {sc.n_x}")
    plan = design_ce_input(sc, est, args.tau, x0)
    out = {
        "scenario": sc.name,
        "estimate": est,
        "tau": args.tau,
        "U": plan.as_inputs(sc.n_u).tolist(),
        "energy": plan.energy,
        "achieved_minimum": plan.achieved_minimum,
        "upper_bound": plan.upper_bound,
        "gap": plan.gap,
        "method": plan.method,
        "mixture_weights": plan.mixture.p.tolist(),
        "mixture_certified_gap": plan.mixture.certified_gap,
    }
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="activeid", description="Active identification of linear systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="Monte Carlo identification experiment")
    r.add_argument("--scenario", required=True, help="builtin name or scenario JSON file")
    r.add_argument("--strategies", default="ce:rho=const0:eta=0.01,isotropic,oracle")
    r.add_argument("--eta", type=float, default=0.01, help="default eta for strategies without one")
    r.add_argument("--tau", type=int, default=15)
    r.add_argument("--episodes", type=int, default=5)
    r.add_argument("--delta", type=float, default=0.05)
    r.add_argument("--mc", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="results.csv")
    r.add_argument("--summary", default=None, help="summary CSV (default <out>_summary.csv)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--stop-on-declare", action="store_true",
                   help="end a run at its first declaration instead of running all episodes")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="PE coefficients, design benefit and lower-bound horizons")
    a.add_argument("--scenario", required=True)
    a.add_argument("--tau", type=int, required=True)
    a.add_argument("--deltas", type=float, nargs="+", default=[0.1, 0.05, 0.01])
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("design", help="max-min excitation block for one estimate")
    d.add_argument("--scenario", required=True)
    d.add_argument("--tau", type=int, required=True)
    d.add_argument("--estimate", type=int, default=None, help="reference index (default: true index)")
    d.add_argument("--x0", default=None, help="initial state file (JSON list or whitespace separated)")
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_design)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("tau", "episodes", "mc"):
        if getattr(args, name, 1) < 1:
            print(f"activeid: error: --{name} must be >= 1", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"activeid: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MixtureSolverError, HorizonCapError) as e:
        print(f"activeid: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"activeid: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # malformed scenario files and out-of-range parameters
        print(f"activeid: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
