"""Effect of the isotropic mixing schedule on a class of randomly perturbed systems.

The truth is the three-state example; the alternatives are Gaussian
perturbations of its (A, B).  Each schedule is run with the certainty-
equivalence design and compared against pure isotropic input.
"""
import argparse

from activeid.harness import ExperimentSpec, appendix_f2, parse_strategy, run_experiment, summarize, summary_table


SCHEDULES = ("const0", "const0.5", "inv_k", "inv_k_sq", "exp_decay", "oracle_rule")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--tau", type=int, default=15)
    ap.add_argument("--eta", type=float, default=0.01)
    ap.add_argument("--std", type=float, default=0.1, help="perturbation std per matrix entry")
    ap.add_argument("--scenario-seed", type=int, default=0)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="rho_schedules.csv")
    args = ap.parse_args()

    sc = appendix_f2(seed=args.scenario_seed, std=args.std)
    strategies = [parse_strategy(f"ce:rho={r}", args.eta) for r in SCHEDULES] + [parse_strategy("isotropic", args.eta)]
    spec = ExperimentSpec(sc, strategies, tau=args.tau, episodes=args.episodes, mc_runs=args.runs,
                          base_seed=args.seed, output=args.out, workers=args.workers)
    tab = summary_table(summarize(run_experiment(spec), n_candidates=len(sc.systems)))
    for s in strategies:
        print(f"{s.name:28s} " + " ".join(f"{tab[s.name][k]:.3f}" for k in range(args.episodes + 1)))


if __name__ == "__main__":
    main()
