"""Six-state example with five inputs: certainty-equivalence vs isotropic excitation.

Prints both the mean likelihood of the true system and the mean
exponential-weights posterior mass on it, per episode.
"""
import argparse

from activeid.harness import ExperimentSpec, appendix_f1, parse_strategy, run_experiment, summarize, summary_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--tau", type=int, default=10)
    ap.add_argument("--eta", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default="six_state.csv")
    args = ap.parse_args()

    sc = appendix_f1()
    strategies = [parse_strategy(s, args.eta) for s in ("ce:rho=const0", "oracle:rho=const0", "isotropic")]
    spec = ExperimentSpec(sc, strategies, tau=args.tau, episodes=args.episodes, mc_runs=args.runs,
                          base_seed=args.seed, output=args.out)
    summary = summarize(run_experiment(spec), n_candidates=len(sc.systems))
    for column in ("likelihood_mean", "posterior_mean"):
        tab = summary_table(summary, column)
        print(f"\n{column}")
        print("episode " + " ".join(f"{s.name:>24}" for s in strategies))
        for k in range(args.episodes + 1):
            print(f"{k:7d} " + " ".join(f"{tab[s.name][k]:24.4f}" for s in strategies))


if __name__ == "__main__":
    main()
