import csv
import json

import numpy as np
import pytest

from activeid.cli import main
from activeid.geometry import build_profile
from activeid.harness import (
    ROW_FIELDS,
    ExperimentSpec,
    RunRow,
    appendix_f1,
    appendix_f2,
    builtin_scenario,
    example_3_1,
    load_scenario,
    parse_strategy,
    rows_to_csv,
    run_experiment,
    save_scenario,
    section5,
    summarize,
)


def test_builtin_shapes():
    sc = section5()
    assert (sc.n_x, sc.n_u, len(sc.systems), sc.true_index) == (3, 2, 4, 0)
    f1 = appendix_f1()
    assert (f1.n_x, f1.n_u, len(f1.systems)) == (6, 5, 2)
    assert np.allclose(f1.noise.sigma_w, 0.01 * np.eye(6))
    f2 = appendix_f2(seed=1)
    assert len(f2.systems) == 21
    assert np.array_equal(f2.systems[0].A, sc.systems[0].A)
    assert np.array_equal(appendix_f2(seed=1).systems[5].B, f2.systems[5].B)
    ex = builtin_scenario("example_3_1(d=3)")
    assert (ex.n_x, ex.n_u) == (5, 4)


def test_example_gap_matrix():
    prof = build_profile(example_3_1(), 1, 1, np.zeros(2))
    assert np.allclose(prof.W, 0.01 * np.eye(1))


def test_unknown_scenario():
    with pytest.raises(KeyError):
        builtin_scenario("section6")
    with pytest.raises(KeyError):
        builtin_scenario("example_3_1(q=1)")


def test_json_round_trip(tmp_path):
    sc = appendix_f2(seed=4)
    p = tmp_path / "sc.json"
    save_scenario(sc, p)
    back = load_scenario(str(p))
    for a, b in zip(sc.systems, back.systems):
        assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)
    assert np.array_equal(sc.noise.sigma_w, back.noise.sigma_w)
    assert (back.gamma_u, back.true_index) == (sc.gamma_u, sc.true_index)
    (tmp_path / "bad.json").write_text(json.dumps({"sigma_w": [[1.0]]}))
    with pytest.raises(ValueError):
        load_scenario(str(tmp_path / "bad.json"))


def test_parse_strategy():
    st = parse_strategy("ce:rho=inv_k:eta=0.5")
    assert (st.kind, st.rho.kind, st.eta) == ("certainty_equivalence", "inv_k", 0.5)
    assert parse_strategy("ce:rho=const0.25").rho.value == 0.25
    assert parse_strategy("oracle").kind == "oracle_optimal"
    assert parse_strategy("isotropic", eta_default=0.2).eta == 0.2
    for bad in ["", "greedy", "ce:rho=often", "ce:foo=1", "ce:rho"]:
        with pytest.raises(ValueError):
            parse_strategy(bad)


def _spec(**kw):
    base = dict(
        scenario=section5(),
        strategies=[parse_strategy(s) for s in ("ce", "isotropic", "oracle")],
        tau=5, episodes=1, mc_runs=1, base_seed=3,
    )
    base.update(kw)
    return ExperimentSpec(**base)


def test_smallest_experiment():
    rows = run_experiment(_spec())
    assert len(rows) == 3
    assert all(r.episode == 1 and r.run == 0 and r.seed == 3 for r in rows)
    assert [r.strategy for r in rows] == sorted(r.strategy for r in rows)


def test_csv_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(_spec(episodes=2, mc_runs=3, output=str(a)))
    run_experiment(_spec(episodes=2, mc_runs=3, output=str(b)))
    assert a.read_bytes() == b.read_bytes()
    with open(a) as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0]) == ROW_FIELDS and len(rows) == 18


def test_workers_match_inline():
    inline = run_experiment(_spec(episodes=2, mc_runs=4))
    pooled = run_experiment(_spec(episodes=2, mc_runs=4, workers=2))
    assert rows_to_csv(inline, ROW_FIELDS) == rows_to_csv(pooled, ROW_FIELDS)


def test_offline_strategy():
    rows = run_experiment(_spec(strategies=[parse_strategy("offline")], episodes=2))
    assert [r.strategy for r in rows] == ["offline", "offline"]
    # the budget covers the whole horizon, not each block
    assert sum(r.plan_energy for r in rows) <= 10 * (1 + 1e-9)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(mc_runs=0)
    with pytest.raises(ValueError):
        _spec(strategies=[])
    with pytest.raises(ValueError, match="duplicate"):
        run_experiment(_spec(strategies=[parse_strategy("ce"), parse_strategy("ce")]))


def _row(strategy, run, ep, lik, post):
    return RunRow("s", strategy, 0, run, ep, lik, post, False, None, 0.0, 1.0)


def test_summarize():
    s = summarize([_row("a", 0, 1, 0.3, 0.4)], n_candidates=4)
    assert [(r.episode, r.likelihood_mean) for r in s] == [(0, 0.25), (1, 0.3)]
    assert s[1].likelihood_std == 0.0
    s = summarize([_row("a", 0, 1, 0.2, 0.1), _row("a", 1, 1, 0.6, 0.5)])
    assert s[0].likelihood_mean == pytest.approx(0.4)
    assert s[0].posterior_std == pytest.approx(0.2)
    bad = RunRow("s", "a", 0, 2, -1, np.nan, np.nan, False, None, np.nan, np.nan, "boom")
    assert summarize([bad, _row("a", 0, 1, 0.5, 0.5)])[0].n == 1


def test_summary_matches_streaming_mean():
    g = np.random.default_rng(0)
    vals = g.random(500)
    s = summarize([_row("a", r, 1, v, v) for r, v in enumerate(vals)])[0]
    mean = 0.0
    for n, v in enumerate(vals, 1):
        mean += (v - mean) / n
    assert abs(s.likelihood_mean - mean) <= 1e-12


# ---------------------------------------------------------------- CLI

def test_cli_run(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--scenario", "section5", "--strategies", "ce,isotropic", "--tau", "5",
                 "--episodes", "2", "--mc", "2", "--out", str(out)])
    assert code == 0
    summ = tmp_path / "r_summary.csv"
    assert out.exists() and summ.exists()
    lines = summ.read_text().splitlines()
    assert len(lines) == 1 + 2 * 3


def test_cli_analyze(capsys):
    assert main(["analyze", "--scenario", "section5", "--tau", "15", "--deltas", "0.05"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["benefit"]["ratio"] > 1
    assert out["lower_bound_horizons"]["0.05"]["isotropic"] >= out["lower_bound_horizons"]["0.05"]["optimal"]


def test_cli_design(tmp_path, capsys):
    x0 = tmp_path / "x0.txt"
    x0.write_text("1 0 -1")
    out = tmp_path / "d.json"
    assert main(["design", "--scenario", "section5", "--tau", "6", "--x0", str(x0), "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    U = np.array(d["U"])
    assert U.shape == (6, 2) and np.sum(U**2) <= 6 * (1 + 1e-9)
    assert d["achieved_minimum"] <= d["upper_bound"] + 1e-9


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--scenario", "nowhere"],
        ["run", "--scenario", "section5", "--strategies", "greedy"],
        ["run", "--scenario", "section5", "--mc", "0"],
        ["design", "--scenario", "section5", "--tau", "3", "--estimate", "9"],
        ["frobnicate"],
    ],
)
def test_cli_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as e:
        code = main(argv)
        raise SystemExit(code)
    assert e.value.code == 1


def test_cli_io_error(tmp_path):
    code = main(["design", "--scenario", "section5", "--tau", "3", "--x0", str(tmp_path / "missing")])
    assert code == 3
