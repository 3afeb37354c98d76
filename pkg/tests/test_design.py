import numpy as np
import pytest

from activeid.design import (
    CEDesigner,
    MixtureSolverError,
    design_ce_input,
    design_from_profiles,
    design_oracle_input,
    minimize_mixture,
    top_eigvector,
)
from activeid.geometry import ProfileBuilder, build_profile
from activeid.harness import example_3_1, section5

from conftest import random_scenario
from oracles import grid_instance, grid_min_lambda_max, random_psd, sphere_max_min


def check_solution(sol, Ws):
    assert np.all(sol.p >= 0) and abs(sol.p.sum() - 1) <= 1e-10
    assert abs(np.linalg.norm(sol.top_vector) - 1) <= 1e-10
    M = np.tensordot(sol.p, np.stack(Ws), axes=1)
    assert abs(sol.top_vector @ M @ sol.top_vector - sol.value) <= 1e-6 * (1 + sol.value)
    assert sol.certified_gap >= 0
    assert sol.lower_bound <= sol.value + 1e-12


def test_diagonal_pair_exact():
    Ws = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    sol = minimize_mixture(Ws)
    assert np.allclose(sol.p, [0.5, 0.5], atol=1e-8)
    assert sol.value == pytest.approx(0.5, abs=1e-8)
    check_solution(sol, Ws)


def test_single_matrix():
    W = np.diag([3.0, 1.0])
    sol = minimize_mixture([W])
    assert sol.value == 3.0 and sol.certified_gap == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_grid_oracle(seed):
    g = np.random.default_rng(100 + seed)
    Ws = grid_instance(g)
    sol = minimize_mixture(Ws)
    check_solution(sol, Ws)
    grid = grid_min_lambda_max(Ws)
    assert abs(sol.value - grid) <= 1e-4
    assert sol.value <= grid + sol.certified_gap + 1e-12
    assert sol.certified_gap <= 1e-6 * (1 + sol.value)


@pytest.mark.parametrize("n,N", [(12, 8), (30, 3)])
def test_certificate_larger(n, N):
    g = np.random.default_rng(n * N)
    Ws = [random_psd(g, n, rank=max(1, n // 3)) for _ in range(N)]
    sol = minimize_mixture(Ws)
    check_solution(sol, Ws)
    # the certificate is a valid lower bound at every vertex too
    assert sol.lower_bound <= min(np.linalg.eigvalsh(W)[-1] for W in Ws) + 1e-12


def test_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        minimize_mixture([np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2)])


def test_solver_error_carries_best_iterate():
    g = np.random.default_rng(0)
    Ws = [random_psd(g, 6) for _ in range(5)]
    with pytest.raises(MixtureSolverError) as info:
        minimize_mixture(Ws, tol=1e-30, max_iter=3)
    best = info.value.best
    assert best.p.sum() == pytest.approx(1.0)
    assert best.certified_gap > 0


def test_top_eigvector_deterministic_pick():
    lam, v = top_eigvector(np.diag([1.0, 1.0, 0.5]))
    assert lam == 1.0 and np.allclose(v, [1, 0, 0])


def test_example_oracle_design_single_channel():
    for d in (1, 4):
        sc = example_3_1(d)
        tau = 5
        plan = design_oracle_input(sc, tau)
        U = plan.as_inputs(sc.n_u)
        assert plan.energy <= sc.gamma_u**2 * tau * (1 + 1e-9)
        assert np.sum(U[:, 0] ** 2) >= (1 - 1e-6) * plan.energy
        assert plan.achieved_minimum == pytest.approx(0.01 * tau + tau * 0.01, rel=1e-9)


def check_plan(plan, profiles, gamma_u, tau):
    r2 = gamma_u**2 * tau
    assert plan.energy <= r2 * (1 + 1e-9)
    obj = [p.objective(plan.U) for p in profiles]
    assert plan.achieved_minimum == pytest.approx(min(obj), rel=1e-12, abs=1e-12)
    assert plan.achieved_minimum <= plan.upper_bound + 1e-8 * (1 + abs(plan.upper_bound))


def test_refinement_never_regresses(rng):
    for _ in range(5):
        sc = random_scenario(rng, n_x=2, n_u=2, n_systems=4)
        tau = 3
        profiles = [build_profile(sc, i, tau, x0=rng.standard_normal(2)) for i in (1, 2, 3)]
        plan = design_from_profiles(profiles, sc.gamma_u, tau)
        check_plan(plan, profiles, sc.gamma_u, tau)
        v = plan.mixture.top_vector
        pm = plan.mixture.p @ np.stack([p.m for p in profiles])
        U0 = np.sqrt(tau) * sc.gamma_u * (v if v @ pm >= 0 else -v)
        assert plan.achieved_minimum >= min(p.objective(U0) for p in profiles) - 1e-12


def test_sphere_oracle_two_candidates():
    g = np.random.default_rng(21)
    for n_u, tau in [(1, 3), (2, 3), (3, 2)]:
        sc = random_scenario(g, n_x=2, n_u=n_u, n_systems=3)
        x0 = g.standard_normal(2)
        profiles = [build_profile(sc, i, tau, x0=x0) for i in (1, 2)]
        plan = design_from_profiles(profiles, sc.gamma_u, tau)
        check_plan(plan, profiles, sc.gamma_u, tau)
        oracle = sphere_max_min(profiles, sc.gamma_u * np.sqrt(tau), 200_000, g)
        assert plan.achieved_minimum >= 0.99 * oracle


def test_ce_designer_reuses_mixture():
    sc = section5()
    des = CEDesigner(sc, 1, 15)
    a = des(np.zeros(3))
    b = des(np.array([1.0, -2.0, 0.5]))
    assert a.mixture is b.mixture
    assert b.energy <= 15 * (1 + 1e-9)
    direct = design_ce_input(sc, 1, 15, np.array([1.0, -2.0, 0.5]))
    assert np.allclose(direct.U, b.U)
    with pytest.raises(IndexError):
        design_ce_input(sc, 9, 15)


def test_ce_design_uses_estimate_as_reference():
    sc = section5()
    plan = design_ce_input(sc, 2, 4)
    profiles = [ProfileBuilder(sc, i, 4, reference=2).profile() for i in (0, 1, 3)]
    assert plan.achieved_minimum == pytest.approx(min(p.objective(plan.U) for p in profiles))


def test_vertex_optimum_with_degenerate_spectra():
    # scalar multiples of I: the optimum is the smallest vertex and every
    # eigenvalue is tied, which stalls a pure interior path
    cs = [0.0142598, 1.2110654, 0.3048675]
    sol = minimize_mixture([c * np.eye(3) for c in cs])
    assert sol.value == pytest.approx(min(cs), rel=1e-8)
    assert sol.p[0] == pytest.approx(1.0, abs=1e-6)
    assert sol.certified_gap <= 1e-8 * (1 + sol.value)
