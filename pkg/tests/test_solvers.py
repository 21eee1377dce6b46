import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chebppr import (
    ConvergenceError,
    DenseLimitError,
    GraphDelta,
    MessageLedger,
    PushSolver,
    apply_delta,
    build_graph,
    compute_coefficients,
    compute_residual,
    dense_oracle,
    indicator,
    make_diffusion_params,
    make_operator,
    push_update,
    relative_error,
    rwr_update,
    solve_scratch,
    sparse_reference,
    transition_transpose_apply,
    update_local,
    warm_restart_power,
)
from chebppr.errors import SpectralBoundError
from chebppr.graph import support
from chebppr.solvers import make_push_solver, rwr_residual, scratch_iterates, update_iterates

from conftest import additions_only, random_delta, random_graph

PATH_PR = np.array([7 / 12, 1 / 3, 1 / 12])
TRI_PR = np.array([3 / 5, 1 / 5, 1 / 5])


def hand_solve(w, mu, y):
    # independent oracle: (I - P^T + mu I) p = mu y with P^T = W D^-1
    d = w.sum(axis=0)
    p_t = np.divide(w, d, out=np.zeros_like(w), where=d > 0)
    return np.linalg.solve(np.eye(len(y)) * (1 + mu) - p_t, mu * np.asarray(y, float))


def test_oracle_fixtures(two_node, path3, triangle):
    for g, expected in [(two_node, [2 / 3, 1 / 3]), (path3, PATH_PR), (triangle, TRI_PR)]:
        spec = make_operator("standard", g)
        out = dense_oracle(g, spec, 1.0, indicator(g.num_nodes, 0))
        np.testing.assert_allclose(out, expected, atol=1e-12)
        np.testing.assert_allclose(out, hand_solve(g.to_dense(), 1.0, indicator(g.num_nodes, 0)), atol=1e-14)
        np.testing.assert_allclose(sparse_reference(g, spec, 1.0, indicator(g.num_nodes, 0)), expected, atol=1e-12)


def test_oracle_size_limit():
    g = random_graph(np.random.default_rng(0), 30)
    with pytest.raises(DenseLimitError):
        dense_oracle(g, make_operator("standard", g), 1.0, indicator(30, 0), dense_limit=10)


def test_scratch_examples(two_node, path3):
    spec = make_operator("standard", two_node)
    np.testing.assert_allclose(solve_scratch(two_node, spec, 1.0, indicator(2, 0), 40), [2 / 3, 1 / 3], atol=1e-12)
    c0 = compute_coefficients(1.0, 2.0, 0).c[0]
    y = np.array([0.2, 0.5, 0.3])
    spec3 = make_operator("standard", path3)
    np.testing.assert_allclose(solve_scratch(path3, spec3, 1.0, y, 0), c0 / 2 * y)
    for K in (0, 3, 17):
        assert not solve_scratch(path3, spec3, 1.0, np.zeros(3), K).any()


def test_residual_path_to_triangle(path3, triangle):
    spec = make_operator("standard", path3)
    params = make_diffusion_params(1.0, 2.0)
    r = compute_residual(spec, path3, triangle, params, PATH_PR)
    np.testing.assert_allclose(r, np.array([1, -8, 7]) / 48, atol=1e-15)
    assert abs(r.sum()) < 1e-15
    assert not compute_residual(spec, path3, path3, params, PATH_PR).any()


def test_update_path_to_triangle(path3, triangle):
    spec = make_operator("standard", path3)
    r = np.array([1, -8, 7]) / 48
    np.testing.assert_allclose(dense_oracle(triangle, spec, 1.0, r), np.array([1, -8, 7]) / 120, atol=1e-15)
    res = update_local(path3, triangle, spec, 1.0, PATH_PR, 40)
    np.testing.assert_allclose(res.scores, TRI_PR, atol=1e-10)
    assert res.residual_support_size == 3
    assert res.ledger.total == sum(res.ledger.rounds)


def test_update_without_change_is_identity(path3):
    spec = make_operator("standard", path3)
    ledger = MessageLedger()
    res = update_local(path3, path3, spec, 1.0, PATH_PR, 10, ledger)
    np.testing.assert_array_equal(res.scores, PATH_PR)
    assert ledger.total == 0 and res.residual_support_size == 0


def test_update_cheaper_than_scratch_on_long_path():
    n = 200
    g = build_graph([(i, i + 1, 1.0) for i in range(n - 1)], n)
    g_new = apply_delta(g, GraphDelta.from_changes([(n - 2, n - 1, 1.5)]))
    spec = make_operator("standard", g)
    y = indicator(n, 0)
    pr_old = dense_oracle(g, spec, 1.0, y)
    exact = dense_oracle(g_new, spec, 1.0, y)

    def cost(iterates, ledger):
        for k, est in iterates:
            if relative_error(est, exact) <= 1e-6:
                return sum(ledger.rounds[:k])
        raise AssertionError("target not reached")

    lu, ls = MessageLedger(), MessageLedger()
    update_cost = cost(update_iterates(g, g_new, spec, 1.0, pr_old, 60, lu), lu)
    scratch_cost = cost(scratch_iterates(g_new, spec, 1.0, y, 60, ls), ls)
    assert scratch_cost > 0
    assert update_cost < 0.25 * scratch_cost


def test_update_rejects_violated_bound():
    g = build_graph([(0, 1, 1.0), (1, 2, 1.0)], 4)
    spec = make_operator("dual", g, sigma=0.5)
    bumped = type(spec)(spec.kind, spec.lambda_max * 0.5, spec.gamma, spec.sigma, spec.m, spec.dense_limit)
    g_new = apply_delta(g, GraphDelta.from_changes([(2, 3, 1.0)]))
    with pytest.raises(SpectralBoundError):
        update_local(g, g_new, bumped, 1.0, dense_oracle(g, spec, 1.0, indicator(4, 0)), 5)


def test_warm_restart_examples(path3, triangle):
    spec = make_operator("standard", path3)
    params = make_diffusion_params(1.0, 2.0)
    y = indicator(3, 0)
    np.testing.assert_array_equal(warm_restart_power(triangle, spec, params, y, PATH_PR, 0), PATH_PR)
    np.testing.assert_allclose(warm_restart_power(triangle, spec, params, y, TRI_PR, 25), TRI_PR, atol=1e-12)
    one = warm_restart_power(triangle, spec, params, y, PATH_PR, 1)
    r = compute_residual(spec, path3, triangle, params, PATH_PR)
    np.testing.assert_allclose(one, PATH_PR + r, atol=1e-15)


def test_power_recursion_equals_random_walk_iteration():
    rng = np.random.default_rng(1)
    g = random_graph(rng, 60)
    spec = make_operator("standard", g)
    alpha = 0.5
    params = make_diffusion_params((1 - alpha) / alpha, 2.0)
    y = indicator(60, 7)
    p_cheb, p_rw = np.zeros(60), np.zeros(60)
    for _ in range(20):
        p_cheb = warm_restart_power(g, spec, params, y, p_cheb, 1)
        p_rw = (1 - alpha) * y + alpha * transition_transpose_apply(g, p_rw)
        np.testing.assert_allclose(p_cheb, p_rw, atol=1e-15)


def test_rwr_examples(path3, triangle):
    np.testing.assert_array_equal(rwr_update(path3, path3, 0.5, PATH_PR, T=5), PATH_PR)
    np.testing.assert_allclose(rwr_update(path3, triangle, 0.5, PATH_PR, target=1e-10), TRI_PR, atol=1e-10)
    with pytest.raises(ValueError):
        rwr_update(path3, triangle, 1.0, PATH_PR, T=3)
    with pytest.raises(ValueError):
        rwr_update(path3, triangle, 0.5, PATH_PR)


def test_rwr_residual_matches_chebyshev_residual():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 50)
    g_new = apply_delta(g, random_delta(rng, g, 5))
    spec = make_operator("standard", g)
    pr = dense_oracle(g, spec, 1.0, indicator(50, 0))
    r = compute_residual(spec, g, g_new, make_diffusion_params(1.0, 2.0), pr)
    np.testing.assert_allclose(rwr_residual(g, g_new, 0.5, pr), r, atol=1e-16)


def test_rwr_and_update_agree():
    rng = np.random.default_rng(9)
    g = random_graph(rng, 80)
    g_new = apply_delta(g, additions_only(rng, g, 4))
    spec = make_operator("standard", g)
    pr = dense_oracle(g, spec, 1.0, indicator(80, 2))
    target = 1e-9
    a = rwr_update(g, g_new, 0.5, pr, target=target)
    b = update_local(g, g_new, spec, 1.0, pr, 30).scores
    assert np.linalg.norm(a - b) / np.linalg.norm(b) <= 2 * target


def test_push_zero_residual_returns_input(path3):
    ledger = MessageLedger()
    out = push_update(path3, path3, 0.5, PATH_PR, 1e-12, ledger)
    np.testing.assert_array_equal(out, PATH_PR)
    assert ledger.total == 0


def test_push_path_to_triangle(path3, triangle):
    eps = 1e-12
    out = push_update(path3, triangle, 0.5, PATH_PR, eps)
    assert np.abs(out - TRI_PR).max() <= eps * 3


def test_push_guard(path3, triangle):
    with pytest.raises(ConvergenceError):
        push_update(path3, triangle, 0.5, PATH_PR, 1e-15, max_pushes=2)


def test_push_resumes_with_smaller_threshold():
    rng = np.random.default_rng(2)
    g = random_graph(rng, 40)
    g_new = apply_delta(g, random_delta(rng, g, 3))
    pr = dense_oracle(g, make_operator("standard", g), 1.0, indicator(40, 0))
    one_go = make_push_solver(g, g_new, 0.5, pr)
    staged = make_push_solver(g, g_new, 0.5, pr)
    a = one_go.run(1e-10)
    staged.run(1e-4)
    b = staged.run(1e-10)
    np.testing.assert_array_equal(a, b)
    assert one_go.pushes == staged.pushes


def test_push_tie_break_smallest_id():
    g = build_graph([(0, 1, 1.0), (1, 2, 1.0)], 3)
    solver = PushSolver(g, 0.5, np.zeros(3), np.array([0.0, 0.5, 0.5]))
    order = []
    solver.run(0.4, callback=lambda s: order.append(np.flatnonzero(s.p).tolist()), every=1)
    assert order[0] == [1]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(4, 50), count=st.integers(1, 8))
def test_push_invariant_holds(seed, n, count):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    g_new = apply_delta(g, random_delta(rng, g, count))
    alpha = 0.5
    mu = (1 - alpha) / alpha
    spec = make_operator("standard", g)
    y = indicator(n, int(rng.integers(n)))
    pr_old = dense_oracle(g, spec, mu, y)
    exact = dense_oracle(g_new, spec, mu, y)
    gaps = []

    def check(state):
        pr_r = dense_oracle(g_new, spec, mu, state.r)
        gaps.append(np.linalg.norm(state.p + pr_r / (1 - alpha) - exact))

    push_update(g, g_new, alpha, pr_old, 1e-13, callback=check)
    assert gaps
    assert max(gaps, default=0.0) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(4, 120), count=st.integers(1, 10))
def test_residual_supports_are_local(seed, n, count):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, connected=bool(seed % 2))
    delta = random_delta(rng, g, count)
    g_new = apply_delta(g, delta)
    spec = make_operator("standard", g)
    pr = dense_oracle(g, spec, 1.0, rng.random(n))
    allowed = set(g.neighborhood(delta.touched)) | set(g_new.neighborhood(delta.touched))
    r = compute_residual(spec, g, g_new, make_diffusion_params(1.0, 2.0), pr)
    assert set(support(r)) <= allowed
    assert set(support(rwr_residual(g, g_new, 0.5, pr))) <= allowed


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(3, 120), mu=st.floats(0.05, 20))
def test_oracle_conserves_mass(seed, n, mu):
    # isolated nodes keep R_ii = 1 and so retain only mu / (1 + mu) of their mass
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    y = rng.random(n)
    assert dense_oracle(g, make_operator("standard", g), mu, y).sum() == pytest.approx(y.sum(), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(4, 60), count=st.integers(1, 6))
def test_residual_sums_to_zero_without_isolation(seed, n, count):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    g_new = apply_delta(g, additions_only(rng, g, count))
    spec = make_operator("standard", g)
    pr = dense_oracle(g, spec, 1.0, rng.random(n))
    assert abs(compute_residual(spec, g, g_new, make_diffusion_params(1.0, 2.0), pr).sum()) < 1e-14


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(4, 200), kind=st.sampled_from(["standard", "dual", "gamma"]))
def test_update_and_scratch_converge_to_oracle(seed, n, kind):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    g_new = apply_delta(g, additions_only(rng, g, 3))
    spec = make_operator(kind, g, sigma=0.5, gamma=0.8)
    bound = make_operator(kind, g_new, sigma=0.5, gamma=0.8)
    if bound.lambda_max > spec.lambda_max:
        spec = bound
    y = indicator(n, 0)
    pr = dense_oracle(g, spec, 1.0, y)
    exact = dense_oracle(g_new, spec, 1.0, y)
    K = 80
    assert relative_error(update_local(g, g_new, spec, 1.0, pr, K, check_bound=False).scores, exact) < 1e-8
    assert relative_error(solve_scratch(g_new, spec, 1.0, y, K), exact) < 1e-8
