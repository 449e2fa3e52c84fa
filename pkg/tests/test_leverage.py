import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levneuron.leverage import (
    DesignMatrix,
    Sketch,
    apply_sketch,
    bernstein_epsilon,
    bernstein_sample_size,
    draw_sketch,
    embedding_distortion,
    leverage_scores,
    lipschitz_distortion_check,
    sampled_direction_distortion,
    sampling_plan,
    uniform_plan,
)
from levneuron.neuron import make_spec


def explicit_leverage(X):
    # oracle: x_i^T (X^T X)^{-1} x_i, full column rank only
    G = np.linalg.inv(X.T @ X)
    return np.einsum("ij,jk,ik->i", X, G, X)


def test_identity_scores():
    s = leverage_scores(np.eye(2))
    np.testing.assert_allclose(s.tau, [1.0, 1.0], atol=1e-15)


def test_three_row_example():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    s = leverage_scores(X)
    np.testing.assert_allclose(s.tau, [2 / 3, 2 / 3, 2 / 3], atol=1e-14)
    assert s.total == pytest.approx(2.0, abs=1e-12)
    assert s.rank == 2


def test_matches_explicit_formula():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((200, 7))
    np.testing.assert_allclose(leverage_scores(X).tau, explicit_leverage(X), rtol=1e-8, atol=1e-12)


def test_rank_deficient_and_zero_row():
    rng = np.random.default_rng(4)
    B = rng.standard_normal((60, 3))
    X = B @ rng.standard_normal((3, 6))
    X[5] = 0.0
    s = leverage_scores(X)
    assert s.rank == 3
    assert s.total == pytest.approx(3.0, rel=1e-8)
    assert s.tau[5] == 0.0
    # pseudoinverse definition
    np.testing.assert_allclose(s.tau, np.einsum("ij,jk,ik->i", X, np.linalg.pinv(X.T @ X), X), atol=1e-8)


def test_design_matrix_validation():
    with pytest.raises(ValueError):
        DesignMatrix(np.ones((2, 3)))
    with pytest.raises(ValueError):
        DesignMatrix(np.array([[1.0], [np.nan]]))


def test_ortho_factor_spans_columns():
    rng = np.random.default_rng(5)
    X = DesignMatrix(rng.standard_normal((50, 4)) * [1, 10, 100, 1e3])
    Q = X.ortho_factor
    np.testing.assert_allclose(Q.T @ Q, np.eye(4), atol=1e-12)
    resid = X.entries - Q @ (Q.T @ X.entries)
    assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(X.entries)


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(5, 80),
    d=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_scores_sum_to_rank_and_are_invariant(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    R = rng.standard_normal((d, d)) + 3 * np.eye(d)
    s = leverage_scores(X)
    assert np.all((s.tau >= 0) & (s.tau <= 1))
    assert abs(s.total - s.rank) <= 1e-8 * s.rank
    np.testing.assert_allclose(leverage_scores(X @ R).tau, s.tau, atol=1e-8)


def test_plans():
    s = leverage_scores(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    np.testing.assert_allclose(sampling_plan(s).p, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(uniform_plan(4).p, [0.25] * 4)
    from levneuron.leverage import LeverageScores

    p = sampling_plan(LeverageScores(np.array([1.0, 0.5, 0.5]), 2.0, 2)).p
    np.testing.assert_allclose(p, [0.5, 0.25, 0.25])
    with pytest.raises(ValueError):
        sampling_plan(LeverageScores(np.zeros(3), 0.0, 0))


def test_sketch_weights_and_determinism():
    sk = draw_sketch(uniform_plan(4), 2, seed=1)
    np.testing.assert_allclose(sk.weights, [np.sqrt(2)] * 2)
    from levneuron.leverage import SamplingPlan

    sk = draw_sketch(SamplingPlan(np.array([1.0, 0.0, 0.0]), "leverage"), 3, seed=9)
    assert sk.indices.tolist() == [0, 0, 0]
    np.testing.assert_allclose(sk.weights, [1 / np.sqrt(3)] * 3)
    plan = sampling_plan(leverage_scores(np.random.default_rng(0).standard_normal((30, 3))))
    a, b = draw_sketch(plan, 17, 123), draw_sketch(plan, 17, 123)
    assert a.indices.tobytes() == b.indices.tobytes()
    assert a.weights.tobytes() == b.weights.tobytes()


def test_apply_sketch():
    sk = Sketch(indices=np.array([1]), weights=np.array([np.sqrt(2)]), n=3)
    np.testing.assert_allclose(apply_sketch(sk, [0.0, 5.0, 0.0]), [5 * np.sqrt(2)])
    np.testing.assert_array_equal(apply_sketch(sk, np.zeros(3)), [0.0])
    with pytest.raises(ValueError):
        apply_sketch(sk, np.zeros(4))


def test_unbiasedness_monte_carlo():
    rng = np.random.default_rng(11)
    z = rng.standard_normal(100)
    plan = sampling_plan(leverage_scores(rng.standard_normal((100, 4))))
    # 10^4 sketches of m=10 drawn in one batch
    idx = rng.choice(100, size=(10_000, 10), p=plan.p)
    vals = np.sum(z[idx] ** 2 / (10 * plan.p[idx]), axis=1)
    assert abs(vals.mean() / (z @ z) - 1) < 0.02


def test_distortion_identity_sketch_is_zero():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 3))
    sk = Sketch(indices=np.arange(40), weights=np.ones(40), n=40)
    assert embedding_distortion(X, sk) < 1e-12


def test_random_directions_bound_exact_distortion():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((300, 4))
    sk = draw_sketch(sampling_plan(leverage_scores(X)), 60, seed=5)
    exact = embedding_distortion(X, sk)
    lower = sampled_direction_distortion(X, sk, trials=500, seed=1)
    assert lower <= exact + 1e-12
    assert lower > 0.3 * exact


def test_distortion_shrinks_with_m():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((1000, 5))
    plan = sampling_plan(leverage_scores(X))
    med = [
        np.median([embedding_distortion(X, draw_sketch(plan, m, s)) for s in range(30)])
        for m in (50, 200, 800)
    ]
    assert med[0] > med[1] > med[2]


def test_bernstein_eps_inversion():
    m = bernstein_sample_size(3, 0.5)
    assert m == int(np.ceil(3 * 3 * np.log(40) / 0.25))
    assert bernstein_epsilon(3, m) <= 0.5


def test_lipschitz_check_zero_for_equal_weights():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 3))
    sk = draw_sketch(sampling_plan(leverage_scores(X)), 20, 0)
    w = rng.standard_normal(3)
    lhs, rhs = lipschitz_distortion_check(X, w, w, make_spec("relu"), sk)
    assert lhs == 0.0 and rhs == 0.0


def test_lipschitz_check_rejects_exp():
    X = np.eye(3)
    sk = draw_sketch(uniform_plan(3), 2, 0)
    with pytest.raises(ValueError):
        lipschitz_distortion_check(X, np.zeros(3), np.ones(3), make_spec("exp"), sk)
