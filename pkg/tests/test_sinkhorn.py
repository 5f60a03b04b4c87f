import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gradcheck import check_grads
from metasurf import autodiff as ad
from metasurf.errors import ConfigError, ContractError, NumericalError
from metasurf.sinkhorn import (PointCloud, SinkhornConfig, cost_matrix, sinkhorn_cost,
                               sinkhorn_distance, sinkhorn_to_target)


def brute_force_ot(a: PointCloud, b: PointCloud) -> float:
    C = cost_matrix(a, b)
    n = len(C)
    return min(C[np.arange(n), list(perm)].mean() for perm in itertools.permutations(range(n)))


def test_cost_matrix_examples(rng):
    a = PointCloud.uniform([0.0, 1.0])
    np.testing.assert_array_equal(cost_matrix(a, a), [[0.0, 1.0], [1.0, 0.0]])
    x, y = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
    loop = np.array([[sum((x[i, k] - y[j, k]) ** 2 for k in range(2)) for j in range(4)] for i in range(3)])
    np.testing.assert_allclose(cost_matrix(PointCloud.uniform(x), PointCloud.uniform(y)), loop, atol=1e-14)
    with pytest.raises(ContractError):
        cost_matrix(PointCloud.uniform(x), PointCloud.uniform(rng.normal(size=(2, 3))))


def test_point_cloud_validation():
    with pytest.raises(ContractError):
        PointCloud(np.zeros(2), np.array([0.7, 0.7]))
    with pytest.raises(ContractError):
        PointCloud(np.zeros(2), np.array([1.5, -0.5]))
    with pytest.raises(ConfigError):
        SinkhornConfig(epsilon=0.0)


def test_identical_clouds_small_epsilon(rng):
    a = PointCloud.uniform(rng.normal(size=(5, 2)))
    C = cost_matrix(a, a)
    eps = 1e-3 * np.median(C[C > 0])
    value, _ = sinkhorn_distance(a, a, SinkhornConfig(epsilon=eps, max_iters=1000))
    assert value < 0.05 * C.mean()


@given(pts=hnp.arrays(np.float64, (4, 2), elements=st.floats(-3, 3)),
       t=st.floats(-3, 3), eps=st.sampled_from([0.01, 0.1, 1.0, 10.0]))
def test_forced_coupling_is_exact(pts, t, eps):
    w = np.array([0.1, 0.2, 0.3, 0.4])
    a = PointCloud(pts, w)
    b = PointCloud(np.array([[t, t]]), np.array([1.0]))
    value, plan = sinkhorn_distance(a, b, SinkhornConfig(epsilon=eps))
    exact = float((w * ((pts - t) ** 2).sum(axis=1)).sum())
    assert value == pytest.approx(exact, abs=1e-9)
    np.testing.assert_allclose(plan[:, 0], w, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_matches_permutation_brute_force(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        a = PointCloud.uniform(rng.normal(size=(n, 2)))
        b = PointCloud.uniform(rng.normal(size=(n, 2)))
        C = cost_matrix(a, b)
        cfg = SinkhornConfig(epsilon=0.01 * np.median(C), max_iters=5000, tol=1e-10)
        value, _ = sinkhorn_distance(a, b, cfg)
        exact = brute_force_ot(a, b)
        assert abs(value - exact) <= 0.02 * exact


@given(x=hnp.arrays(np.float64, (3, 1), elements=st.floats(-2, 2)),
       y=hnp.arrays(np.float64, (4, 1), elements=st.floats(-2, 2)))
def test_symmetry_nonnegativity_marginals(x, y):
    a, b = PointCloud.uniform(x), PointCloud.uniform(y)
    cfg = SinkhornConfig(epsilon=0.5, max_iters=500, tol=1e-12)
    v_ab, plan = sinkhorn_distance(a, b, cfg)
    v_ba, _ = sinkhorn_distance(b, a, cfg)
    assert v_ab >= 0
    assert v_ab == pytest.approx(v_ba, abs=1e-9)
    np.testing.assert_allclose(plan.sum(axis=1), a.weights, atol=1e-6)
    np.testing.assert_allclose(plan.sum(axis=0), b.weights, atol=1e-6)


def test_underflow_raises_numerical_error():
    a = PointCloud.uniform([0.0, 1.0])
    b = PointCloud.uniform([100.0, 101.0])
    with pytest.raises(NumericalError, match="epsilon"):
        sinkhorn_distance(a, b, SinkhornConfig(epsilon=1e-3))


def test_to_target_examples(rng):
    ones = ad.Tensor(np.ones((3, 16)))
    assert sinkhorn_to_target(ones, 1.0).item() == 0.0
    assert sinkhorn_to_target(ad.Tensor(np.zeros((2, 16))), 1.0).item() == pytest.approx(1.0)
    with ad.precision(np.float64):
        out = rng.normal(size=(5, 16))
        for t in (-1.0, 1.0):
            got = sinkhorn_to_target(ad.Tensor(out), t).item()
            assert got == pytest.approx(((out - t) ** 2).mean(), abs=1e-9)


def test_to_target_gradient(rng):
    err = check_grads(lambda x: sinkhorn_to_target(x, -1.0), [rng.normal(size=(3, 6))])
    assert err < 1e-3


def test_two_cloud_cost_gradient_uses_fixed_plan(rng):
    cfg = SinkhornConfig(epsilon=0.5, max_iters=500, tol=1e-12)
    x0, y = rng.normal(size=(2, 4)), rng.normal(size=(2, 3))
    with ad.precision(np.float64):
        x = ad.Tensor(x0, requires_grad=True)
        sinkhorn_cost(x, y, cfg).sum().backward()
    for k in range(2):
        a, b = PointCloud.uniform(x0[k]), PointCloud.uniform(y[k])
        value, P = sinkhorn_distance(a, b, cfg)
        expect = 2 * (P * (x0[k][:, None] - y[k][None, :])).sum(axis=1)
        np.testing.assert_allclose(x.grad[k], expect, atol=1e-9)


def test_shape_contract():
    with pytest.raises(ContractError):
        sinkhorn_to_target(ad.Tensor(np.zeros(4)), 1.0)
