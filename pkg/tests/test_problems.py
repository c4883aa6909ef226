import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantmirror.geometry import Box, Simplex
from quantmirror.problems import (
    DistributedProblem,
    centralized_oracle,
    grid_oracle,
    make_estimation_problem,
    make_l1_problem,
    subgradient_bound_check,
    weighted_median,
)


def test_single_agent_quadratic():
    for dim in (1, 3, 7):
        p = DistributedProblem("quadratic", np.zeros((1, dim)), [1.0], Box.uniform(dim, -1, 1))
        np.testing.assert_array_equal(p.optimizer, np.zeros(dim))
        assert p.optimal_value == 0.0
        assert p.g_bound == pytest.approx(2 * math.sqrt(dim))


def test_identical_targets():
    b = np.array([0.3, -0.4])
    p = DistributedProblem("quadratic", np.tile(b, (4, 1)), [0.5, 1, 1.5, 2], Box.uniform(2, -1, 1))
    np.testing.assert_allclose(p.optimizer, b)
    assert p.optimal_value == pytest.approx(0.0, abs=1e-30)
    q = DistributedProblem("l1", np.tile(b, (4, 1)), np.ones(4), Box.uniform(2, -1, 1))
    assert q.optimal_value == 0.0


def test_thirty_agent_problem_is_weighted_centroid():
    p = make_estimation_problem(30, 10, seed=0)
    centroid = p.coeffs @ p.targets / p.coeffs.sum()
    np.testing.assert_allclose(p.optimizer, centroid)
    assert p.oracle.exact
    # closed form agrees with the generic subgradient oracle
    generic = centralized_oracle(DistributedProblem("quadratic", p.targets, p.coeffs, Simplex(10)), tol=1e-6,
                                 max_iter=2000)
    assert generic.value >= p.optimal_value
    assert np.all((0.5 <= p.coeffs) & (p.coeffs <= 1.5))
    assert np.all(np.abs(p.targets) <= 100)


def test_rejects_nonpositive_coefficients():
    with pytest.raises(ValueError):
        DistributedProblem("quadratic", np.zeros((2, 1)), [1.0, 0.0], Box.uniform(1, -1, 1))
    with pytest.raises(ValueError):
        make_estimation_problem(3, 2, coeff_range=(-1.0, 1.0))


def test_l1_median_1d():
    p = DistributedProblem("l1", np.array([[-1.0], [0.0], [1.0]]), np.ones(3), Box.uniform(1, -1, 1))
    assert p.optimizer.tolist() == [0.0]
    assert p.g_bound == 1.0


def test_weighted_median():
    assert weighted_median([3, 1, 2], [1, 1, 1]) == 2
    assert weighted_median([1, 2, 3], [1, 1, 5]) == 3
    assert weighted_median([1, 2], [1, 1]) == 1


def test_single_point_set():
    X = Box([0.4, 0.2], [0.4, 0.2])
    p = make_estimation_problem(5, 2, seed=1, feasible_set=X, target_box=(-1, 1))
    np.testing.assert_array_equal(p.optimizer, [0.4, 0.2])


def test_l1_oracle_matches_grid_2d():
    p = make_l1_problem(5, 2, seed=7)
    x_grid, f_grid, cell = grid_oracle(p, resolution=400)
    assert abs(p.optimal_value - f_grid) <= np.linalg.norm(cell) * p.g_bound
    assert p.optimal_value <= f_grid + 1e-12


def test_subgradient_oracle_certified_gap():
    p = make_l1_problem(7, 3, seed=2, feasible_set=Simplex(3), target_box=(0, 1))
    res = p.oracle
    assert res.gap >= 0
    pts = Simplex(3).sample(np.random.default_rng(0), 5000)
    assert res.value <= p.objective_many(pts).min() + res.gap + 1e-9


def test_g_bound_attained_at_corner():
    p = make_estimation_problem(4, 3, seed=5)
    assert subgradient_bound_check(p, samples=10_000, seed=1) <= 1.0
    j = int(np.argmax([2 * a * p.feasible_set.farthest_distance(b) for a, b in zip(p.coeffs, p.targets)]))
    corner = p.feasible_set.farthest_point(p.targets[j])
    assert subgradient_bound_check(p, points=corner[None, :]) == pytest.approx(1.0, rel=1e-12)
    assert subgradient_bound_check(make_l1_problem(6, 4, seed=0), samples=2000) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["quadratic", "l1"]))
def test_subgradient_inequality_and_oracle_optimality(seed, kind):
    p = make_estimation_problem(6, 3, seed=seed) if kind == "quadratic" else make_l1_problem(6, 3, seed=seed)
    rng = np.random.default_rng(seed)
    xs, ys = p.feasible_set.sample(rng, 300), p.feasible_set.sample(rng, 300)
    for x, y in zip(xs, ys):
        X = np.broadcast_to(x, p.targets.shape)
        g = p.local_subgradients(X)
        slack = p.local_values(np.broadcast_to(y, p.targets.shape)) - p.local_values(X) - g @ (y - x)
        assert slack.min() >= -1e-9 * (1 + abs(p.local_values(X)).max())
        assert np.linalg.norm(g, axis=1).max() <= p.g_bound * (1 + 1e-12)
    assert p.objective_many(xs).min() >= p.optimal_value - 1e-9


def test_objective_scaling_is_mean():
    p = make_estimation_problem(3, 2, seed=0)
    x = np.array([1.0, -2.0])
    assert p.objective(x) == pytest.approx(np.mean(p.coeffs * np.sum((x - p.targets) ** 2, axis=1)))
    np.testing.assert_allclose(p.objective_many(np.vstack([x, x])), [p.objective(x)] * 2)
