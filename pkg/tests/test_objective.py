import numpy as np
import pytest

from dgm_stokes.errors import NumericError
from dgm_stokes.network import Architecture, init_params, zero_params
from dgm_stokes.objective import (batch_objective, objective_gradient, paired_objective,
                                  point_gradient, point_loss)
from dgm_stokes.problem import StokesProblem, make_problem
from dgm_stokes.sampler import sample_dataset
from dgm_stokes.verifier import (check_unbiasedness, fd_field_terms, fd_objective,
                                 fd_param_gradient, network_field)


def zeros_like_points(x):
    return np.zeros_like(np.atleast_2d(x))


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


@pytest.fixture
def stokes2d():
    return make_problem("stokes2d")


@pytest.fixture
def batch():
    ds = sample_dataset(2, 50, 0.2, seed=7)
    return ds.interior[:10], ds.boundary[:10]


class TestPointLoss:
    def test_zero_network_zero_data(self):
        problem = StokesProblem(0.0, 1.0, 2, zeros_like_points, zeros_like_points)
        p = zero_params(Architecture.arch(2))
        assert point_loss(p, problem, np.array([0.3, 0.4]), np.array([0.0, 0.5])) == 0.0

    def test_zero_network_manufactured(self, stokes2d):
        p = zero_params(Architecture.arch(1))
        x = np.array([0.3, 0.4])
        f = stokes2d.forcing(x)
        assert point_loss(p, stokes2d, x, np.array([1.0, 0.2])) == pytest.approx(f @ f, rel=1e-14)

    @pytest.mark.parametrize("name", ["stokes2d", "general_stokes2d"])
    def test_matches_fd_recomputation(self, name):
        problem = make_problem(name)
        p = init_params(Architecture.arch(1), 3)
        x, r = np.array([0.31, 0.62]), np.array([0.44, 1.0])
        expected = sum(fd_field_terms(network_field(p), problem, x, r))
        assert point_loss(p, problem, x, r) == pytest.approx(expected, rel=1e-5)

    def test_non_finite_output(self, stokes2d):
        p = init_params(Architecture.arch(1), 0)
        p.theta1[-1] = np.inf
        with pytest.raises(NumericError):
            point_loss(p, stokes2d, np.array([0.3, 0.3]), np.array([0.0, 0.3]))


class TestBatchObjective:
    def test_size_one_equals_point_loss(self, stokes2d):
        p = init_params(Architecture.arch(2), 1)
        x, r = np.array([0.2, 0.9]), np.array([1.0, 0.1])
        lb = batch_objective(p, stokes2d, x[None], r[None])
        assert lb.total == point_loss(p, stokes2d, x, r)

    def test_duplicated_batch(self, stokes2d, batch):
        p = init_params(Architecture.arch(2), 1)
        xi, xb = batch
        a = batch_objective(p, stokes2d, xi, xb)
        b = batch_objective(p, stokes2d, np.repeat(xi, 2, axis=0), np.repeat(xb, 2, axis=0))
        np.testing.assert_allclose([a.residual, a.divergence, a.boundary],
                                   [b.residual, b.divergence, b.boundary], rtol=1e-14)

    def test_total_is_sum_and_nonnegative(self, stokes2d, batch):
        lb = batch_objective(init_params(Architecture.arch(3), 4), stokes2d, *batch)
        assert min(lb.residual, lb.divergence, lb.boundary) >= 0
        assert abs(lb.total - (lb.residual + lb.divergence + lb.boundary)) <= 1e-14

    @pytest.mark.parametrize("name", ["stokes2d", "general_stokes3d"])
    def test_exact_surrogate_vanishes(self, name):
        problem = make_problem(name)
        ds = sample_dataset(problem.dim, 100, 0.2, seed=2)
        terms = fd_objective(problem.exact, problem, ds.interior[:30], ds.boundary)
        assert sum(terms) <= 1e-8

    def test_paired_equals_split_for_equal_counts(self, stokes2d, batch):
        p = init_params(Architecture.arch(2), 5)
        assert paired_objective(p, stokes2d, *batch) == pytest.approx(
            batch_objective(p, stokes2d, *batch).total, rel=1e-13)

    def test_empty_batch(self, stokes2d):
        with pytest.raises(ValueError):
            batch_objective(init_params(Architecture.arch(1), 0), stokes2d, np.zeros((0, 2)),
                            np.zeros((3, 2)))

    def test_pressure_gauge(self, stokes2d, batch):
        p = init_params(Architecture.arch(2), 6)
        q = p.copy()
        q.theta2[-1] += 3.7  # output bias of the pressure net
        a = batch_objective(p, stokes2d, *batch)
        b = batch_objective(q, stokes2d, *batch)
        assert (a.residual, a.divergence, a.boundary) == (b.residual, b.divergence, b.boundary)


class TestObjectiveGradient:
    def test_zero_loss_configuration(self):
        problem = StokesProblem(0.0, 1.0, 2, zeros_like_points, zeros_like_points)
        p = zero_params(Architecture.arch(2))
        ds = sample_dataset(2, 30, 0.2, seed=0)
        g = objective_gradient(p, problem, ds.interior, ds.boundary)
        assert np.all(g == 0)

    @pytest.mark.parametrize("name", ["stokes2d", "general_stokes2d", "stokes3d"])
    def test_matches_fd(self, name, batch):
        problem = make_problem(name)
        p = init_params(Architecture.arch(1, dim=problem.dim), 8)
        ds = sample_dataset(problem.dim, 50, 0.2, seed=7)
        xi, xb = ds.interior[:10], ds.boundary[:10]
        g = objective_gradient(p, problem, xi, xb)
        fd = fd_param_gradient(lambda t: batch_objective(p.with_flat(t), problem, xi, xb).total,
                               p.flat())
        assert rel_err(g, fd) <= 1e-5

    def test_mean_of_single_sample_gradients(self, stokes2d, batch):
        p = init_params(Architecture.arch(2), 9)
        xi, xb = batch
        full = objective_gradient(p, stokes2d, xi, xb)
        mean = np.mean([point_gradient(p, stokes2d, x, r) for x, r in zip(xi, xb)], axis=0)
        assert np.max(np.abs(mean - full)) <= 1e-12 * np.max(np.abs(full))


class TestUnbiasedness:
    def test_single_pair(self, stokes2d):
        ds = sample_dataset(2, 2, 0.5, seed=0)
        assert check_unbiasedness(init_params(Architecture.arch(1), 0), stokes2d, ds).passed

    def test_duplicated_pairs(self, stokes2d):
        ds = sample_dataset(2, 2, 0.5, seed=0)
        dup = type(ds)(np.repeat(ds.interior, 5, axis=0), np.repeat(ds.boundary, 5, axis=0))
        p = init_params(Architecture.arch(1), 0)
        single = objective_gradient(p, stokes2d, ds.interior, ds.boundary)
        many = objective_gradient(p, stokes2d, dup.interior, dup.boundary)
        np.testing.assert_allclose(many, single, rtol=1e-13, atol=1e-15)
        assert check_unbiasedness(p, stokes2d, dup).passed

    def test_ds1_sized(self, stokes2d):
        ds = sample_dataset(2, 1000, 0.2, seed=1)
        report = check_unbiasedness(init_params(Architecture.arch(1), 3), stokes2d, ds)
        assert report.passed, str(report)


def test_precomputed_data_matches(stokes2d, batch):
    from dgm_stokes.objective import loss_and_gradient
    p = init_params(Architecture.arch(2), 11)
    xi, xb = batch
    a_loss, a_grad = loss_and_gradient(p, stokes2d, xi, xb)
    data = (stokes2d.forcing(xi), stokes2d.boundary(xb))
    b_loss, b_grad = loss_and_gradient(p, stokes2d, xi, xb, data=data)
    assert a_loss == b_loss and np.array_equal(a_grad, b_grad)
