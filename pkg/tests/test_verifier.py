import numpy as np
import pytest

from dgm_stokes.autodiff import forward_extended
from dgm_stokes.network import Architecture, forward, init_params
from dgm_stokes.verifier import fd_input_derivatives, fd_param_gradient


def test_linear_function_has_no_curvature():
    # dyadic point and power-of-two step keep x +- h and f exact, so only the formula is tested
    A = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]])
    jac, d2 = fd_input_derivatives(lambda x: A @ x + 1.0, np.array([0.25, 0.5, 0.375]),
                                   h=2.0 ** -17, h2=2.0 ** -13)
    assert np.max(np.abs(d2)) <= 1e-9
    np.testing.assert_allclose(jac, A, rtol=1e-9)


def test_sine_second_derivative():
    _, d2 = fd_input_derivatives(lambda x: np.sin(np.pi * x), np.array([0.3]), h2=1e-4)
    exact = -np.pi ** 2 * np.sin(0.3 * np.pi)
    assert d2[0, 0] == pytest.approx(exact, rel=1e-5)


def test_network_jacobian_cross_check():
    params = init_params(Architecture.arch(2, dim=3), 2)
    x = np.array([0.2, 0.5, 0.7])
    jac, _ = fd_input_derivatives(lambda pt: forward(params, "velocity", pt), x)
    ev = forward_extended(params, "velocity", x)
    assert np.max(np.abs(jac - ev.jac)) <= 1e-6 * np.max(np.abs(ev.jac))


def test_constant_loss():
    assert np.all(fd_param_gradient(lambda t: 3.0, np.arange(5.0)) == 0)


def test_quadratic_loss():
    theta = np.random.default_rng(0).normal(size=12) * 3
    g = fd_param_gradient(lambda t: float(np.sum(t * t)), theta)
    np.testing.assert_allclose(g, 2 * theta, atol=1e-10 * max(1, np.max(np.abs(theta))))


def test_oracles_do_not_touch_autodiff():
    import dgm_stokes.verifier as v
    source = open(v.__file__).read()
    head = source.split("def check_unbiasedness")[0]
    assert "autodiff" not in head.split('"""', 2)[2]
