import numpy as np
import pytest

from oblique_fem.geometry import oblique_at
from oblique_fem.problems import (BadEpsilonTilde, CordesViolation, ProblemSpec, check_epsilon_tilde,
                                  checkerboard_coefficient, experiment, stabilization_factor)


def test_checkerboard_sign_at_axes():
    A = checkerboard_coefficient(np.array([[0.0, 0.3], [0.2, -0.4], [-0.1, -0.1]]))
    np.testing.assert_array_equal(A[:, 0, 1], [1.0, -1.0, 1.0])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_spot_checks(n):
    p = experiment(n)
    info = p.validate()
    assert info["max_cordes_ratio"] <= 1 / (1 + p.epsilon) + 1e-15


def test_gamma_values():
    x = np.array([[0.3, 0.4], [-0.2, 0.5]])
    np.testing.assert_allclose(experiment(1).gamma(x), 1.0)
    np.testing.assert_allclose(experiment(2).gamma(x), 0.4)


def test_cordes_violation():
    p = experiment(2)
    bad = ProblemSpec("bad", p.curve, p.oblique, p.A, 0.9, u=p.u, grad_u=p.grad_u, hess_u=p.hess_u)
    with pytest.raises(CordesViolation):
        bad.validate()


def test_stabilization_factors():
    assert experiment(1).stab_factor == 1.0
    assert experiment(2).stab_factor == pytest.approx((2 - np.sqrt(0.4)) / 2, abs=1e-15)
    assert stabilization_factor(0.0) == 0.5


def test_epsilon_tilde_admissibility():
    for eps in (0.1, 0.6, 1.0):
        check_epsilon_tilde(eps, 0.0)
        check_epsilon_tilde(eps, eps)
    with pytest.raises(BadEpsilonTilde):
        check_epsilon_tilde(0.6, 1.0)
    with pytest.raises(BadEpsilonTilde):
        check_epsilon_tilde(0.05, 0.99)
    with pytest.raises(BadEpsilonTilde):
        experiment(2).with_epsilon_tilde(1.5)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_exact_solutions(n):
    p = experiment(n)
    c = p.curve
    t = np.linspace(0, c.period, 200, endpoint=False)
    x = c.derivative(t, 0)
    ell, _, _ = oblique_at(p.oblique, c, t)
    # the boundary condition holds with the stated constant
    np.testing.assert_allclose(np.sum(p.grad_u(x) * ell, axis=-1), p.c, atol=1e-12)
    # derivatives against central differences
    rng = np.random.default_rng(n)
    y = rng.uniform(-0.6, 0.6, (5, 2))
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        np.testing.assert_allclose(p.grad_u(y)[:, j], (p.u(y + e) - p.u(y - e)) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(p.hess_u(y)[:, :, j], (p.grad_u(y + e) - p.grad_u(y - e)) / (2 * h),
                                   atol=1e-6)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_exact_solutions_have_zero_mean(n):
    from oblique_fem.solver import _mean_of
    from oblique_fem.mesh import mesh_sequence

    p = experiment(n)
    mesh = mesh_sequence(p.curve, 8 if n == 4 else 6, 3)[-1]
    total, area = _mean_of(mesh, p.u, 14)
    assert abs(total / area) <= 1e-9


def test_compatibility_constants():
    assert experiment(1).c == pytest.approx(-np.sqrt(2.0) * np.pi * np.e, rel=1e-14)
    assert experiment(1).c == pytest.approx(-12.077, abs=1e-3)
    assert experiment(3).c == pytest.approx(2.0 * np.sqrt(2.0) * np.e, rel=1e-14)
    assert experiment(2).c == 0.0 and experiment(4).c == 0.0
    assert experiment(2).chi0 == pytest.approx(2.0)
    assert experiment(4).chi0 == pytest.approx(0.25)


def test_unknown_experiment():
    with pytest.raises(ValueError):
        experiment(7)
