import numpy as np
import pytest
from scipy import integrate

from biofilm_fv.numerics.potential import (
    PotentialDomainError,
    PotentialError,
    PotentialParams,
    breakpoint_mismatch,
    breakpoints,
    consumption_truncated,
    consumption_truncated_partials,
    diffusivity_plus,
    entropy_phi,
    entropy_phi_delta,
    entropy_phi_delta_double_prime,
    entropy_phi_delta_prime,
    f,
    f1_delta,
    f1_delta_branches,
    f1_delta_double_prime,
    f1_delta_prime,
    f_delta,
    f_delta_prime,
    f_double_prime,
    f_prime,
    mobility,
    mobility_delta,
    production_truncated,
    production_truncated_partials,
)

DELTAS = (1e-2, 1e-4, 1e-6)
STEPS = np.array([1e-3, 5e-4, 2.5e-4])


def observed_fd_orders(func, derivative, points):
    """Orders of the central difference error over the halving steps."""
    errors = np.array([
        np.abs((func(points + h) - func(points - h)) / (2 * h) - derivative(points))
        for h in STEPS
    ])
    return np.log2(errors[:-1] / errors[1:])


def test_flory_huggins_values():
    assert f(0.5, 1, 0) == pytest.approx(np.log(0.5))
    assert f_prime(0.5, 1, 0.37) == pytest.approx(0.0, abs=1e-14)
    assert f_double_prime(0.5, 1, 0) == pytest.approx(4.0)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.2, 1.5])
def test_flory_huggins_domain(u):
    with pytest.raises(PotentialDomainError):
        f(u, 1, 0)
    with pytest.raises(PotentialDomainError):
        f_prime(u, 1, 0)


def test_potential_params_validation():
    with pytest.raises(PotentialError):
        PotentialParams(N=1, lam=0, delta=0.5)
    with pytest.raises(PotentialError):
        PotentialParams(N=0, lam=0, delta=0.1)


def test_f1_delta_matches_core():
    params = PotentialParams(N=1, lam=0, delta=1e-2)
    assert f1_delta(0.5, params) == pytest.approx(np.log(0.5))
    u = np.linspace(0.02, 0.98, 31)
    np.testing.assert_allclose(f1_delta(u, params), f(u, 1, 0), rtol=1e-14)


def test_f1_delta_second_derivative_vanishes_far_out():
    params = PotentialParams(N=1e3, lam=0.55, delta=1e-3)
    assert f1_delta_double_prime(-3.0, params) == 0.0
    assert f1_delta_double_prime(4.0, params) == 0.0


@pytest.mark.parametrize("delta", DELTAS)
@pytest.mark.parametrize("N", [1.0, 1e3])
def test_f1_delta_is_c2_at_breakpoints(delta, N):
    params = PotentialParams(N=N, lam=0.55, delta=delta)
    assert np.max(breakpoint_mismatch(params)) <= 1e-9


def test_breakpoint_agreement_at_minus_two():
    params = PotentialParams(N=1e3, lam=0.55, delta=1e-3)
    left, right = f1_delta_branches(params)[:2]
    point = np.array(-2.0)
    for order in range(3):
        a, b = float(left[order](point)), float(right[order](point))
        assert a == pytest.approx(b, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("delta", DELTAS)
def test_f1_delta_convex(delta):
    u = np.linspace(-5, 6, 5001)
    for N in (1.0, 1e3):
        params = PotentialParams(N=N, lam=0.55, delta=delta)
        assert np.all(f1_delta_double_prime(u, params) >= 0)


@pytest.mark.parametrize("delta", DELTAS)
def test_mobility_dominance(delta):
    u = np.linspace(-2, 3, 5001)
    assert np.all(mobility_delta(u, delta) >= mobility(u))


def test_mobility_values():
    assert mobility(0.5) == 0.25
    assert mobility(0.0) == mobility(1.0) == 0.0
    assert mobility_delta(-5.0, 0.1) == pytest.approx(0.09)


def test_diffusivity_plus_clamps():
    assert diffusivity_plus(0.3) == pytest.approx(0.7)
    assert diffusivity_plus(-2.0) == 1.0
    assert diffusivity_plus(1.5) == 0.0


def test_f_delta_bounded_below_with_bounded_slope():
    params = PotentialParams(N=1e3, lam=0.55, delta=1e-2)
    u = np.linspace(-10, 10, 20001)
    values = f_delta(u, params)
    slopes = f_delta_prime(u, params)
    assert np.all(np.isfinite(values)) and np.min(values) > -10
    assert np.all(np.isfinite(slopes))
    # affine continuation beyond the cubic pieces
    assert f_delta_prime(-10.0, params) == f_delta_prime(-5.0, params)
    assert f_delta_prime(10.0, params) == f_delta_prime(5.0, params)


def test_f_delta_equals_f_in_core():
    params = PotentialParams(N=1e3, lam=0.55, delta=1e-3)
    u = np.linspace(0.01, 0.99, 50)
    np.testing.assert_allclose(f_delta(u, params), f(u, 1e3, 0.55), rtol=1e-13)


def test_derivatives_have_second_order_differences():
    params = PotentialParams(N=1.0, lam=0.0, delta=1e-2)
    core = np.linspace(0.1, 0.9, 20)
    cubic = np.linspace(-1.9, -1.1, 5)

    orders = observed_fd_orders(
        lambda u: f1_delta(u, params), lambda u: f1_delta_prime(u, params),
        np.concatenate((core, cubic)),
    )
    assert np.min(orders) >= 1.9

    orders = observed_fd_orders(
        lambda u: f1_delta_prime(u, params), lambda u: f1_delta_double_prime(u, params),
        core,
    )
    assert np.min(orders) >= 1.9

    away_from_half = np.concatenate((np.linspace(0.1, 0.4, 10), np.linspace(0.6, 0.9, 10)))
    orders = observed_fd_orders(
        lambda u: entropy_phi_delta(u, 1e-2), lambda u: entropy_phi_delta_prime(u, 1e-2),
        away_from_half,
    )
    assert np.min(orders) >= 1.9


def test_entropy_second_difference_is_inverse_mobility():
    delta, h = 1e-2, 1e-4
    u = np.concatenate((
        np.linspace(-1, -0.01, 15), np.linspace(0.1, 0.9, 15), np.linspace(1.01, 2, 15)
    ))
    second = (
        entropy_phi_delta(u + h, delta) - 2 * entropy_phi_delta(u, delta)
        + entropy_phi_delta(u - h, delta)
    ) / h**2
    np.testing.assert_allclose(second, 1 / mobility_delta(u, delta), rtol=1e-6)
    np.testing.assert_allclose(
        entropy_phi_delta_double_prime(u, delta), 1 / mobility_delta(u, delta)
    )


def test_entropy_values():
    assert entropy_phi(0.5) == pytest.approx(0.0, abs=1e-15)
    assert entropy_phi(0.0) == pytest.approx(np.log(2))
    assert entropy_phi_delta(0.5, 1e-3) == pytest.approx(0.0, abs=1e-15)
    assert entropy_phi_delta_prime(0.5, 1e-3) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(PotentialDomainError):
        entropy_phi(1.5)


@pytest.mark.parametrize("u", [0.9, 1.2, -0.3])
def test_entropy_matches_quadrature(u):
    delta = 1e-3
    # Phi(u) = int_{1/2}^u (u - r) / M_delta(r) dr, written over an ordered interval
    lo, hi = sorted((0.5, u))
    points = [b for b in (delta, 1 - delta) if lo < b < hi]
    value, _ = integrate.quad(
        lambda r: abs(u - r) / mobility_delta(r, delta), lo, hi,
        points=points or None, epsabs=1e-13, epsrel=1e-13, limit=200,
    )
    assert entropy_phi_delta(u, delta) == pytest.approx(value, abs=1e-8)


@pytest.mark.parametrize("delta", DELTAS)
def test_entropy_product_bound(delta):
    u = np.linspace(0, 1, 10001)
    weight = np.clip(u, 0, 1) * np.clip(1 - u, 0, 1)
    assert np.max(np.abs(weight * entropy_phi_delta_prime(u, delta))) <= 2


@pytest.mark.parametrize("delta", DELTAS)
@pytest.mark.parametrize("N", [1.0, 1e3])
def test_potential_cancellation_bound(delta, N):
    params = PotentialParams(N=N, lam=0.55, delta=delta)
    u = np.linspace(0, 1, 10001)
    weight = np.clip(u, 0, 1) * np.clip(1 - u, 0, 1)
    assert np.max(np.abs(weight * f_delta_prime(u, params))) <= 1.0


def test_breakpoints_are_ordered():
    b = breakpoints(1e-3)
    assert list(b) == sorted(b)


def test_truncated_sources():
    assert consumption_truncated(0.5, 0.4) == pytest.approx(-0.2)
    assert consumption_truncated(1.5, -0.2) == 0.0
    assert production_truncated(0.5, 0.5, 0.1) == pytest.approx(0.25 * 0.5 / 0.6)
    assert production_truncated(1.2, 0.5, 0.1) == 0.0

    u, v, h = 0.3, 0.6, 1e-6
    du, dv = consumption_truncated_partials(u, v)
    assert du == pytest.approx(
        (consumption_truncated(u + h, v) - consumption_truncated(u - h, v)) / (2 * h)
    )
    assert dv == pytest.approx(
        (consumption_truncated(u, v + h) - consumption_truncated(u, v - h)) / (2 * h)
    )
    du, dv = production_truncated_partials(u, v, 0.1)
    assert du == pytest.approx(
        (production_truncated(u + h, v, 0.1) - production_truncated(u - h, v, 0.1)) / (2 * h)
    )
    assert dv == pytest.approx(
        (production_truncated(u, v + h, 0.1) - production_truncated(u, v - h, 0.1)) / (2 * h)
    )
