import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from sdsm.functionals import ConstantPhi, GaussianBump
from sdsm.kernels import ConstantCoefficient, ConstantDensity, GaussianKernel, KernelModel, StepDensity, ZeroKernel
from sdsm.measures import AtomMeasure
from sdsm.oracles import (
    MomentEstimate,
    binary_chain_laplace,
    density_bound,
    feller_second_moment,
    first_moment_no_interaction,
    heat_apply,
    laplace_mass,
    lebesgue_window_density_sup,
    sbm_moments,
    second_moment_quadrature,
)

from conftest import gauss_heat


def test_laplace_mass_examples():
    assert laplace_mass(1.3, 0.7, 2.0, 0.0) == 1.0
    assert laplace_mass(1.0, 1.0, 1.0, -1.0) == pytest.approx(math.exp(-2 / 3), rel=1e-15)
    assert math.exp(-2 / 3) == pytest.approx(0.5134, abs=1e-4)


@pytest.mark.parametrize("mass,sigma0,t", [(1.0, 1.0, 0.5), (2.0, 0.3, 1.0), (0.5, 2.0, 0.2)])
def test_laplace_mass_taylor_coefficients(mass, sigma0, t):
    h = 1e-5
    d1 = (laplace_mass(mass, sigma0, t, h) - laplace_mass(mass, sigma0, t, -h)) / (2 * h)
    assert d1 == pytest.approx(mass, rel=1e-4)
    h = 1e-3
    d2 = (laplace_mass(mass, sigma0, t, h) - 2 + laplace_mass(mass, sigma0, t, -h)) / (h * h)
    assert d2 == pytest.approx(feller_second_moment(mass, sigma0, t), rel=1e-4)


def test_laplace_mass_blowup_is_reported():
    with pytest.raises(ValueError, match="diverges"):
        laplace_mass(1.0, 1.0, 1.0, 2.5)


@pytest.mark.parametrize("lam", [-2.0, -0.5, 0.5])
def test_binary_chain_approaches_limit(lam):
    exact = laplace_mass(1.0, 1.0, 0.5, lam)
    errs = [abs(binary_chain_laplace(int(th), th, 1.0, 0.5, lam) - exact) for th in (100.0, 1000.0, 10000.0)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3 * abs(exact)


def test_binary_chain_no_time_is_initial_mass():
    assert binary_chain_laplace(50, 10.0, 1.0, 0.0, -1.0) == pytest.approx(math.exp(-5.0))


def test_heat_apply_closed_form_and_hermite_agree():
    phi = GaussianBump(1.3, 0.2, 0.6)
    y = np.linspace(-2, 2, 9)
    closed = heat_apply(phi, 0.4)(y)
    assert np.allclose(closed, gauss_heat(1.3, 0.2, 0.6, 0.4)(y), rtol=1e-14)
    generic = heat_apply(lambda x: phi(x), 0.4, nodes=120)(y)
    assert np.allclose(generic, closed, atol=1e-10)


def _second_moment_oracle(amp, width, sigma, t):
    """Independent route for delta_0, h = 0, c = 1, constant sigma."""
    first = gauss_heat(amp, 0.0, width, t)(0.0)

    def inner(s):
        v = width * width + s
        sq_amp = amp * amp * width * width / v  # (T_s phi)^2 is a bump of variance v / 2
        return sq_amp * math.sqrt((v / 2) / (v / 2 + t - s))

    return first**2 + sigma * integrate.quad(inner, 0.0, t, epsabs=1e-13)[0]


def test_second_moment_quadrature_matches_closed_route():
    model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), ConstantDensity(0.7))
    val = second_moment_quadrature(model, GaussianBump(1.0, 0.0, 0.8), AtomMeasure([0.0], [1.0]), 0.6)
    assert val == pytest.approx(_second_moment_oracle(1.0, 0.8, 0.7, 0.6), rel=1e-8)


ATOMS = AtomMeasure([-0.3, 0.4], [1.0, 0.5])


def test_second_moment_without_branching_is_squared_mean():
    model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), ConstantDensity(0.0))
    phi = GaussianBump(1.0, 0.1, 0.6)
    mean = sum(w * gauss_heat(1.0, 0.1, 0.6, 0.4)(x) for x, w in zip(ATOMS.locations, ATOMS.weights))
    assert second_moment_quadrature(model, phi, ATOMS, 0.4) == pytest.approx(mean**2, rel=1e-14)


def test_second_moment_of_constant_is_feller():
    model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), ConstantDensity(0.8))
    val = second_moment_quadrature(model, ConstantPhi(1.0), ATOMS, 0.7)
    assert val == pytest.approx(feller_second_moment(1.5, 0.8, 0.7), rel=1e-10)


def test_oracles_are_deterministic():
    model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), StepDensity(0.5, 1.5, 0.0))
    a = second_moment_quadrature(model, GaussianBump(1.0, 0.2, 0.7), ATOMS, 0.5)
    b = second_moment_quadrature(model, GaussianBump(1.0, 0.2, 0.7), ATOMS, 0.5)
    assert a == b
    assert sbm_moments(1.0, 1.0, GaussianBump(), ATOMS, 0.3) == sbm_moments(1.0, 1.0, GaussianBump(), ATOMS, 0.3)


def test_second_moment_quadrature_mirror_symmetry():
    model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), StepDensity(0.5, 1.5, 0.0))
    mirror = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), StepDensity(1.5, 0.5, 0.0))
    mu = AtomMeasure([-0.3, 0.4], [1.0, 0.5])
    mu_m = AtomMeasure([0.3, -0.4], [1.0, 0.5])
    a = second_moment_quadrature(model, GaussianBump(1.0, 0.2, 0.7), mu, 0.5)
    b = second_moment_quadrature(mirror, GaussianBump(1.0, -0.2, 0.7), mu_m, 0.5)
    assert a == pytest.approx(b, rel=1e-9)
    assert a == second_moment_quadrature(model, GaussianBump(1.0, 0.2, 0.7), mu, 0.5)


def test_second_moment_needs_independent_particles():
    model = KernelModel(GaussianKernel(), ConstantCoefficient(1.0), ConstantDensity(1.0))
    with pytest.raises(ValueError, match="h = 0"):
        second_moment_quadrature(model, GaussianBump(), AtomMeasure([0.0], [1.0]), 0.5)


def test_sbm_moments_first_is_heat():
    phi = GaussianBump(1.0, 0.0, 0.5)
    first, second = sbm_moments(2.0, 1.0, phi, AtomMeasure([0.0], [1.0]), 0.25)
    assert first == pytest.approx(gauss_heat(1.0, 0.0, 0.5, 0.5)(0.0), rel=1e-14)
    assert second > first**2
    assert first_moment_no_interaction(2.0, phi, AtomMeasure([0.0], [1.0]), 0.25) == first


def test_sbm_moments_limits():
    phi = GaussianBump(1.0, 0.3, 0.5)
    pair = ATOMS.integrate(phi)
    assert sbm_moments(1.5, 2.0, phi, ATOMS, 0.0) == (pair, pair**2)
    first, second = sbm_moments(1.5, 2.0, ConstantPhi(1.0), ATOMS, 0.4)
    assert first == 1.5
    assert second == pytest.approx(1.5**2 + 2.0 * 0.4 * 1.5, rel=1e-10)


def test_sbm_first_moment_gaussian_algebra():
    first, _ = sbm_moments(1.5, 1.0, GaussianBump(2.0, 0.3, 0.5), ATOMS, 0.4)
    closed = sum(w * gauss_heat(2.0, 0.3, 0.5, 1.5 * 0.4)(x) for x, w in zip(ATOMS.locations, ATOMS.weights))
    assert abs(first - closed) <= 1e-10


def test_density_bound_scaling():
    assert density_bound(2.0, 0.5, 0.3, 0.7) == pytest.approx(2 * density_bound(1.0, 0.5, 0.3, 0.7), rel=1e-15)
    far = density_bound(1.0, 1.0, 0.3, 1e12)
    assert far == pytest.approx(math.sqrt(2 * math.pi * 0.3), rel=1e-5)


def test_density_bound_example():
    assert density_bound(1.0, 1.0, 1.0, 1.0) == pytest.approx(2.0 + math.sqrt(2 * math.pi))
    with pytest.raises(ValueError, match="t must be positive"):
        density_bound(1.0, 1.0, 1.0, 0.0)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_lebesgue_window_below_bound(t):
    sup = lebesgue_window_density_sup(1.0, t)
    # direct check at the midpoint against the normal cdf
    sd = math.sqrt(t)
    direct = 0.5 * (math.erf(0.5 / sd / math.sqrt(2)) - math.erf(-0.5 / sd / math.sqrt(2)))
    assert sup == pytest.approx(direct, rel=1e-14)
    assert sup <= density_bound(1.0, 1.0, 1.0, t)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=50))
def test_moment_estimate_from_samples(xs):
    est = MomentEstimate.from_samples(xs)
    assert est.value == pytest.approx(np.mean(xs), abs=1e-12)
    assert est.n == len(xs)
    assert est.z_against(est) == 0.0


def test_z_against_zero_error():
    est = MomentEstimate(1.0, 0.0, 3)
    assert est.z_against(1.0) == 0.0
    assert est.z_against(0.5) == math.inf
