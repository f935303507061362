import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdsm import _engine
from sdsm.kernels import (
    AffineClampedCoefficient,
    BinnedDensity,
    BoxKernel,
    BumpDensity,
    ConstantCoefficient,
    ConstantDensity,
    FactorizationError,
    GaussianKernel,
    KernelModel,
    PiecewiseDensity,
    QuadratureError,
    StepDensity,
    TabulatedDensity,
    TabulatedKernel,
    ZeroKernel,
    jittered_cholesky,
    model_from_spec,
    rho_eval,
    rho_quadrature,
    step_covariance,
)

from conftest import brute_rho

ONE = ConstantCoefficient(1.0)
ZERO_C = ConstantCoefficient(0.0)
SIG1 = ConstantDensity(1.0)

TRIANGLE = TabulatedKernel([-1.0, 0.0, 0.5, 1.5], [0.0, 1.0, 0.8, 0.0])

BUILTIN_H = {
    "zero": ZeroKernel(),
    "gaussian": GaussianKernel(1.3, 0.7),
    "box": BoxKernel(-0.5, 1.0, 0.8),
    "tabulated": TRIANGLE,
}


def model(h, c=ONE, sigma=SIG1):
    return KernelModel(h, c, sigma)


# -- rho -------------------------------------------------------------------


def test_rho_zero_kernel():
    assert rho_eval(model(ZeroKernel()), 1.7) == 0.0


def test_rho_box_overlap_length():
    h = BoxKernel(0.0, 1.0, 1.0)
    assert brute_rho(h, 0.25) == pytest.approx(0.75, abs=1e-3)  # jumps limit the trapezoid
    assert rho_eval(model(h), 0.25) == pytest.approx(0.75, abs=1e-15)


def test_rho_gaussian_closed_form_at_two():
    h = GaussianKernel(1.0, 1.0)
    expected = math.sqrt(math.pi) * math.exp(-1.0)
    assert expected == pytest.approx(0.6520493, abs=1e-7)
    assert brute_rho(h, 2.0) == pytest.approx(expected, abs=1e-9)
    assert rho_eval(model(h), 2.0) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("h", [GaussianKernel(1.3, 0.7), BoxKernel(-0.5, 1.0, 0.8)], ids=["gaussian", "box"])
def test_closed_form_matches_quadrature(h):
    for x in np.linspace(-3.0, 3.0, 101):
        assert h.rho(x) == pytest.approx(rho_quadrature(h, x), abs=1e-8)


def test_tabulated_rho_matches_dense_oracle():
    m = model(TRIANGLE)
    for x in (-2.0, -0.8, 0.0, 0.3, 1.1, 2.4, 3.0):
        assert m.rho(x) == pytest.approx(brute_rho(TRIANGLE, x, -4.0, 4.0, 400001), abs=1e-6)


def test_quadrature_failure_names_x():
    h = TabulatedKernel(np.linspace(0, 1, 5), [0.0, 1.0, 0.0, 1.0, 0.0])
    with pytest.raises(QuadratureError, match=r"x=0\.1"):
        rho_quadrature(h, 0.1, abs_tol=1e-30, max_depth=3)


@pytest.mark.parametrize("name", sorted(BUILTIN_H))
def test_rho_symmetric_and_bounded(name):
    m = model(BUILTIN_H[name])
    x = np.linspace(-10.0, 10.0, 1001)
    r, r_neg = m.rho(x), m.rho(-x)
    assert np.max(np.abs(r - r_neg)) <= 1e-9
    assert np.all(np.abs(r) <= m.rho0 + 1e-12)


@pytest.mark.parametrize("name", sorted(BUILTIN_H))
def test_a_minus_c_squared_is_rho0(name):
    c = AffineClampedCoefficient(slope=0.4, floor=0.2, intercept=1.0, ceiling=3.0)
    m = model(BUILTIN_H[name], c)
    x = np.linspace(-6.0, 6.0, 97)
    assert np.allclose(m.a(x) - c(x) ** 2, m.rho0, rtol=0, atol=1e-14)
    assert np.all(m.a(x) >= m.rho0)


def test_smoothness_flag():
    assert model(GaussianKernel()).smooth
    assert not model(BoxKernel(0.0, 1.0, 1.0)).smooth
    assert not model(TRIANGLE).smooth


def test_rescaled_model_coefficients():
    base = KernelModel(GaussianKernel(1.3, 0.7), AffineClampedCoefficient(0.5, 0.5, 1.0, 2.0), BumpDensity(0.5, 1.0, 0.3, 1.0))
    s = 3.0
    r = base.rescaled(s)
    x = np.linspace(-2, 2, 41)
    assert np.allclose(r.rho(x), base.rho(s * x), rtol=1e-13, atol=0)
    assert np.allclose(r.c(x), base.c(s * x))
    assert np.allclose(r.sigma(x), base.sigma(s * x))


def test_model_spec_round_trip():
    m = KernelModel(BoxKernel(-1, 1, 2), AffineClampedCoefficient(0.3, 0.5, 1.0, 2.0), StepDensity(1.0, 2.0, 0.5))
    again = model_from_spec(m.spec())
    assert again.spec() == m.spec()
    with pytest.raises(ValueError, match="unknown h kind"):
        model_from_spec({"h": {"kind": "cauchy"}})


def test_coefficient_validation():
    with pytest.raises(ValueError):
        AffineClampedCoefficient(slope=1.0, floor=2.0, ceiling=1.0)
    with pytest.raises(ValueError):
        ConstantDensity(-1.0)
    assert AffineClampedCoefficient(1.0, 0.5).lower_bound() == 0.5
    assert AffineClampedCoefficient(1.0, -0.5, 0.0, 2.0).lower_bound() == 0.0


# -- step covariance ---------------------------------------------------------


def test_single_particle_unit_diffusion():
    cov = step_covariance(model(ZeroKernel()), [0.3], 0.01)
    assert np.array_equal(cov.matrix, [[0.01]])


def test_coincident_particles_common_noise_only():
    m = model(GaussianKernel(1.0, 1.0), ZERO_C)
    cov = step_covariance(m, [0.4, 0.4], 0.02)
    expected = 0.02 * m.rho0 * np.ones((2, 2))
    assert np.allclose(cov.matrix, expected, rtol=1e-15)
    assert np.linalg.matrix_rank(cov.matrix) == 1
    assert np.allclose(cov.factor @ cov.factor.T, cov.matrix, atol=1e-8 * m.rho0 * 0.02)


def test_off_diagonal_at_distance_two():
    cov = step_covariance(model(GaussianKernel(1.0, 1.0), ZERO_C), [0.0, 2.0], 0.1)
    assert cov.matrix[0, 1] == pytest.approx(math.sqrt(math.pi) * math.exp(-1.0) * 0.1, rel=1e-14)


@pytest.mark.parametrize("name", sorted(BUILTIN_H))
def test_gram_factorization_needs_little_jitter(name):
    rng = np.random.default_rng(11)
    m = model(BUILTIN_H[name], ZERO_C)
    scale = max(m.rho0, 1e-300)
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        x = rng.uniform(-3.0, 3.0, n)
        cov = step_covariance(m, x, 1.0)
        assert cov.jitter <= 1e-9 * m.rho0
        if m.rho0 > 0:
            assert np.allclose(cov.factor @ cov.factor.T, cov.matrix, atol=2e-9 * scale)


def test_indefinite_matrix_fails_loudly():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(FactorizationError) as info:
        jittered_cholesky(bad, 1.0)
    assert info.value.min_eigenvalue == pytest.approx(-1.0)
    assert "smallest eigenvalue" in str(info.value)


def test_step_covariance_rejects_bad_input():
    with pytest.raises(ValueError):
        step_covariance(model(ZeroKernel()), [np.nan], 0.1)
    with pytest.raises(ValueError):
        step_covariance(model(ZeroKernel()), [0.0], 0.0)


# -- compiled evaluators against the numpy definitions ---------------------------

SIGMAS = [
    ConstantDensity(0.7),
    BumpDensity(0.5, 1.0, 0.2, 0.8, offset=0.25),
    StepDensity(0.3, 1.7, -0.4),
    TabulatedDensity([-1.0, 0.0, 2.0], [0.5, 2.0, 1.0]),
    BinnedDensity(-1.0, 0.25, [1.0, 0.0, 3.0, 2.0]),
    PiecewiseDensity([-1.0, 0.5], [0.2, 1.0, 0.4]),
]


@given(st.floats(-12.0, 12.0))
def test_engine_rho_matches_model(x):
    for h in BUILTIN_H.values():
        m = model(h)
        rk, rp = m.engine_args[:2]
        assert _engine.rho_val(rk, rp, x) == pytest.approx(float(m.rho(x)), abs=1e-13)


@given(st.floats(-12.0, 12.0))
def test_engine_c_and_sigma_match_model(x):
    for c in (ConstantCoefficient(1.3), AffineClampedCoefficient(0.7, 0.2, 0.5, 2.0)):
        ck, cp = c.params()
        assert _engine.c_val(ck, cp, x) == float(c(x))
    for s in SIGMAS:
        sk, sp = s.params()
        assert _engine.sigma_val(sk, sp, s.offset, x) == pytest.approx(float(s(x)), abs=1e-14)


def test_engine_sigma_bin_edges_right_closed():
    s = BinnedDensity(-1.0, 0.5, [1.0, 2.0])
    sk, sp = s.params()
    for x in (-1.0, -0.5, 0.0, 0.25):
        assert _engine.sigma_val(sk, sp, 0.0, x) == float(s(x))
    assert float(s(-0.5)) == 1.0 and float(s(-1.0)) == 0.0


# -- common-noise factorizations ------------------------------------------------


def test_gaussian_grid_gram_identity():
    """The grid sum of h(y - x_i) h(y - x_j) reproduces rho to machine precision."""
    amp, beta = 1.3, 0.25
    h = GaussianKernel(amp, beta)
    x = np.array([-0.91, -0.3, 0.0, 0.0001, 0.42, 1.7])
    delta = beta / 2
    y = delta * np.arange(math.floor((x.min() - 9 * beta) / delta), math.ceil((x.max() + 9 * beta) / delta) + 1)
    feats = h(y[None, :] - x[:, None]) * math.sqrt(delta)
    gram = feats @ feats.T
    assert np.allclose(gram, h.rho(x[:, None] - x[None, :]), rtol=0, atol=1e-14 * h.rho(0.0))


def test_pivoted_factor_reproduces_tabulated_gram():
    m = model(TRIANGLE)
    rk, rp = m.engine_args[:2]
    x = np.array([0.0, 0.0, 0.1, 0.5, 2.0, -0.7, 5.0])
    cols, rank, ok = _engine.pivoted_factor(rk, rp, x, x.size)
    assert ok
    target = np.array([[_engine.rho_val(rk, rp, a - b) for b in x] for a in x])
    assert np.allclose(cols[:, :rank] @ cols[:, :rank].T, target, atol=x.size * 1e-13 * m.rho0)
    assert rank < x.size  # the duplicated point costs no extra column


@pytest.mark.parametrize("name", ["gaussian", "box", "tabulated"])
def test_common_increment_covariance(name):
    m = model(BUILTIN_H[name])
    rk, rp, hp = m.engine_args[:3]
    x = np.array([-0.6, 0.0, 0.05, 0.9])
    dt = 0.01
    rng = np.random.default_rng(5)
    out = np.empty(x.size)
    draws = np.empty((40000, x.size))
    for r in range(draws.shape[0]):
        assert _engine.common_increment(rk, rp, hp, x, x.size, dt, rng, out) == _engine.OK
        draws[r] = out
    target = m.rho(x[:, None] - x[None, :]) * dt
    from conftest import sample_cov_z

    assert np.max(np.abs(sample_cov_z(draws, target))) < 5.0
