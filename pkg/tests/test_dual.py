import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from sdsm.dual import (
    CoalescentPath,
    dual_moment_bound,
    dual_replicate,
    estimate_dual_moment,
    expand_points,
    sample_coalescent,
)
from sdsm.functionals import CallableF, ConstantF, GaussianProduct
from sdsm.kernels import ConstantCoefficient, ConstantDensity, GaussianKernel, KernelModel, ZeroKernel
from sdsm.measures import AtomMeasure

from conftest import gauss_heat

DELTA0 = AtomMeasure([0.0], [1.0])


def free_model(sigma=1.0):
    return KernelModel(ZeroKernel(), ConstantCoefficient(1.0), ConstantDensity(sigma))


def test_expand_single_point():
    out, dup = expand_points([7.0], (1, 2))
    assert out.tolist() == [7.0, 7.0] and dup == 7.0


@pytest.mark.parametrize("pair", [(1, 3), (3, 1)])
def test_expand_keeps_order_of_the_rest(pair):
    out, dup = expand_points([10.0, 20.0], pair)
    assert out.tolist() == [20.0, 10.0, 20.0]
    assert dup == 20.0


def test_expand_rejects_bad_pair():
    with pytest.raises(IndexError):
        expand_points([1.0, 2.0], (2, 2))
    with pytest.raises(IndexError):
        expand_points([1.0, 2.0], (1, 4))


def test_single_level_never_jumps():
    rng = np.random.default_rng(5)
    for t in (0.1, 10.0, 1e6):
        path = sample_coalescent(1, t, rng)
        assert path.n_jumps == 0 and path.segments() == [(0.0, t, 1)]
        assert path.exp_weight() == 1.0


def test_coalescent_level_one_mean_time():
    rng = np.random.default_rng(0)
    hits = []
    for _ in range(10**5):
        path = sample_coalescent(3, 1e6, rng)
        assert path.terminal_level == 1
        hits.append(path.jump_times[-1])
    hits = np.array(hits)
    # 1/3 + 1/1
    assert abs(hits.mean() - 4 / 3) < 4 * hits.std() / math.sqrt(hits.size)


def test_coalescent_jump_probability_for_two():
    rng = np.random.default_rng(1)
    t = 0.7
    jumped = np.array([sample_coalescent(2, t, rng).n_jumps for _ in range(20000)])
    p = 1 - math.exp(-t)
    assert abs(jumped.mean() - p) < 4 * math.sqrt(p * (1 - p) / jumped.size)


def test_coalescent_pairs_are_uniform():
    rng = np.random.default_rng(2)
    firsts = [sample_coalescent(4, 1e6, rng).pairs[0] for _ in range(12000)]
    counts = {}
    for pr in firsts:
        counts[pr] = counts.get(pr, 0) + 1
    assert len(counts) == 12
    assert max(counts.values()) < 1000 + 4 * math.sqrt(1000)


@given(st.integers(1, 6), st.floats(0.05, 3.0), st.integers(0, 2**31))
def test_exp_weight_matches_numerical_integral(m, t, seed):
    path = sample_coalescent(m, t, np.random.default_rng(seed))

    def level(s):
        return m - int(np.searchsorted(path.jump_times, s, side="right"))

    pts = np.concatenate([[0.0], path.jump_times, [t]])
    val = sum(integrate.quad(lambda s: 0.5 * level(s) * (level(s) - 1), a, b)[0] for a, b in zip(pts[:-1], pts[1:]))
    assert path.log_weight() == pytest.approx(val, rel=1e-12, abs=1e-12)


def test_path_validation():
    with pytest.raises(ValueError):
        CoalescentPath(2, [0.5], ((1, 1),), 1.0)
    with pytest.raises(ValueError):
        CoalescentPath(2, [1.5], ((1, 2),), 1.0)


def test_level_bookkeeping():
    seen = []

    def record(p):
        seen.append(p.shape)
        return 1.0

    model = KernelModel(ZeroKernel(), ConstantCoefficient(1.0), ConstantDensity(1.0))
    for seed in range(200):
        rng = np.random.default_rng(seed)
        path = sample_coalescent(4, 0.8, rng)
        value, _ = dual_replicate(model, CallableF(record, 4), 4, DELTA0, 0.8, 0.1, rng, path)
        assert seen[-1] == (4,)
        assert value == pytest.approx(path.exp_weight())
        assert path.n_jumps == 4 - path.terminal_level


def test_swapped_pairs_give_identical_values():
    model = KernelModel(GaussianKernel(1.0, 0.5), ConstantCoefficient(1.0), ConstantDensity(0.8))
    f = GaussianProduct(3, 1.0, (0.0, 0.4, -0.2), 0.9)
    for seed in range(20):
        path = sample_coalescent(3, 1.0, np.random.default_rng(seed))
        a, _ = dual_replicate(model, f, 3, DELTA0, 1.0, 0.01, np.random.default_rng(99), path)
        b, _ = dual_replicate(model, f, 3, DELTA0, 1.0, 0.01, np.random.default_rng(99), path.swapped())
        assert a == b


def test_first_moment_is_exact_mass():
    mu = AtomMeasure([0.0, 1.0], [0.75, 0.5])
    est = estimate_dual_moment(free_model(), ConstantF(1), 1, mu, 0.5, 50, seed=3)
    assert est.value == 1.25 and est.stderr == 0.0


def test_no_branching_reduces_to_two_particle_diffusion():
    f = GaussianProduct(2, 1.0, (0.0, 0.0), 1.0)
    t = 0.5
    est = estimate_dual_moment(free_model(0.0), f, 2, DELTA0, t, 4000, dt_max=0.05, seed=4)
    exact = gauss_heat(1.0, 0.0, 1.0, t)(0.0) ** 2
    assert abs(est.z_against(exact)) < 4


def test_feller_second_moment():
    est = estimate_dual_moment(free_model(), ConstantF(2), 2, DELTA0, 0.5, 20000, seed=5)
    assert abs(est.z_against(1.5)) < 4


def test_fast_and_reference_dual_agree():
    model = KernelModel(GaussianKernel(1.0, 0.5), ConstantCoefficient(0.5), ConstantDensity(1.0))
    f = GaussianProduct(2, 1.0, (0.0, 0.2), 0.8)
    fast = estimate_dual_moment(model, f, 2, DELTA0, 0.4, 3000, dt_max=0.02, seed=6)
    ref = estimate_dual_moment(model, f, 2, DELTA0, 0.4, 600, dt_max=0.02, seed=6, engine="reference")
    assert abs(fast.z_against(ref)) < 4


def test_dual_moment_bound_examples():
    assert dual_moment_bound(1, 2.0, 5.0, 3.0) == 6.0
    assert dual_moment_bound(2, 1.0, 1.0, 1.0) == 2.0
    # m = 2: ||f|| (mass^2 + sigma mass)
    assert dual_moment_bound(2, 1.0, 0.5, 2.0) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        dual_moment_bound(2, 1.0, -1.0, 1.0)


@given(st.floats(0.0, 3.0), st.floats(0.01, 3.0), st.floats(0.0, 1.0))
def test_bound_dominates_feller_moment(sigma, mass, t):
    exact = mass * mass + sigma * t * mass
    assert dual_moment_bound(2, 1.0, sigma, mass) >= exact * (1 - 1e-12)


def test_estimates_respect_bound():
    model = KernelModel(GaussianKernel(1.0, 0.5), ConstantCoefficient(1.0), ConstantDensity(1.5))
    mu = AtomMeasure([0.0, 1.0], [0.5, 0.7])
    for m in (1, 2, 3):
        f = GaussianProduct(m, 1.0, 0.0, 1.0)
        est = estimate_dual_moment(model, f, m, mu, 1.0, 2000, dt_max=0.05, seed=m)
        assert est.value <= est.meta["bound"] + 5 * est.stderr


def test_wrong_arity_rejected():
    with pytest.raises(ValueError, match="2 variables"):
        estimate_dual_moment(free_model(), ConstantF(2), 3, DELTA0, 0.5, 10)
