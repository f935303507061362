"""Reference values: total-mass transforms, no-interaction second moments,
super-Brownian limit moments and the catalyst density bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .functionals import ConstantPhi, GaussianBump
from .kernels import ConstantCoefficient, ConstantDensity, KernelModel, ZeroKernel

__all__ = [
    "MomentEstimate",
    "laplace_mass",
    "feller_second_moment",
    "binary_chain_laplace",
    "heat_apply",
    "first_moment_no_interaction",
    "second_moment_quadrature",
    "sbm_moments",
    "density_bound",
    "lebesgue_window_density_sup",
]


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo mean with standard error ``sd / sqrt(n)``."""

    value: float
    stderr: float
    n: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a moment estimate needs at least one replicate")
        if self.stderr < 0:
            raise ValueError("standard error must be non-negative")

    @classmethod
    def from_samples(cls, samples, meta=None):
        x = np.asarray(samples, dtype=float)
        n = x.size
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(x.mean()), se, n, dict(meta or {}))

    def z_against(self, other):
        """z-statistic of the difference from another estimate or a fixed value."""
        if isinstance(other, MomentEstimate):
            se = math.hypot(self.stderr, other.stderr)
            diff = self.value - other.value
        else:
            se = self.stderr
            diff = self.value - float(other)
        if se == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / se


# --------------------------------------------------------------------------
# total mass


def laplace_mass(mu_mass, sigma0, t, lam):
    """E exp(lam <1, X_t>) for the Feller diffusion with generator (sigma0/2) x d^2/dx^2."""
    if mu_mass < 0 or sigma0 < 0 or t < 0:
        raise ValueError("mass, sigma0 and t must be non-negative")
    denom = 2.0 - sigma0 * lam * t
    if denom <= 0.0:
        raise ValueError(f"transform diverges: sigma0*lambda*t = {sigma0 * lam * t} >= 2")
    return math.exp(2.0 * mu_mass * lam / denom)


def feller_second_moment(mu_mass, sigma0, t):
    return mu_mass * mu_mass + sigma0 * t * mu_mass


def binary_chain_laplace(n0, theta, gamma, t, lam):
    """E exp(lam N_t / theta) for n0 independent critical binary splitters at rate gamma*theta.

    This is the particle system's exact total-mass transform while the
    truncation is inactive; it differs from :func:`laplace_mass` by O(1/theta).
    """
    b = 0.5 * gamma * theta * t
    s = math.exp(lam / theta)
    f = (b * (1.0 - s) + s) / (b * (1.0 - s) + 1.0)
    return f**n0


# --------------------------------------------------------------------------
# no-interaction moments


def heat_apply(phi, variance, nodes=80):
    """Return y -> E phi(y + sqrt(variance) Z), closed form for gaussian bumps."""
    if variance == 0.0 or isinstance(phi, ConstantPhi):
        return phi
    if isinstance(phi, GaussianBump):
        return phi.heat(variance)
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    sd = math.sqrt(variance)

    def smoothed(y):
        y = np.asarray(y, dtype=float)
        return np.tensordot(phi(y[..., None] + sd * z), w, axes=([-1], [0]))

    return smoothed


def first_moment_no_interaction(a, phi, mu, t):
    return mu.integrate(heat_apply(phi, a * t))


def _require_independent(model):
    if not isinstance(model.h, ZeroKernel) or not isinstance(model.c, ConstantCoefficient):
        raise ValueError("second_moment_quadrature needs h = 0 and constant c")


def _kinks(sigma):
    """Locations where a branching density may jump."""
    for attr in ("at", "edges", "x"):
        v = getattr(sigma, attr, None)
        if v is not None:
            return np.atleast_1d(np.asarray(v, dtype=float))
    return np.empty(0)


_Z_REACH = 40.0


def _smoothed_at(g, x, variance, tol, kinks=()):
    if variance == 0.0:
        return float(g(x))
    sd = math.sqrt(variance)
    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def integrand(z):
        return float(g(x + sd * z)) * norm * math.exp(-0.5 * z * z)

    z_kinks = (np.asarray(kinks, dtype=float) - x) / sd
    z_kinks = z_kinks[np.abs(z_kinks) < _Z_REACH]
    val, err = integrate.quad(
        integrand, -_Z_REACH, _Z_REACH, epsabs=tol, epsrel=0.0, limit=400, points=z_kinks if z_kinks.size else None
    )
    if not err <= max(tol, 1e-14) * 10:
        raise RuntimeError(f"spatial quadrature failed at x={x}: error estimate {err:.2e} > {tol:.0e}")
    return val


def second_moment_quadrature(model, phi, mu, t, nodes=64, tol=1e-8):
    """E<phi, X_t>^2 for independent particles (h = 0, constant c).

    ``<T_t phi, mu>^2 + int_0^t <T_{t-s}[sigma (T_s phi)^2], mu> ds`` with
    Gauss-Legendre nodes in s and adaptive quadrature in space.  ``mu`` must
    be atomic.
    """
    _require_independent(model)
    a = float(model.c.value) ** 2
    first = first_moment_no_interaction(a, phi, mu, t)
    if t == 0.0:
        return first * first
    s_nodes, s_weights = np.polynomial.legendre.leggauss(nodes)
    s_nodes = 0.5 * t * (s_nodes + 1.0)
    s_weights = 0.5 * t * s_weights
    locs, wts = np.atleast_1d(mu.locations), np.atleast_1d(mu.weights)
    kinks = _kinks(model.sigma)
    total = 0.0
    for s, ws in zip(s_nodes, s_weights):
        ts_phi = heat_apply(phi, a * s)

        def g(y, ts_phi=ts_phi):
            return model.sigma(y) * ts_phi(y) ** 2

        inner = sum(w * _smoothed_at(g, x, a * (t - s), tol / max(nodes, 1), kinks) for x, w in zip(locs, wts))
        total += ws * inner
    return first * first + total


def sbm_moments(a_inf, sigma_inf, phi, mu, t, nodes=64, tol=1e-8):
    """(E<phi, X_t>, E<phi, X_t>^2) for super-Brownian motion with generator (a/2) Laplacian."""
    model = KernelModel(ZeroKernel(), ConstantCoefficient(math.sqrt(a_inf)), ConstantDensity(sigma_inf))
    first = first_moment_no_interaction(a_inf, phi, mu, t)
    return first, second_moment_quadrature(model, phi, mu, t, nodes, tol)


# --------------------------------------------------------------------------
# catalysts


def density_bound(b_eta, l_eta, epsilon, t, const=1.0):
    """const * b [2 l + sqrt(2 pi eps t)] / sqrt(t)."""
    for name, v in (("b", b_eta), ("l", l_eta), ("epsilon", epsilon), ("t", t)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return const * b_eta * (2.0 * l_eta + math.sqrt(2.0 * math.pi * epsilon * t)) / math.sqrt(t)


def lebesgue_window_density_sup(epsilon, t, left=0.0, right=1.0):
    """sup_x int p_t(x, y) dy over [left, right] for a N(0, eps t) kernel (attained at the midpoint)."""
    half = 0.5 * (right - left) / math.sqrt(epsilon * t)
    return math.erf(half / math.sqrt(2.0))
