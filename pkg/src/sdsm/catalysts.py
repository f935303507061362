"""Catalyst measures with a uniform window-mass bound, their binned densities,
and the per-k forward/dual experiment.

A catalyst ``eta`` is a finite list of atoms plus an optional piecewise-linear
density.  Binning at level ``k`` spreads the mass of each right-closed bin
``(i l / k, (i + 1) l / k]`` uniformly over it, which yields a bounded
branching density usable by every simulator in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forward import ForwardConfig, Lemma43Law, _min_feasible_k
from .harness import duality_check
from .kernels import BinnedDensity

__all__ = [
    "RadonMeasureSpec",
    "BUILTIN_CATALYSTS",
    "builtin_catalyst",
    "catalyst_from_spec",
    "bin_measure",
    "window_sup",
    "binning_bound_check",
    "weak_error",
    "weak_convergence_slope",
    "WEAK_TEST_PHIS",
    "CatalystRow",
    "catalyst_experiment",
    "stabilization",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gl_integrate(func, lo, hi):
    """Gauss-Legendre on each interval [lo[i], hi[i]]; returns the per-interval integrals."""
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.asarray(hi, dtype=float)[:, None]
    half = 0.5 * (hi - lo)
    x = lo + half * (_GL_NODES + 1.0)
    return (func(x) * _GL_WEIGHTS).sum(axis=1) * half[:, 0]


@dataclass(frozen=True, eq=False)
class RadonMeasureSpec:
    """Atoms plus a piecewise-linear density (zero outside its table), with a window certificate.

    The certificate ``eta([x, x + l]) <= b l`` is checked at construction on a
    sliding grid of step ``l / 100`` together with every window that starts or
    ends on an atom, which makes the check exact for the atomic part.
    """

    atom_locations: np.ndarray
    atom_masses: np.ndarray
    density_x: np.ndarray
    density_values: np.ndarray
    b: float
    l: float
    name: str = "custom"

    def __post_init__(self):
        locs = np.atleast_1d(np.asarray(self.atom_locations, dtype=float))
        masses = np.atleast_1d(np.asarray(self.atom_masses, dtype=float))
        if locs.shape != masses.shape:
            raise ValueError("atom locations and masses differ in length")
        if np.any(masses < 0):
            raise ValueError("atom masses must be non-negative")
        order = np.argsort(locs, kind="stable")
        dx = np.atleast_1d(np.asarray(self.density_x, dtype=float))
        dv = np.atleast_1d(np.asarray(self.density_values, dtype=float))
        if dx.shape != dv.shape or (dx.size == 1):
            raise ValueError("density table needs matching x and values with at least two points")
        if dx.size and (np.any(np.diff(dx) <= 0) or np.any(dv < 0)):
            raise ValueError("density table needs increasing x and non-negative values")
        if not (self.b > 0 and self.l > 0):
            raise ValueError("the certificate needs b > 0 and l > 0")
        if locs.size == 0 and dx.size == 0:
            raise ValueError("empty catalyst")
        object.__setattr__(self, "atom_locations", locs[order])
        object.__setattr__(self, "atom_masses", masses[order])
        object.__setattr__(self, "density_x", dx)
        object.__setattr__(self, "density_values", dv)
        worst, at = self.max_window_mass()
        if worst > self.b * self.l * (1.0 + 1e-12):
            raise ValueError(
                f"certificate fails: eta([{at}, {at + self.l}]) = {worst} > b l = {self.b * self.l}"
            )

    # -- masses

    @property
    def support(self):
        pts = [self.atom_locations, self.density_x[[0, -1]] if self.density_x.size else np.array([])]
        pts = np.concatenate(pts)
        return float(pts.min()), float(pts.max())

    @property
    def total_mass(self):
        return float(self.atom_masses.sum()) + float(self.density_cdf(np.inf))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.density_x.size == 0:
            return np.zeros_like(x)
        return np.interp(x, self.density_x, self.density_values, left=0.0, right=0.0)

    def density_cdf(self, x):
        """Integral of the density part over (-inf, x]."""
        x = np.asarray(x, dtype=float)
        if self.density_x.size == 0:
            return np.zeros_like(x)
        xs, vs = self.density_x, self.density_values
        seg = np.concatenate([[0.0], np.cumsum(0.5 * (vs[1:] + vs[:-1]) * np.diff(xs))])
        xc = np.clip(x, xs[0], xs[-1])
        j = np.clip(np.searchsorted(xs, xc, side="right") - 1, 0, xs.size - 2)
        d = xc - xs[j]
        slope = (vs[j + 1] - vs[j]) / (xs[j + 1] - xs[j])
        return seg[j] + vs[j] * d + 0.5 * slope * d * d

    def atom_cdf(self, x, right_closed=True):
        """Atomic mass in (-inf, x] (or (-inf, x) when ``right_closed`` is false)."""
        side = "right" if right_closed else "left"
        cum = np.concatenate([[0.0], np.cumsum(self.atom_masses)])
        return cum[np.searchsorted(self.atom_locations, np.asarray(x, dtype=float), side=side)]

    def interval_mass(self, lo, hi, left_closed=False):
        """eta((lo, hi]), or eta([lo, hi]) with ``left_closed``."""
        atoms = self.atom_cdf(hi) - self.atom_cdf(lo, right_closed=not left_closed)
        return atoms + self.density_cdf(hi) - self.density_cdf(lo)

    def window_mass(self, x):
        return self.interval_mass(x, np.asarray(x, dtype=float) + self.l, left_closed=True)

    def max_window_mass(self):
        lo, hi = self.support
        grid = np.arange(lo - self.l, hi + self.l / 100.0, self.l / 100.0)
        cands = np.concatenate([grid, self.atom_locations, self.atom_locations - self.l])
        mass = self.window_mass(cands)
        i = int(np.argmax(mass))
        return float(mass[i]), float(cands[i])

    def integrate(self, phi):
        total = float(np.dot(self.atom_masses, phi(self.atom_locations)))
        if self.density_x.size:
            xs = self.density_x
            total += float(_gl_integrate(lambda y: phi(y) * self.density(y), xs[:-1], xs[1:]).sum())
        return total

    def spec(self):
        return {
            "name": self.name,
            "atoms": [[float(a), float(w)] for a, w in zip(self.atom_locations, self.atom_masses)],
            "density": {"x": self.density_x.tolist(), "values": self.density_values.tolist()},
            "b": self.b,
            "l": self.l,
        }


def _smooth_bump_table(n=201):
    x = np.linspace(-1.0, 1.0, n)
    return x, 0.5 * (1.0 + np.cos(np.pi * x))


def builtin_catalyst(name):
    """Named catalysts used by the tests, the demos and the CLI defaults."""
    empty = np.array([])
    if name == "lebesgue-unit":
        return RadonMeasureSpec(empty, empty, [0.0, 1.0], [1.0, 1.0], b=1.0, l=1.0, name=name)
    if name == "dirac":
        return RadonMeasureSpec([0.0], [1.0], empty, empty, b=1.0, l=1.0, name=name)
    if name == "lattice":
        # closed windows of length 1 can hold two neighbouring atoms
        masses = [0.5, 0.25, 0.5, 0.25, 0.5]
        return RadonMeasureSpec(np.arange(-2.0, 3.0), masses, empty, empty, b=0.75, l=1.0, name=name)
    if name == "mixed":
        x, v = _smooth_bump_table()
        return RadonMeasureSpec([-0.75, 0.5], [0.5, 0.25], x, v, b=1.5, l=0.5, name=name)
    raise ValueError(f"unknown catalyst {name!r}; choose from {sorted(BUILTIN_CATALYSTS)}")


BUILTIN_CATALYSTS = ("lebesgue-unit", "dirac", "lattice", "mixed")


def catalyst_from_spec(spec):
    if isinstance(spec, str):
        return builtin_catalyst(spec)
    if "builtin" in spec:
        return builtin_catalyst(spec["builtin"])
    atoms = np.asarray(spec.get("atoms", []), dtype=float).reshape(-1, 2)
    dens = spec.get("density") or {"x": [], "values": []}
    return RadonMeasureSpec(
        atoms[:, 0], atoms[:, 1], dens["x"], dens["values"], float(spec["b"]), float(spec["l"]), spec.get("name", "custom")
    )


# --------------------------------------------------------------------------
# binning


def bin_measure(eta, k):
    """Piecewise-constant density ``(k / l) eta(bin)`` on the bins ``(i l/k, (i+1) l/k]``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    w = eta.l / int(k)
    lo, hi = eta.support
    # one empty bin of padding on each side absorbs rounding in the index arithmetic;
    # atoms are then assigned with the density's own indexer so evaluation agrees
    i_min = math.ceil(lo / w) - 2
    i_max = math.ceil(hi / w)
    nbins = i_max - i_min + 1
    probe = BinnedDensity(i_min * w, w, np.zeros(nbins))
    edges = probe.edges
    mass = eta.density_cdf(edges[1:]) - eta.density_cdf(edges[:-1])
    if eta.atom_locations.size:
        idx = probe.bin_index(eta.atom_locations)
        mass = mass + np.bincount(idx, weights=eta.atom_masses, minlength=nbins)
    return BinnedDensity(i_min * w, w, mass / w)


def window_sup(density, l):
    """sup_x of the integral of a binned density over [x, x + l].

    The window mass is piecewise linear in x with kinks where either end
    crosses a bin edge, so the sliding grid (step l/100) is augmented with
    those kink points, which makes the supremum exact.
    """
    edges = density.edges
    cum = np.concatenate([[0.0], np.cumsum(density.values * density.bin_width)])

    def F(x):
        return np.interp(x, edges, cum)

    grid = np.arange(edges[0] - l, edges[-1] + l / 100.0, l / 100.0)
    cands = np.concatenate([grid, edges, edges - l])
    return float(np.max(F(cands + l) - F(cands)))


def binning_bound_check(eta, ks, tol=1e-12):
    """Rows ``(k, sup window mass of eta_k, 2 b l, ok)``."""
    bound = 2.0 * eta.b * eta.l
    rows = []
    for k in ks:
        s = window_sup(bin_measure(eta, k), eta.l)
        rows.append((int(k), s, bound, s <= bound + tol))
    return rows


def _binned_integral(density, phi):
    e = density.edges
    return float(np.dot(density.values, _gl_integrate(phi, e[:-1], e[1:])))


def weak_error(eta, k, phi):
    """|int phi d eta_k - int phi d eta|."""
    return abs(_binned_integral(bin_measure(eta, k), phi) - eta.integrate(phi))


def _gauss(center, width):
    return lambda x: np.exp(-0.5 * ((np.asarray(x) - center) / width) ** 2)


# smooth test functions with non-vanishing slope near the built-in atoms
WEAK_TEST_PHIS = (
    _gauss(-1.3, 1.0),
    _gauss(-0.4, 0.7),
    _gauss(0.35, 0.8),
    _gauss(0.9, 1.2),
    lambda x: np.arctan(np.asarray(x) + 0.2),
)


def weak_convergence_slope(eta, phi, ks=(4, 8, 16, 32, 64), exact_tol=1e-13):
    """Least-squares slope of log(weak error) against log k.

    Returns ``(None, errors)`` when every error is at rounding level, i.e. the
    binning reproduces ``eta`` (uniform densities on bin-aligned supports).
    """
    errs = np.array([weak_error(eta, k, phi) for k in ks])
    if np.all(errs <= exact_tol):
        return None, errs
    if np.any(errs <= 0):
        raise ValueError("weak error vanished at some k but not all; the slope is undefined")
    slope = np.polyfit(np.log(np.asarray(ks, dtype=float)), np.log(errs), 1)[0]
    return float(slope), errs


# --------------------------------------------------------------------------
# experiment


@dataclass
class CatalystRow:
    k: int
    law_k: int
    offset: float
    report: object

    def row(self):
        out = {"k": self.k, "law_k": self.law_k, "sigma_offset": self.offset}
        out.update(self.report.row())
        return out


def _check_floor(model, eta, epsilon):
    lo, hi = eta.support
    grid = np.linspace(lo - 10.0, hi + 10.0, 4001)
    cmin = float(np.min(np.abs(model.c(grid))))
    if cmin < epsilon:
        raise ValueError(f"|c| drops to {cmin} < epsilon = {epsilon} on the test grid")


def catalyst_experiment(
    eta,
    k_list,
    model,
    f,
    m,
    t,
    mu,
    epsilon,
    theta=200.0,
    forward_replicates=10**4,
    dual_replicates=10**4,
    dt_max=1e-3,
    seed=0,
    workers=None,
    law_k=None,
    population_cap=10**6,
):
    """Forward and dual moments with branching density ``bin_measure(eta, k)`` for each k.

    A particle system cannot branch with zero density, so the forward side
    uses the three-point law on {0, 2, K}; ``K`` is the smallest value (at
    least ``law_k``) feasible for the binned density's supremum.  Both sides
    therefore see the density ``sigma_k + 1/sqrt(K)``, and the row records
    that offset.
    """
    _check_floor(model, eta, epsilon)
    rows = []
    for idx, k in enumerate(k_list):
        sigma_k = bin_measure(eta, k)
        kk = max(int(law_k or 3), _min_feasible_k(sigma_k.sup))
        cfg = ForwardConfig(
            model=model.with_sigma(sigma_k),
            law=Lemma43Law(kk),
            theta=theta,
            initial=mu,
            snapshots=(t,),
            dt_max=dt_max,
            population_cap=population_cap,
        )
        rep = duality_check(cfg, f, m, t, forward_replicates, dual_replicates, seed, (idx,), workers)
        rows.append(CatalystRow(int(k), kk, 1.0 / math.sqrt(kk), rep))
    return rows


def stabilization(rows, z_max=3.0):
    """Dual estimates of the last two k agree within ``z_max`` combined SE."""
    if len(rows) < 2:
        raise ValueError("need at least two k values")
    a, b = rows[-2].report.dual, rows[-1].report.dual
    z = a.z_against(b)
    return {"z": z, "passed": abs(z) <= z_max}
