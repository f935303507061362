"""Finite initial measures mu: weighted atoms or a density."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = ["AtomMeasure", "GaussianDensityMeasure", "TabulatedDensityMeasure", "measure_from_spec"]


def _largest_remainder(weights, total):
    """Integer allocation of ``total`` proportional to ``weights`` (deterministic)."""
    w = np.asarray(weights, dtype=float)
    raw = total * w / w.sum()
    base = np.floor(raw).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


@dataclass(frozen=True, eq=False)
class AtomMeasure:
    """mu = sum_a weights[a] * delta_{locations[a]}."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.locations, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if loc.shape != w.shape or loc.ndim != 1 or loc.size == 0:
            raise ValueError("atoms need matching non-empty locations and weights")
        if np.any(w < 0) or not np.all(np.isfinite(loc)):
            raise ValueError("atom weights must be non-negative and locations finite")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @property
    def mass(self):
        return float(self.weights.sum())

    def particles(self, theta, rng=None):
        """Initial positions with N0 = round(theta * mass), split across atoms."""
        n0 = int(round(theta * self.mass))
        if n0 == 0:
            return np.empty(0)
        counts = _largest_remainder(self.weights, n0)
        return np.repeat(self.locations, counts)

    def sample(self, n, rng):
        """n i.i.d. points from mu / <1, mu>."""
        if self.locations.size == 1:
            return np.full(n, self.locations[0])
        p = self.weights / self.weights.sum()
        return self.locations[rng.choice(self.locations.size, size=n, p=p)]

    def integrate(self, phi):
        return float(np.dot(self.weights, phi(self.locations)))

    def scaled(self, space, mass):
        """Atoms moved to ``space * x`` with weights multiplied by ``mass``."""
        return AtomMeasure(self.locations * space, self.weights * mass)

    def spec(self):
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.locations, self.weights)]}


@dataclass(frozen=True)
class GaussianDensityMeasure:
    """mu(dx) = mass * N(mean, sd^2)(dx)."""

    mass: float = 1.0
    mean: float = 0.0
    sd: float = 1.0

    def particles(self, theta, rng):
        n0 = int(round(theta * self.mass))
        return self.mean + self.sd * rng.standard_normal(n0)

    def sample(self, n, rng):
        return self.mean + self.sd * rng.standard_normal(n)

    def integrate(self, phi, nodes=80):
        z, w = np.polynomial.hermite_e.hermegauss(nodes)
        return float(self.mass * np.dot(w, phi(self.mean + self.sd * z)) / math.sqrt(2.0 * math.pi))

    def scaled(self, space, mass):
        return GaussianDensityMeasure(self.mass * mass, self.mean * space, self.sd * space)

    def spec(self):
        return {"density": {"kind": "gaussian", "mass": self.mass, "mean": self.mean, "sd": self.sd}}


@dataclass(frozen=True, eq=False)
class TabulatedDensityMeasure:
    """Piecewise-linear density through ``(x, values)``, zero outside."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        ys = np.asarray(self.values, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0) or np.any(ys < 0):
            raise ValueError("tabulated density needs increasing x and non-negative values")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "values", ys)

    @property
    def _cdf(self):
        seg = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.x)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def mass(self):
        return float(self._cdf[-1])

    def sample(self, n, rng):
        # exact inverse CDF of a piecewise-linear density
        cdf = self._cdf
        u = rng.random(n) * cdf[-1]
        i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, self.x.size - 2)
        x0, dx = self.x[i], self.x[i + 1] - self.x[i]
        y0, y1 = self.values[i], self.values[i + 1]
        r = u - cdf[i]
        slope = (y1 - y0) / dx
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = np.where(
                np.abs(slope) > 1e-14,
                (-y0 + np.sqrt(np.maximum(y0 * y0 + 2.0 * slope * r, 0.0))) / slope,
                r / np.where(y0 > 0, y0, 1.0),
            )
        return x0 + np.clip(quad, 0.0, dx)

    def particles(self, theta, rng):
        return self.sample(int(round(theta * self.mass)), rng)

    def integrate(self, phi):
        total = 0.0
        for a, b in zip(self.x[:-1], self.x[1:]):
            val, _ = integrate.quad(lambda y: float(phi(y) * np.interp(y, self.x, self.values)), a, b, epsabs=1e-12)
            total += val
        return total

    def scaled(self, space, mass):
        return TabulatedDensityMeasure(self.x * space, self.values * mass / space)

    def spec(self):
        return {"density": {"kind": "tabulated", "x": self.x.tolist(), "values": self.values.tolist()}}


def measure_from_spec(spec):
    if "atoms" in spec:
        atoms = np.asarray(spec["atoms"], dtype=float).reshape(-1, 2)
        return AtomMeasure(atoms[:, 0], atoms[:, 1])
    dens = dict(spec["density"])
    kind = dens.pop("kind", "gaussian")
    if kind == "gaussian":
        return GaussianDensityMeasure(**dens)
    if kind == "tabulated":
        return TabulatedDensityMeasure(dens["x"], dens["values"])
    raise ValueError(f"unknown initial density kind {kind!r}")
