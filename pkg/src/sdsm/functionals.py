"""Test functions: one-dimensional phi and m-variable f.

The m-variable built-ins expose :meth:`product_terms`, a decomposition of f
into sums of tensor products, so that ``<f, mu^m>`` over a particle cloud can
be evaluated as products of one-dimensional sums instead of N^m terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConstantPhi",
    "GaussianBump",
    "ConstantF",
    "GaussianProduct",
    "CoordinatePoly",
    "TensorF",
    "CallableF",
    "phi_from_spec",
    "f_from_spec",
]


# --------------------------------------------------------------------------
# one-dimensional test functions with derivatives and heat-semigroup action


@dataclass(frozen=True)
class ConstantPhi:
    value: float = 1.0

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def d1(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def d2(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def heat(self, variance):
        return self

    @property
    def sup(self):
        return abs(self.value)

    def spec(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class GaussianBump:
    """phi(x) = amplitude * exp(-(x - center)**2 / (2 width**2))."""

    amplitude: float = 1.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("gaussian bump width must be positive")

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.width
        return self.amplitude * np.exp(-0.5 * u * u)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return -(x - self.center) / self.width**2 * self(x)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.width
        return (u * u - 1.0) / self.width**2 * self(x)

    def heat(self, variance):
        """Convolution with the centred normal density of the given variance."""
        if variance < 0:
            raise ValueError("variance must be non-negative")
        w2 = self.width**2 + variance
        w = math.sqrt(w2)
        return GaussianBump(self.amplitude * self.width / w, self.center, w)

    def square(self):
        return GaussianBump(self.amplitude**2, self.center, self.width / math.sqrt(2.0))

    @property
    def sup(self):
        return abs(self.amplitude)

    def spec(self):
        return {"kind": "gaussian", "amplitude": self.amplitude, "center": self.center, "width": self.width}


def phi_from_spec(spec):
    spec = dict(spec)
    kind = spec.pop("kind", "gaussian")
    if kind == "constant":
        return ConstantPhi(**spec)
    if kind == "gaussian":
        return GaussianBump(**spec)
    raise ValueError(f"unknown test function kind {kind!r}")


# --------------------------------------------------------------------------
# m-variable functions


class _MVariable:
    m: int

    def __call__(self, points):
        """Evaluate at an array of shape (..., m)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.m:
            raise ValueError(f"expected points with last axis {self.m}, got {pts.shape}")
        total = 0.0
        for coef, factors in self.product_terms():
            term = coef
            for i, phi in enumerate(factors):
                term = term * phi(pts[..., i])
            total = total + term
        return total


@dataclass(frozen=True)
class ConstantF(_MVariable):
    m: int = 1
    value: float = 1.0

    def product_terms(self):
        return [(self.value, [ConstantPhi(1.0)] * self.m)]

    @property
    def sup(self):
        return abs(self.value)

    def spec(self):
        return {"builtin": "constant", "m": self.m, "value": self.value}


@dataclass(frozen=True)
class GaussianProduct(_MVariable):
    """f(x_1..x_m) = amplitude * prod_i exp(-(x_i - c_i)**2 / (2 width**2))."""

    m: int = 1
    amplitude: float = 1.0
    centers: tuple = (0.0,)
    width: float = 1.0

    def __post_init__(self):
        centers = tuple(float(c) for c in np.broadcast_to(np.asarray(self.centers, dtype=float), (self.m,)))
        object.__setattr__(self, "centers", centers)

    def product_terms(self):
        return [(self.amplitude, [GaussianBump(1.0, c, self.width) for c in self.centers])]

    @property
    def sup(self):
        return abs(self.amplitude)

    def spec(self):
        return {
            "builtin": "gaussian-product",
            "m": self.m,
            "amplitude": self.amplitude,
            "centers": list(self.centers),
            "width": self.width,
        }


@dataclass(frozen=True)
class _Power:
    power: int

    def __call__(self, x):
        return np.asarray(x, dtype=float) ** self.power


@dataclass(frozen=True)
class CoordinatePoly(_MVariable):
    """Sum of monomials ``coef * prod_i x_i**e_i``; ``terms`` is [(coef, (e_1..e_m)), ...].

    Unbounded, so the moment ceiling reports infinity.
    """

    m: int = 1
    terms: tuple = ((1.0, (1,)),)

    def __post_init__(self):
        terms = tuple((float(c), tuple(int(e) for e in exps)) for c, exps in self.terms)
        for _, exps in terms:
            if len(exps) != self.m or min(exps) < 0:
                raise ValueError("each monomial needs m non-negative exponents")
        object.__setattr__(self, "terms", terms)

    def product_terms(self):
        return [(c, [_Power(e) for e in exps]) for c, exps in self.terms]

    @property
    def sup(self):
        if all(max(exps) == 0 for _, exps in self.terms):
            return abs(sum(c for c, _ in self.terms))
        return math.inf

    def spec(self):
        return {"builtin": "coordinate-poly", "m": self.m, "terms": [[c, list(e)] for c, e in self.terms]}


@dataclass(frozen=True)
class TensorF(_MVariable):
    """phi_1 (x) ... (x) phi_m for arbitrary one-dimensional phi_i."""

    factors: tuple

    @property
    def m(self):
        return len(self.factors)

    def product_terms(self):
        return [(1.0, list(self.factors))]

    @property
    def sup(self):
        return float(np.prod([getattr(p, "sup", math.inf) for p in self.factors]))

    def spec(self):
        return {"builtin": "tensor", "factors": [p.spec() for p in self.factors]}


@dataclass(frozen=True)
class CallableF:
    """Wraps a vectorized callable on arrays of shape (..., m); no factorization."""

    func: object
    m: int
    sup: float = math.inf

    def __call__(self, points):
        return self.func(np.asarray(points, dtype=float))

    def product_terms(self):
        return None

    def spec(self):
        return {"builtin": "callable", "m": self.m}


def f_from_spec(spec):
    spec = dict(spec)
    kind = spec.pop("builtin", "constant")
    params = dict(spec.pop("params", {}))
    params.update(spec)
    if kind == "constant":
        return ConstantF(**params)
    if kind == "gaussian-product":
        if "centers" in params:
            params["centers"] = tuple(np.atleast_1d(params["centers"]).tolist())
        return GaussianProduct(**params)
    if kind == "tensor":
        return TensorF(tuple(phi_from_spec(p) for p in params["factors"]))
    if kind == "coordinate-poly":
        params["terms"] = tuple((c, tuple(e)) for c, e in params.get("terms", [(1.0, [1])]))
        return CoordinatePoly(**params)
    raise ValueError(f"unknown moment functional {kind!r}")
