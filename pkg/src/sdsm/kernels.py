"""Model coefficients of the interacting particle system.

A :class:`KernelModel` bundles the interaction kernel ``h``, the individual
diffusion coefficient ``c`` and the branching density ``sigma``.  From ``h`` it
derives the interaction covariance

    rho(x) = int h(y - x) h(y) dy,

and the one-particle diffusion coefficient ``a(x) = c(x)**2 + rho(0)``.  The
per-step covariance of ``m`` particles has ``a(x_i)`` on the diagonal and
``rho(x_i - x_j)`` off it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .quadrature import QuadratureError, adaptive_simpson

__all__ = [
    "ZeroKernel",
    "GaussianKernel",
    "BoxKernel",
    "TabulatedKernel",
    "ConstantCoefficient",
    "AffineClampedCoefficient",
    "ConstantDensity",
    "BumpDensity",
    "StepDensity",
    "TabulatedDensity",
    "BinnedDensity",
    "PiecewiseDensity",
    "KernelModel",
    "StepCovariance",
    "FactorizationError",
    "QuadratureError",
    "rho_eval",
    "rho_quadrature",
    "step_covariance",
    "jittered_cholesky",
    "JITTER_SCHEDULE",
    "model_from_spec",
]

# relative diagonal jitter, in units of rho(0)
JITTER_SCHEDULE = (0.0, 1e-14, 1e-12, 1e-10, 1e-8)

# numba dispatch codes, mirrored in _engine
RHO_ZERO, RHO_GAUSSIAN, RHO_BOX, RHO_TABLE = 0, 1, 2, 3
C_CONSTANT, C_AFFINE = 0, 1
S_CONSTANT, S_BUMP, S_STEP, S_TABLE, S_BINS, S_PIECEWISE = 0, 1, 2, 3, 4, 5


class FactorizationError(np.linalg.LinAlgError):
    """The step covariance could not be factorized even with maximal jitter."""

    def __init__(self, message, min_eigenvalue):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


def _as_float_array(x):
    return np.asarray(x, dtype=float)


def _interp_zero_outside(x, xs, ys):
    x = _as_float_array(x)
    return np.interp(x, xs, ys, left=0.0, right=0.0)


# --------------------------------------------------------------------------
# interaction kernels h


@dataclass(frozen=True)
class ZeroKernel:
    """h = 0: no common noise, particles move independently."""

    name = "zero"
    smooth = True

    def __call__(self, x):
        return np.zeros_like(_as_float_array(x))

    @property
    def support(self):
        return (0.0, 0.0)

    def rho(self, x):
        return np.zeros_like(_as_float_array(x))

    def spec(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class GaussianKernel:
    """h(x) = amplitude * exp(-x**2 / (2 width**2))."""

    amplitude: float = 1.0
    width: float = 1.0
    name = "gaussian"
    smooth = True

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("gaussian kernel width must be positive")

    def __call__(self, x):
        x = _as_float_array(x)
        return self.amplitude * np.exp(-0.5 * (x / self.width) ** 2)

    @property
    def support(self):
        # effective support for quadrature; h is below 1e-300 of its peak outside
        r = 40.0 * self.width
        return (-r, r)

    def rho(self, x):
        x = _as_float_array(x)
        a, b = self.amplitude, self.width
        return a * a * b * math.sqrt(math.pi) * np.exp(-(x * x) / (4.0 * b * b))

    def spec(self):
        return {"kind": self.name, "amplitude": self.amplitude, "width": self.width}


@dataclass(frozen=True)
class BoxKernel:
    """h = height on [left, right], zero elsewhere."""

    left: float = 0.0
    right: float = 1.0
    height: float = 1.0
    name = "box"
    # rho is only Lipschitz at +-(right - left); admitted for oracle tests
    smooth = False

    def __post_init__(self):
        if not self.right > self.left:
            raise ValueError("box kernel needs right > left")

    def __call__(self, x):
        x = _as_float_array(x)
        return np.where((x >= self.left) & (x <= self.right), self.height, 0.0)

    @property
    def support(self):
        return (self.left, self.right)

    def rho(self, x):
        x = _as_float_array(x)
        w = self.right - self.left
        return self.height**2 * np.maximum(0.0, w - np.abs(x))

    def spec(self):
        return {"kind": self.name, "left": self.left, "right": self.right, "height": self.height}


@dataclass(frozen=True, eq=False)
class TabulatedKernel:
    """Piecewise-linear h through ``(x, values)``; zero outside the table."""

    x: np.ndarray
    values: np.ndarray
    name = "tabulated"
    smooth = False

    def __post_init__(self):
        xs = _as_float_array(self.x)
        ys = _as_float_array(self.values)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("tabulated kernel needs matching 1-d x and values (>= 2 points)")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated kernel x must be strictly increasing")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "values", ys)

    def __call__(self, x):
        return _interp_zero_outside(x, self.x, self.values)

    @property
    def support(self):
        return (float(self.x[0]), float(self.x[-1]))

    rho = None  # no closed form; rho_eval falls back to quadrature

    def spec(self):
        return {"kind": self.name, "x": self.x.tolist(), "values": self.values.tolist()}


# --------------------------------------------------------------------------
# individual diffusion coefficients c


@dataclass(frozen=True)
class ConstantCoefficient:
    value: float = 1.0
    name = "constant"

    def __call__(self, x):
        return np.full_like(_as_float_array(x), self.value)

    @property
    def lipschitz(self):
        return 0.0

    def lower_bound(self):
        return abs(self.value)

    def params(self):
        return C_CONSTANT, np.array([self.value], dtype=float)

    def spec(self):
        return {"kind": self.name, "value": self.value}


@dataclass(frozen=True)
class AffineClampedCoefficient:
    """c(x) = clip(intercept + slope * x, floor, ceiling)."""

    slope: float = 0.0
    floor: float = 0.0
    intercept: float = 0.0
    ceiling: float = math.inf
    name = "affine-clamped"

    def __post_init__(self):
        if self.ceiling < self.floor:
            raise ValueError("affine-clamped coefficient needs ceiling >= floor")

    def __call__(self, x):
        x = _as_float_array(x)
        return np.clip(self.intercept + self.slope * x, self.floor, self.ceiling)

    @property
    def lipschitz(self):
        return abs(self.slope)

    def lower_bound(self):
        # inf |c| over the line
        if self.slope == 0.0:
            return abs(min(max(self.intercept, self.floor), self.ceiling))
        if self.floor >= 0.0:
            return self.floor
        if self.ceiling <= 0.0:
            return -self.ceiling
        return 0.0

    def params(self):
        return C_AFFINE, np.array([self.slope, self.floor, self.intercept, self.ceiling], dtype=float)

    def spec(self):
        return {
            "kind": self.name,
            "slope": self.slope,
            "floor": self.floor,
            "intercept": self.intercept,
            "ceiling": self.ceiling,
        }


# --------------------------------------------------------------------------
# branching densities sigma (all carry an additive offset)


@dataclass(frozen=True)
class ConstantDensity:
    value: float = 1.0
    offset: float = 0.0
    name = "constant"

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("branching density must be non-negative")

    def __call__(self, x):
        return np.full_like(_as_float_array(x), self.value + self.offset)

    @property
    def sup(self):
        return self.value + self.offset

    @property
    def limit(self):
        return self.value + self.offset

    def params(self):
        return S_CONSTANT, np.array([self.value], dtype=float)

    def spec(self):
        return {"kind": self.name, "value": self.value, "offset": self.offset}


@dataclass(frozen=True)
class BumpDensity:
    """sigma(x) = base + height * exp(-(x - center)**2 / (2 width**2))."""

    base: float = 0.0
    height: float = 1.0
    center: float = 0.0
    width: float = 1.0
    offset: float = 0.0
    name = "bump"

    def __post_init__(self):
        if self.base < 0 or self.base + min(self.height, 0.0) < 0 or self.width <= 0:
            raise ValueError("bump density must be non-negative with positive width")

    def __call__(self, x):
        x = _as_float_array(x)
        return self.base + self.offset + self.height * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)

    @property
    def sup(self):
        return self.base + max(self.height, 0.0) + self.offset

    @property
    def limit(self):
        return self.base + self.offset

    def params(self):
        return S_BUMP, np.array([self.base, self.height, self.center, self.width], dtype=float)

    def spec(self):
        return {
            "kind": self.name,
            "base": self.base,
            "height": self.height,
            "center": self.center,
            "width": self.width,
            "offset": self.offset,
        }


@dataclass(frozen=True)
class StepDensity:
    """sigma = left for x <= at, right for x > at."""

    left: float = 0.0
    right: float = 1.0
    at: float = 0.0
    offset: float = 0.0
    name = "step"

    def __post_init__(self):
        if self.left < 0 or self.right < 0:
            raise ValueError("branching density must be non-negative")

    def __call__(self, x):
        x = _as_float_array(x)
        return np.where(x <= self.at, self.left, self.right) + self.offset

    @property
    def sup(self):
        return max(self.left, self.right) + self.offset

    @property
    def limit(self):
        if self.left != self.right:
            return None
        return self.left + self.offset

    def params(self):
        return S_STEP, np.array([self.left, self.right, self.at], dtype=float)

    def spec(self):
        return {"kind": self.name, "left": self.left, "right": self.right, "at": self.at, "offset": self.offset}


@dataclass(frozen=True, eq=False)
class TabulatedDensity:
    """Piecewise-linear sigma through ``(x, values)``, held constant beyond the ends.

    ``sup`` is the user-declared bound; when omitted it is the table maximum,
    which is exact for linear interpolation.
    """

    x: np.ndarray
    values: np.ndarray
    declared_sup: float | None = None
    offset: float = 0.0
    name = "tabulated"

    def __post_init__(self):
        xs = _as_float_array(self.x)
        ys = _as_float_array(self.values)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValueError("tabulated density needs matching 1-d x and values")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated density x must be strictly increasing")
        if np.any(ys < 0):
            raise ValueError("branching density must be non-negative")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "values", ys)

    def __call__(self, x):
        return np.interp(_as_float_array(x), self.x, self.values) + self.offset

    @property
    def sup(self):
        base = float(self.values.max()) if self.declared_sup is None else float(self.declared_sup)
        return base + self.offset

    @property
    def limit(self):
        if self.values[0] != self.values[-1]:
            return None
        return float(self.values[0]) + self.offset

    def params(self):
        n = self.x.size
        return S_TABLE, np.concatenate([[float(n)], self.x, self.values])

    def spec(self):
        return {
            "kind": self.name,
            "x": self.x.tolist(),
            "values": self.values.tolist(),
            "declared_sup": self.declared_sup,
            "offset": self.offset,
        }


@dataclass(frozen=True, eq=False)
class BinnedDensity:
    """Piecewise-constant sigma on right-closed bins ``(origin + i w, origin + (i+1) w]``.

    Zero outside the tabulated bins.  This is the form produced by catalyst
    binning.
    """

    origin: float
    bin_width: float
    values: np.ndarray
    offset: float = 0.0
    name = "binned"

    def __post_init__(self):
        vals = _as_float_array(self.values)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("binned density needs at least one bin")
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")
        if np.any(vals < 0):
            raise ValueError("branching density must be non-negative")
        object.__setattr__(self, "values", vals)

    def bin_index(self, x):
        # right-closed bins: x in (o + i w, o + (i+1) w]  <=>  i = ceil((x - o)/w) - 1
        x = _as_float_array(x)
        return np.ceil((x - self.origin) / self.bin_width).astype(np.int64) - 1

    def __call__(self, x):
        idx = self.bin_index(x)
        inside = (idx >= 0) & (idx < self.values.size)
        out = np.where(inside, self.values[np.clip(idx, 0, self.values.size - 1)], 0.0)
        return out + self.offset

    @property
    def edges(self):
        return self.origin + self.bin_width * np.arange(self.values.size + 1)

    @property
    def total_mass(self):
        return float(self.values.sum() * self.bin_width)

    @property
    def sup(self):
        return float(self.values.max()) + self.offset

    @property
    def limit(self):
        return self.offset

    def params(self):
        return S_BINS, np.concatenate([[self.origin, self.bin_width], self.values])

    def spec(self):
        return {
            "kind": self.name,
            "origin": self.origin,
            "bin_width": self.bin_width,
            "values": self.values.tolist(),
            "offset": self.offset,
        }


@dataclass(frozen=True, eq=False)
class PiecewiseDensity:
    """sigma = values[i] on (edges[i-1], edges[i]], with unbounded end pieces.

    ``values`` has one more entry than ``edges``.
    """

    edges: np.ndarray
    values: np.ndarray
    offset: float = 0.0
    name = "piecewise"

    def __post_init__(self):
        e = np.atleast_1d(_as_float_array(self.edges))
        v = _as_float_array(self.values)
        if v.ndim != 1 or v.size != e.size + 1:
            raise ValueError("piecewise density needs len(values) == len(edges) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("piecewise density edges must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("branching density must be non-negative")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        idx = np.searchsorted(self.edges, _as_float_array(x), side="left")
        return self.values[idx] + self.offset

    @property
    def sup(self):
        return float(self.values.max()) + self.offset

    @property
    def limit(self):
        if self.values[0] != self.values[-1]:
            return None
        return float(self.values[0]) + self.offset

    def params(self):
        return S_PIECEWISE, np.concatenate([[float(self.edges.size)], self.edges, self.values])

    def spec(self):
        return {"kind": self.name, "edges": self.edges.tolist(), "values": self.values.tolist(), "offset": self.offset}


def _with_offset(density, delta):
    from dataclasses import replace

    return replace(density, offset=density.offset + delta)


# --------------------------------------------------------------------------
# quadrature for rho


def _breakpoints(h):
    if isinstance(h, TabulatedKernel):
        return h.x
    if isinstance(h, BoxKernel):
        return np.array([h.left, h.right])
    return np.array([])


def rho_quadrature(h, x, abs_tol=1e-10, max_depth=40):
    """rho(x) by adaptive Simpson over the overlap of the supports of h(. - x) and h.

    The overlap is split at the kinks of both factors so every piece is smooth.
    """
    lo_h, hi_h = h.support
    lo = max(lo_h, lo_h + x)
    hi = min(hi_h, hi_h + x)
    if not hi > lo:
        return 0.0
    bps = np.concatenate([_breakpoints(h), _breakpoints(h) + x, [lo, hi]])
    bps = np.unique(bps[(bps >= lo) & (bps <= hi)])

    def integrand(y):
        return float(h(y - x) * h(y))

    total = 0.0
    tol = abs_tol / max(len(bps) - 1, 1)
    for a, b in zip(bps[:-1], bps[1:]):
        try:
            val, _ = adaptive_simpson(integrand, a, b, abs_tol=tol, max_depth=max_depth)
        except QuadratureError as exc:
            raise QuadratureError(
                f"rho quadrature failed at x={x!r}: achieved tolerance {exc.achieved:.3e}",
                achieved=exc.achieved,
            ) from exc
        total += val
    return total


# --------------------------------------------------------------------------
# the model


@dataclass(frozen=True, eq=False)
class KernelModel:
    """Generator coefficients (h, c, sigma) with derived rho and a.

    Immutable; safe to share between replicate workers.  ``lipschitz_bound_c``
    defaults to the family's own constant, ``sigma_sup`` to the density's sup.
    """

    h: object = field(default_factory=ZeroKernel)
    c: object = field(default_factory=ConstantCoefficient)
    sigma: object = field(default_factory=ConstantDensity)
    lipschitz_bound_c: float | None = None
    sigma_sup: float | None = None

    def __post_init__(self):
        if self.lipschitz_bound_c is None:
            object.__setattr__(self, "lipschitz_bound_c", float(self.c.lipschitz))
        if self.sigma_sup is None:
            object.__setattr__(self, "sigma_sup", float(self.sigma.sup))
        if self.lipschitz_bound_c < 0 or self.sigma_sup < 0:
            raise ValueError("lipschitz_bound_c and sigma_sup must be non-negative")

    # -- derived coefficients --------------------------------------------

    @cached_property
    def rho0(self):
        return float(rho_eval(self, 0.0))

    def rho(self, x):
        """Vectorized rho; closed form when available, else the cached table."""
        x = _as_float_array(x)
        if self.h.rho is not None:
            return self.h.rho(x)
        x0, dx, vals = self.rho_table
        return _interp_zero_outside(x, x0 + dx * np.arange(vals.size), vals)

    def a(self, x):
        c = self.c(x)
        return c * c + self.rho0

    @property
    def smooth(self):
        """Whether rho meets the C^2 / bounded-derivative standing assumption."""
        return bool(self.h.smooth)

    @cached_property
    def rho_table(self):
        """(x0, dx, values) of rho on a uniform grid covering its support.

        Only needed for kernels without a closed form; built by quadrature.
        """
        lo, hi = self.h.support
        width = hi - lo
        n = 2049
        grid = np.linspace(-width, width, n)
        vals = np.array([rho_quadrature(self.h, float(g)) for g in grid])
        return float(grid[0]), float(grid[1] - grid[0]), vals

    def with_sigma(self, sigma, sigma_sup=None):
        return KernelModel(self.h, self.c, sigma, self.lipschitz_bound_c, sigma_sup)

    def with_sigma_offset(self, delta):
        return self.with_sigma(_with_offset(self.sigma, delta))

    def rescaled(self, scale):
        """Coefficients of the space-contracted model: rho(scale x), c(scale x), sigma(scale x).

        Only available for built-in families whose rescaling stays in-family.
        """
        return _rescale_model(self, scale)

    def spec(self):
        return {
            "h": self.h.spec(),
            "c": self.c.spec(),
            "sigma": self.sigma.spec(),
            "lipschitz_bound_c": self.lipschitz_bound_c,
            "sigma_sup": self.sigma_sup,
        }

    # -- numba dispatch ------------------------------------------------------

    @cached_property
    def engine_args(self):
        """Flat (kind, params) arrays consumed by the compiled engine.

        Order: rho kind, rho params, h params, c kind, c params, sigma kind,
        sigma params, sigma offset.
        """
        h = self.h
        hp = np.zeros(1)
        if isinstance(h, ZeroKernel):
            rk, rp = RHO_ZERO, np.zeros(1)
        elif isinstance(h, GaussianKernel):
            rk, rp = RHO_GAUSSIAN, np.array([self.rho0, h.width])
            hp = np.array([h.amplitude, h.width])
        elif isinstance(h, BoxKernel):
            rk, rp = RHO_BOX, np.array([h.left, h.right, h.height])
            hp = rp.copy()
        else:
            x0, dx, vals = self.rho_table
            rk, rp = RHO_TABLE, np.concatenate([[x0, dx], vals])
        ck, cp = self.c.params()
        sk, sp = self.sigma.params()
        return (
            np.int64(rk),
            np.ascontiguousarray(rp, dtype=float),
            np.ascontiguousarray(hp, dtype=float),
            np.int64(ck),
            np.ascontiguousarray(cp, dtype=float),
            np.int64(sk),
            np.ascontiguousarray(sp, dtype=float),
            float(self.sigma.offset),
        )


def _rescale_model(model, s):
    h, c, sig = model.h, model.c, model.sigma
    # rho(s x) is generated by sqrt(s) h(s x)
    if isinstance(h, ZeroKernel):
        h2 = h
    elif isinstance(h, GaussianKernel):
        h2 = GaussianKernel(h.amplitude * math.sqrt(s), h.width / s)
    elif isinstance(h, BoxKernel):
        h2 = BoxKernel(h.left / s, h.right / s, h.height * math.sqrt(s))
    else:
        h2 = TabulatedKernel(h.x / s, h.values * math.sqrt(s))
    if isinstance(c, ConstantCoefficient):
        c2 = c
    else:
        c2 = AffineClampedCoefficient(c.slope * s, c.floor, c.intercept, c.ceiling)
    if isinstance(sig, ConstantDensity):
        s2 = sig
    elif isinstance(sig, BumpDensity):
        s2 = BumpDensity(sig.base, sig.height, sig.center / s, sig.width / s, sig.offset)
    elif isinstance(sig, StepDensity):
        s2 = StepDensity(sig.left, sig.right, sig.at / s, sig.offset)
    elif isinstance(sig, TabulatedDensity):
        s2 = TabulatedDensity(sig.x / s, sig.values, sig.declared_sup, sig.offset)
    elif isinstance(sig, BinnedDensity):
        s2 = BinnedDensity(sig.origin / s, sig.bin_width / s, sig.values, sig.offset)
    else:
        s2 = PiecewiseDensity(sig.edges / s, sig.values, sig.offset)
    return KernelModel(h2, c2, s2, model.lipschitz_bound_c * s, model.sigma_sup)


# --------------------------------------------------------------------------
# operations


def rho_eval(model, x):
    """rho(x) for a model (or a bare kernel h).

    Closed form for built-in h; adaptive Simpson quadrature (abs tol 1e-10)
    over the overlap of supports for tabulated h.
    """
    h = model.h if isinstance(model, KernelModel) else model
    if h.rho is not None:
        return float(h.rho(float(x)))
    return rho_quadrature(h, float(x))


@dataclass(frozen=True)
class StepCovariance:
    """Increment covariance ``Sigma * dt`` of one Euler step and its factor.

    ``factor @ factor.T`` reproduces ``matrix`` up to the recorded relative
    ``jitter`` (in units of ``rho(0) * dt``) added to the diagonal.
    """

    matrix: np.ndarray
    factor: np.ndarray
    jitter: float

    def sample(self, rng, size=None):
        n = self.matrix.shape[0]
        if size is None:
            return self.factor @ rng.standard_normal(n)
        return rng.standard_normal((size, n)) @ self.factor.T


def jittered_cholesky(matrix, scale, schedule=JITTER_SCHEDULE):
    """Lower Cholesky factor of a symmetric PSD matrix with diagonal jitter fallback.

    Tries each relative jitter in ``schedule`` (times ``scale``) in turn and
    returns ``(factor, jitter)``.  Never projects eigenvalues: if every level
    fails, raises :class:`FactorizationError` with the smallest eigenvalue.
    """
    n = matrix.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    off = matrix - np.diag(np.diag(matrix))
    if not np.any(off):
        d = np.diag(matrix)
        if np.all(d >= 0):
            return np.diag(np.sqrt(d)), 0.0
    eye = np.eye(n)
    for jit in schedule:
        try:
            return np.linalg.cholesky(matrix + (jit * scale) * eye), jit
        except np.linalg.LinAlgError:
            continue
    lam = float(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0])
    raise FactorizationError(
        f"step covariance is not positive semidefinite: smallest eigenvalue {lam:.3e} "
        f"(max jitter {schedule[-1]:.0e} x scale {scale:.3e}); check the rho table",
        lam,
    )


def step_covariance(model, positions, dt):
    """Increment covariance ``Sigma * dt`` of the particles at ``positions``.

    ``Sigma[i, i] = a(x_i)`` and ``Sigma[i, j] = rho(x_i - x_j)``.
    """
    x = _as_float_array(positions).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("positions must be finite")
    if not dt > 0:
        raise ValueError("dt must be positive")
    diff = x[:, None] - x[None, :]
    sigma = model.rho(diff)
    cx = model.c(x)
    sigma[np.diag_indices_from(sigma)] = cx * cx + model.rho0
    sigma = 0.5 * (sigma + sigma.T) * dt
    factor, jit = jittered_cholesky(sigma, model.rho0 * dt)
    return StepCovariance(sigma, factor, jit)


# --------------------------------------------------------------------------
# construction from plain dicts

_H_KINDS = {"zero": ZeroKernel, "gaussian": GaussianKernel, "box": BoxKernel, "tabulated": TabulatedKernel}
_C_KINDS = {"constant": ConstantCoefficient, "affine-clamped": AffineClampedCoefficient}
_SIGMA_KINDS = {
    "constant": ConstantDensity,
    "bump": BumpDensity,
    "step": StepDensity,
    "tabulated": TabulatedDensity,
    "binned": BinnedDensity,
    "piecewise": PiecewiseDensity,
}


def _build(table, spec, what):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in table:
        raise ValueError(f"unknown {what} kind {kind!r}; choose from {sorted(table)}")
    try:
        return table[kind](**spec)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {what} {kind!r}: {exc}") from None


def model_from_spec(spec):
    """KernelModel from ``{"h": {...}, "c": {...}, "sigma": {...}}`` as written by ``KernelModel.spec``."""
    h = _build(_H_KINDS, spec.get("h", {"kind": "zero"}), "h")
    c = _build(_C_KINDS, spec.get("c", {"kind": "constant", "value": 1.0}), "c")
    sigma = _build(_SIGMA_KINDS, spec.get("sigma", {"kind": "constant", "value": 1.0}), "sigma")
    return KernelModel(h, c, sigma, spec.get("lipschitz_bound_c"), spec.get("sigma_sup"))
