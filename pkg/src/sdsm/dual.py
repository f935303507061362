"""Coalescent dual: Kingman level process, duplication maps and the moment estimator.

One replicate of :func:`estimate_dual_moment` samples a coalescent path with
jumps ``tau_1 < ... < tau_k`` before ``t``, draws ``m - k`` points from the
normalized initial measure, and walks the path from its last jump back to time
zero: the points diffuse under the interacting motion for ``t - tau_k``, the
recorded pair expands them by one (duplicating the last point), they diffuse
for ``tau_k - tau_{k-1}``, and so on.  The replicate value is

    f(points) * <1, mu>^(m - k) * prod sigma(duplicated points)
              * exp(1/2 int_0^t M_s (M_s - 1) ds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .forward import ParticleEnsemble, _raise_status, diffuse
from .oracles import MomentEstimate
from .streams import map_replicates

__all__ = [
    "CoalescentPath",
    "DualReplicate",
    "sample_coalescent",
    "expand_points",
    "dual_replicate",
    "estimate_dual_moment",
    "dual_moment_bound",
    "DUAL_STREAM",
]

DUAL_STREAM = 2


@dataclass(frozen=True, eq=False)
class CoalescentPath:
    m0: int
    jump_times: np.ndarray
    pairs: tuple
    horizon: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        if self.m0 < 1 or jt.size > self.m0 - 1 or len(self.pairs) != jt.size:
            raise ValueError("inconsistent coalescent path")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] >= self.horizon):
            raise ValueError("jump times must increase strictly inside (0, horizon)")
        for r, (i, j) in enumerate(self.pairs):
            level = self.m0 - r
            if not (1 <= i <= level and 1 <= j <= level and i != j):
                raise ValueError(f"pair {(i, j)} invalid at level {level}")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))

    @property
    def n_jumps(self):
        return int(self.jump_times.size)

    @property
    def terminal_level(self):
        return self.m0 - self.n_jumps

    def segments(self):
        """[(start, end, level), ...] covering [0, horizon]."""
        edges = np.concatenate([[0.0], self.jump_times, [self.horizon]])
        return [(float(edges[r]), float(edges[r + 1]), self.m0 - r) for r in range(edges.size - 1)]

    def log_weight(self):
        """(1/2) int_0^t M_s (M_s - 1) ds."""
        return 0.5 * sum(l * (l - 1) * (b - a) for a, b, l in self.segments())

    def exp_weight(self):
        return math.exp(self.log_weight())

    def swapped(self):
        """The same path with every ordered pair reversed."""
        return CoalescentPath(self.m0, self.jump_times, tuple((j, i) for i, j in self.pairs), self.horizon)


@dataclass(eq=False)
class DualReplicate:
    points: np.ndarray
    weight: float


def sample_coalescent(m, t, rng):
    """Kingman level process from level m, stopped at t, with uniform ordered pairs."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not t > 0:
        raise ValueError("t must be positive")
    times, pairs = [], []
    level, s = m, 0.0
    while level > 1:
        s += rng.standard_exponential() / (0.5 * level * (level - 1))
        if s >= t:
            break
        i = int(rng.integers(1, level + 1))
        j = int(rng.integers(1, level))
        if j >= i:
            j += 1
        times.append(s)
        pairs.append((i, j))
        level -= 1
    return CoalescentPath(m, np.array(times), tuple(pairs), float(t))


def expand_points(points, pair):
    """Put the last point in slots i and j (1-based) and the rest, in order, elsewhere.

    Returns ``(expanded, duplicated_value)``.
    """
    pts = np.asarray(points, dtype=float)
    level = pts.size + 1
    i, j = pair
    if not (1 <= i <= level and 1 <= j <= level and i != j):
        raise IndexError(f"pair {pair} out of range for {level} slots")
    dup = pts[-1]
    out = np.empty(level)
    mask = np.ones(level, dtype=bool)
    mask[[i - 1, j - 1]] = False
    out[~mask] = dup
    out[mask] = pts[:-1]
    return out, float(dup)


def _diffuse_points(model, points, duration, dt_max, rng, engine):
    if duration <= 0.0 or points.size == 0:
        return points
    if engine == "reference":
        return diffuse(ParticleEnsemble(1.0, points), model, duration, dt_max, rng).positions
    rk, rp, hp, ck, cp = model.engine_args[:5]
    status, out = _engine.diffuse_points(points, float(duration), float(dt_max), rk, rp, hp, ck, cp, rng)
    _raise_status(status, 0, None)
    return out


def dual_replicate(model, f, m, mu, t, dt_max, rng, path=None, engine="fast"):
    """One draw of the dual estimator; returns (value, path)."""
    if path is None:
        path = sample_coalescent(m, t, rng)
    mass = mu.mass
    n = path.terminal_level
    state = DualReplicate(np.asarray(mu.sample(n, rng), dtype=float), mass**n)
    clock = t
    for r in range(path.n_jumps - 1, -1, -1):
        tau = path.jump_times[r]
        state.points = _diffuse_points(model, state.points, clock - tau, dt_max, rng, engine)
        state.points, dup = expand_points(state.points, path.pairs[r])
        state.weight *= float(model.sigma(dup))
        clock = tau
        if state.weight == 0.0:
            # the remaining legs cannot change a zero value
            return 0.0, path
    state.points = _diffuse_points(model, state.points, clock, dt_max, rng, engine)
    value = float(f(state.points)) * state.weight * path.exp_weight()
    return value, path


def _dual_task(rng, index, model, f, m, mu, t, dt_max, engine):
    return dual_replicate(model, f, m, mu, t, dt_max, rng, engine=engine)[0]


def estimate_dual_moment(model, f, m, mu, t, replicates, dt_max=1e-3, seed=0, key=(), workers=None, engine="fast"):
    """Monte Carlo estimate of the dual side of the moment identity.

    Replicate ``i`` draws from the stream ``(seed, DUAL_STREAM, *key, i)``.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    if mu.mass <= 0:
        raise ValueError("initial measure must have positive mass")
    if getattr(f, "m", m) != m:
        raise ValueError(f"f takes {f.m} variables, m = {m}")
    values = map_replicates(
        _dual_task, replicates, seed, (DUAL_STREAM, *key), workers, (model, f, m, mu, t, dt_max, engine)
    )
    bound = dual_moment_bound(m, getattr(f, "sup", math.inf), model.sigma_sup, mu.mass)
    return MomentEstimate.from_samples(values, {"side": "dual", "bound": bound, "m": m, "t": t})


def dual_moment_bound(m, f_sup, sigma_sup, mass):
    """||f|| sum_{k<m} 2^-k m^k (m-1)^k ||sigma||^k <1, mu>^(m-k)."""
    for v in (f_sup, sigma_sup, mass):
        if v < 0:
            raise ValueError("bound arguments must be non-negative")
    if m < 1:
        raise ValueError("m must be >= 1")
    total = sum(2.0**-k * m**k * (m - 1) ** k * sigma_sup**k * mass ** (m - k) for k in range(m))
    return f_sup * total
