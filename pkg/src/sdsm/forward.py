"""The interacting-branching particle system.

Particles of mass ``1/theta`` diffuse with the correlated increments of
:func:`sdsm.kernels.step_covariance` and branch at total rate
``gamma theta^2 min(theta, N / theta)``; a branching particle at ``x`` is
replaced by ``j`` copies with probability ``p_j(x)``.

Two engines share this contract.  ``"reference"`` is the literal numpy
version (dense factorization per Euler step, one :func:`diffuse` call between
consecutive events).  ``"fast"`` is the compiled loop in :mod:`sdsm._engine`,
which keeps the exact branching clock but lets events fall inside Euler steps
of a fixed grid.  Both freeze coefficients at the start of each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _engine
from .kernels import ConstantDensity, FactorizationError, KernelModel, PiecewiseDensity, step_covariance

__all__ = [
    "ParticleEnsemble",
    "BinaryCritical",
    "Lemma43Law",
    "CustomTableLaw",
    "PopulationExplosion",
    "ForwardConfig",
    "Trajectory",
    "lemma43_offspring",
    "branching_rate",
    "diffuse",
    "branch_once",
    "run_forward",
    "empirical_moment",
    "martingale_diagnostics",
    "law_from_spec",
    "ForwardBatch",
    "simulate_replicates",
    "estimate_forward_moment",
    "FORWARD_STREAM",
]


class PopulationExplosion(RuntimeError):
    """Population exceeded the configured cap."""


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    theta: float
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).ravel()
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if not np.all(np.isfinite(pos)):
            raise ValueError("particle positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self):
        return int(self.positions.size)

    @property
    def mass(self):
        return self.n / self.theta

    def pair(self, phi):
        """<phi, mu> for the empirical measure."""
        if self.n == 0:
            return 0.0
        return float(np.sum(phi(self.positions)) / self.theta)


# --------------------------------------------------------------------------
# offspring laws


def lemma43_offspring(k, sigma_at_x):
    """Offspring law on {0, 2, k} with mean 1 and sigma_p = sqrt(k) sigma + 1.

    Returns ``(p0, p2, pk, gamma_k)`` with ``gamma_k = 1/sqrt(k)``, so that
    ``gamma_k * sigma_p = sigma + 1/sqrt(k)``.
    """
    if int(k) != k or k < 3:
        raise ValueError("k must be an integer >= 3")
    if sigma_at_x < 0:
        raise ValueError("branching density must be non-negative")
    k = int(k)
    rk = math.sqrt(k)
    s = rk * sigma_at_x + 1.0
    p0 = (s + k - 1.0) / (2.0 * k)
    p2 = (k - 1.0 - s) / (2.0 * (k - 2.0))
    pk = (s - 1.0) / (k * (k - 2.0))
    if min(p0, p2, pk) < -1e-15:
        need = _min_feasible_k(sigma_at_x)
        raise ValueError(
            f"offspring probabilities negative for k={k}, sigma={sigma_at_x}; "
            f"use k >= {need} (needs sigma <= (k-2)/sqrt(k))"
        )
    return max(p0, 0.0), max(p2, 0.0), max(pk, 0.0), 1.0 / rk


def _min_feasible_k(sigma):
    k = 3
    while (k - 2.0) / math.sqrt(k) < sigma:
        k += 1
    return k


def _check_critical(support, probs, where):
    support = np.asarray(support)
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0):
        raise ValueError(f"negative offspring probability {where}")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"offspring probabilities sum to {probs.sum()!r} {where}")
    if np.any((support == 1) & (probs > 0)):
        raise ValueError(f"p1 must vanish {where}")
    if abs(np.dot(support, probs) - 1.0) > 1e-12:
        raise ValueError(f"offspring mean {np.dot(support, probs)!r} != 1 {where}")


@dataclass(frozen=True)
class BinaryCritical:
    """p0 = p2 = 1/2 everywhere; sigma_p = 1."""

    gamma: float = 1.0
    kind = "binary-critical"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    def probabilities(self, x, model=None):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([0, 2]), np.full((x.size, 2), 0.5)

    def sigma_p(self, x, model=None):
        return np.ones_like(np.asarray(x, dtype=float))

    def effective_sigma(self, model):
        return ConstantDensity(self.gamma)

    def validate(self, model):
        pass

    def engine_params(self, model):
        return np.int64(0), np.zeros(1)

    def spec(self):
        return {"kind": self.kind, "gamma": self.gamma}


@dataclass(frozen=True)
class Lemma43Law:
    """Three-point law on {0, 2, k} realizing sigma_p = sqrt(k) sigma(x) + 1.

    The clock constant is forced to ``1/sqrt(k)``; the particle system then
    branches with effective density ``sigma(x) + 1/sqrt(k)``.
    """

    k: int = 9
    kind = "lemma43"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 3:
            raise ValueError("k must be an integer >= 3")

    @property
    def gamma(self):
        return 1.0 / math.sqrt(self.k)

    def probabilities(self, x, model):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        sig = model.sigma(x)
        s = math.sqrt(self.k) * sig + 1.0
        k = float(self.k)
        p = np.stack([(s + k - 1.0) / (2.0 * k), (k - 1.0 - s) / (2.0 * (k - 2.0)), (s - 1.0) / (k * (k - 2.0))], axis=1)
        return np.array([0, 2, self.k]), p

    def sigma_p(self, x, model):
        return math.sqrt(self.k) * model.sigma(np.asarray(x, dtype=float)) + 1.0

    def effective_sigma(self, model):
        return model.with_sigma_offset(1.0 / math.sqrt(self.k)).sigma

    def validate(self, model):
        if model.sigma_sup > (self.k - 2.0) / math.sqrt(self.k) + 1e-12:
            raise ValueError(
                f"k={self.k} too small for sigma sup {model.sigma_sup}; "
                f"use k >= {_min_feasible_k(model.sigma_sup)}"
            )

    def engine_params(self, model):
        return np.int64(1), np.array([float(self.k)])

    def spec(self):
        return {"kind": self.kind, "k": self.k}


def _alias_table(p):
    """Vose alias table for one probability row."""
    S = p.size
    prob = np.zeros(S)
    alias = np.zeros(S, dtype=np.int64)
    scaled = p * S
    small = [i for i in range(S) if scaled[i] < 1.0]
    large = [i for i in range(S) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@dataclass(frozen=True, eq=False)
class CustomTableLaw:
    """Offspring table, optionally piecewise constant in space.

    ``probs[r]`` is the law on the region ``(edges[r-1], edges[r]]``.  Each
    row must be critical with ``p1 = 0``.  Rows with more than 8 support points
    are sampled by alias tables, shorter ones by inverse CDF.
    """

    support: tuple
    probs: np.ndarray
    edges: tuple = ()
    gamma: float = 1.0
    kind = "custom-table"

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.int64)
        p = np.atleast_2d(np.asarray(self.probs, dtype=float))
        e = np.asarray(self.edges, dtype=float).ravel()
        if p.shape != (e.size + 1, sup.size):
            raise ValueError("probs must have one row per region and one column per support point")
        if np.any(sup < 0) or np.any(np.diff(e) <= 0):
            raise ValueError("support must be non-negative and edges increasing")
        for r in range(p.shape[0]):
            _check_critical(sup, p[r], f"in region {r}")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "edges", e)

    def _region(self, x):
        return np.searchsorted(self.edges, np.atleast_1d(np.asarray(x, dtype=float)), side="left")

    def probabilities(self, x, model=None):
        return self.support, self.probs[self._region(x)]

    def sigma_p(self, x, model=None):
        sp = self.probs @ (self.support.astype(float) ** 2) - 1.0
        return sp[self._region(x)]

    def effective_sigma(self, model):
        sp = self.gamma * (self.probs @ (self.support.astype(float) ** 2) - 1.0)
        if self.edges.size == 0:
            return ConstantDensity(float(sp[0]))
        return PiecewiseDensity(self.edges, sp)

    def validate(self, model):
        pass

    def engine_params(self, model):
        R, S = self.probs.shape
        use_alias = S > 8
        cdf = np.cumsum(self.probs, axis=1)
        aprob = np.zeros((R, S))
        aidx = np.zeros((R, S))
        if use_alias:
            for r in range(R):
                aprob[r], aidx[r] = _alias_table(self.probs[r])
        lp = np.concatenate(
            [[R, S, 1.0 if use_alias else 0.0], self.edges, self.support.astype(float), cdf.ravel(), aprob.ravel(), aidx.ravel()]
        )
        return np.int64(2), lp

    def spec(self):
        return {
            "kind": self.kind,
            "support": self.support.tolist(),
            "probs": self.probs.tolist(),
            "edges": self.edges.tolist(),
            "gamma": self.gamma,
        }


def law_from_spec(spec):
    spec = dict(spec)
    kind = spec.pop("kind", "binary-critical")
    if kind == "binary-critical":
        return BinaryCritical(**spec)
    if kind == "lemma43":
        return Lemma43Law(**spec)
    if kind == "custom-table":
        return CustomTableLaw(tuple(spec["support"]), spec["probs"], tuple(spec.get("edges", ())), spec.get("gamma", 1.0))
    raise ValueError(f"unknown offspring law {kind!r}")


# --------------------------------------------------------------------------
# elementary operations (reference semantics)


def branching_rate(ensemble, gamma, truncation=None):
    """Total branching rate ``gamma theta^2 min(L, N / theta)`` with L = theta by default."""
    theta = ensemble.theta
    level = theta if truncation is None else truncation
    return gamma * theta * theta * min(level, ensemble.n / theta)


def diffuse(ensemble, model, duration, dt_max, rng):
    """Advance positions by ``ceil(duration / dt_max)`` equal Euler steps (no branching)."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    if ensemble.n == 0:
        return replace(ensemble, time=ensemble.time + duration)
    nsteps = max(1, math.ceil(duration / dt_max - 1e-9))
    dt = duration / nsteps
    x = ensemble.positions.copy()
    for _ in range(nsteps):
        cov = step_covariance(model, x, dt)
        x = x + cov.factor @ rng.standard_normal(x.size)
    return ParticleEnsemble(ensemble.theta, x, ensemble.time + duration)


def branch_once(ensemble, law, rng, model=None):
    """Replace a uniformly chosen particle by j copies drawn from the law at its site."""
    if ensemble.n == 0:
        raise ValueError("branch_once needs at least one particle")
    i = int(rng.integers(ensemble.n))
    x = ensemble.positions[i]
    support, probs = law.probabilities(x, model)
    j = int(support[rng.choice(support.size, p=probs[0])])
    pos = np.concatenate([ensemble.positions[:i], np.full(j, x), ensemble.positions[i + 1 :]])
    return ParticleEnsemble(ensemble.theta, pos, ensemble.time)


# --------------------------------------------------------------------------
# full runs


@dataclass(frozen=True, eq=False)
class ForwardConfig:
    model: KernelModel
    law: object
    theta: float
    initial: object
    snapshots: tuple = (1.0,)
    dt_max: float = 1e-3
    population_cap: int = 10**6
    truncation_level: float | None = None
    engine: str = "fast"

    def __post_init__(self):
        snaps = tuple(sorted(float(s) for s in self.snapshots))
        if any(s < 0 for s in snaps):
            raise ValueError("snapshot times must be non-negative")
        if self.theta <= 0 or self.dt_max <= 0:
            raise ValueError("theta and dt_max must be positive")
        if self.engine not in ("fast", "reference"):
            raise ValueError(f"unknown engine {self.engine!r}")
        object.__setattr__(self, "snapshots", snaps)
        self.law.validate(self.model)

    @property
    def truncation(self):
        return self.theta if self.truncation_level is None else float(self.truncation_level)


@dataclass(eq=False)
class Trajectory:
    snapshots: list
    max_population: int = 0
    truncated: bool = False
    n_events: int = 0

    @property
    def times(self):
        return [s.time for s in self.snapshots]


def run_forward(config, horizon, rng, initial_positions=None):
    """Simulate one replicate and return its snapshots up to ``horizon``."""
    times = np.array([s for s in config.snapshots if s <= horizon + 1e-12], dtype=float)
    x0 = config.initial.particles(config.theta, rng) if initial_positions is None else np.asarray(initial_positions, float)
    if config.engine == "reference":
        return _run_reference(config, times, x0, rng)
    return _run_fast(config, times, x0, rng)


def _run_fast(config, times, x0, rng):
    model, law = config.model, config.law
    rk, rp, hp, ck, cp, sk, sp, soff = model.engine_args
    lk, lp = law.engine_params(model)
    status, flat, counts, max_n, truncated, n_events = _engine.forward_kernel(
        np.ascontiguousarray(x0, dtype=float),
        float(config.theta),
        float(law.gamma),
        float(config.truncation),
        lk,
        lp,
        rk,
        rp,
        hp,
        ck,
        cp,
        sk,
        sp,
        soff,
        times,
        float(config.dt_max),
        int(config.population_cap),
        rng,
    )
    _raise_status(status, max_n, config)
    snaps = []
    start = 0
    for t, c in zip(times, counts):
        snaps.append(ParticleEnsemble(config.theta, flat[start : start + c], float(t)))
        start += c
    return Trajectory(snaps, int(max_n), bool(truncated), int(n_events))


def _raise_status(status, max_n, config):
    if status == _engine.OK:
        return
    if status == _engine.ERR_POPULATION:
        raise PopulationExplosion(
            f"population reached {max_n} > cap {config.population_cap}; check that the offspring law is critical"
        )
    if status == _engine.ERR_FACTOR:
        raise FactorizationError("common-noise covariance is not positive semidefinite; check the rho table", float("nan"))
    raise ValueError("offspring law produced negative probabilities; use a larger k")


def _run_reference(config, times, x0, rng):
    model, law = config.model, config.law
    ens = ParticleEnsemble(config.theta, x0, 0.0)
    gamma, level = law.gamma, config.truncation

    def next_clock(e):
        r = branching_rate(e, gamma, level)
        return e.time + rng.standard_exponential() / r if r > 0 else math.inf

    snaps = []
    max_n, truncated, n_events = ens.n, ens.mass > level, 0
    t_event = next_clock(ens)
    for target in times:
        while t_event < target:
            if t_event > ens.time:
                ens = diffuse(ens, model, t_event - ens.time, config.dt_max, rng)
            ens = replace(ens, time=t_event)
            ens = branch_once(ens, law, rng, model)
            n_events += 1
            if ens.n > config.population_cap:
                raise PopulationExplosion(f"population reached {ens.n} > cap {config.population_cap}")
            max_n = max(max_n, ens.n)
            truncated = truncated or ens.mass > level
            t_event = next_clock(ens)
        if target > ens.time:
            ens = diffuse(ens, model, target - ens.time, config.dt_max, rng)
        ens = replace(ens, time=float(target))
        snaps.append(ens)
    return Trajectory(snaps, max_n, truncated, n_events)


# --------------------------------------------------------------------------
# functionals of a snapshot


def empirical_moment(snapshot, f, m=None, rng=None, max_terms=1e8, subsample=10**6, moment_cap=4, return_stderr=False):
    """theta^{-m} sum over all m-tuples (with repetition) of f at the tuple.

    Factorized built-ins reduce to products of one-dimensional sums.  General
    f is summed exactly while N^m <= ``max_terms`` and estimated from uniformly
    sub-sampled tuples beyond that (the standard error is then non-zero).
    """
    m = f.m if m is None else int(m)
    if m < 1 or m > moment_cap:
        raise ValueError(f"moment order m={m} outside 1..{moment_cap}")
    x, theta, n = snapshot.positions, snapshot.theta, snapshot.n
    terms = f.product_terms() if hasattr(f, "product_terms") else None
    value, se = None, 0.0
    if n == 0:
        value = 0.0
    elif terms is not None:
        value = 0.0
        for coef, factors in terms:
            prod = coef
            for phi in factors:
                prod *= float(np.sum(phi(x))) / theta
            value += prod
    elif float(n) ** m <= max_terms:
        value = 0.0
        for block in _tuple_blocks(n, m):
            value += float(np.sum(f(x[block])))
        value /= theta**m
    else:
        if rng is None:
            raise ValueError("sub-sampled moment needs an rng")
        idx = rng.integers(n, size=(int(subsample), m))
        vals = f(x[idx]) * (n / theta) ** m
        value = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
    return (value, se) if return_stderr else value


def _tuple_blocks(n, m, block=2**20):
    """Index arrays of shape (k, m) enumerating all n^m tuples in chunks."""
    if m <= 2:
        grids = np.meshgrid(*([np.arange(n)] * m), indexing="ij")
        yield np.stack([g.ravel() for g in grids], axis=1)
        return
    rows_per = max(1, block // n ** (m - 1))
    tail = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(n)] * (m - 1)), indexing="ij")], axis=1)
    for start in range(0, n, rows_per):
        heads = np.arange(start, min(n, start + rows_per))
        yield np.concatenate([np.repeat(heads, tail.shape[0])[:, None], np.tile(tail, (heads.size, 1))], axis=1)


def _sheet_term(model, x, w, dphi, nodes=2001):
    """int dz (sum_i w_i h(z - x_i) phi'(x_i))^2 by quadrature over the support of h."""
    lo, hi = model.h.support
    if hi <= lo or x.size == 0:
        return 0.0
    z = np.linspace(x.min() + lo, x.max() + hi, nodes)
    g = (w * dphi) @ model.h(z[None, :] - x[:, None])
    return float(np.trapezoid(g * g, z))


def _sheet_term_rho(model, x, w, dphi):
    v = w * dphi
    return float(v @ model.rho(x[:, None] - x[None, :]) @ v)


def martingale_diagnostics(trajectories, phi, model, law, truncation=None, sheet_nodes=2001):
    """Martingale-problem checks for ``M_t(phi) = <phi, w_t> - <phi, w_0> - int <a phi''/2, w_s> ds``.

    Returns a dict with the mean of the terminal martingale value and its
    z-score, and the ratio of the realized quadratic variation on the snapshot
    grid to the predicted one.  The prediction is the limiting form
    ``int <sigma phi^2, w> ds + int ds int <h(z - .) phi', w>^2 dz`` plus the
    finite-theta corrections of the particle system: the individual-noise term
    ``(1/theta) <c^2 phi'^2, w>`` and the truncation factor on branching.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    times = np.array(trajectories[0].times)
    if times.size < 2:
        raise ValueError("need at least two snapshots")
    sig_eff = law.effective_sigma(model)
    terminal, realized, predicted, predicted_limit = [], [], [], []
    for traj in trajectories:
        if not np.allclose(traj.times, times):
            raise ValueError("trajectories must share a snapshot grid")
        vals, drift, qv, qv_lim = [], [], [], []
        for s in traj.snapshots:
            x, theta = s.positions, s.theta
            w = np.full(x.size, 1.0 / theta)
            vals.append(s.pair(phi))
            drift.append(0.5 * s.pair(lambda y: model.a(y) * phi.d2(y)))
            if x.size == 0:
                qv.append(0.0)
                qv_lim.append(0.0)
                continue
            d1 = phi.d1(x)
            sheet = _sheet_term(model, x, w, d1, sheet_nodes)
            branch = s.pair(lambda y: sig_eff(y) * phi(y) ** 2)
            level = theta if truncation is None else truncation
            factor = min(level * theta, x.size) / x.size
            indiv = s.pair(lambda y: model.c(y) ** 2 * phi.d1(y) ** 2) / theta
            qv_lim.append(branch + sheet)
            qv.append(factor * branch + sheet + indiv)
        vals, drift = np.array(vals), np.array(drift)
        comp = np.concatenate([[0.0], np.cumsum(0.5 * (drift[1:] + drift[:-1]) * np.diff(times))])
        mart = vals - vals[0] - comp
        terminal.append(mart[-1])
        realized.append(float(np.sum(np.diff(mart) ** 2)))
        predicted.append(float(np.trapezoid(qv, times)))
        predicted_limit.append(float(np.trapezoid(qv_lim, times)))
    terminal = np.array(terminal)
    realized, predicted = np.array(realized), np.array(predicted)
    n = terminal.size
    mean = float(terminal.mean())
    se = float(terminal.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    ratio = float(realized.mean() / predicted.mean()) if predicted.mean() > 0 else math.nan
    # delta-method SE for a ratio of means
    if n > 1 and predicted.mean() > 0:
        cov = np.cov(realized, predicted)
        rm, pm = realized.mean(), predicted.mean()
        var = (cov[0, 0] / pm**2 - 2 * rm * cov[0, 1] / pm**3 + rm**2 * cov[1, 1] / pm**4) / n
        ratio_se = float(math.sqrt(max(var, 0.0)))
    else:
        ratio_se = math.inf
    return {
        "replicates": n,
        "martingale_mean": mean,
        "martingale_se": se,
        "martingale_z": mean / se if se > 0 else math.nan,
        "qv_realized": float(realized.mean()),
        "qv_predicted": float(predicted.mean()),
        "qv_predicted_limit": float(np.mean(predicted_limit)),
        "qv_ratio": ratio,
        "qv_ratio_se": ratio_se,
    }


# --------------------------------------------------------------------------
# replicate batches

FORWARD_STREAM = 1


@dataclass(eq=False)
class ForwardBatch:
    """Per-replicate snapshot summaries of a batch of forward runs.

    ``rows[r]`` lists ``(time, n_particles, mass, [moment values])`` for each
    snapshot of replicate ``r``.
    """

    rows: list
    truncated: list
    max_population: list

    @property
    def any_truncated(self):
        return any(self.truncated)

    def column(self, snapshot_index, moment_index):
        return np.array([rep[snapshot_index][3][moment_index] for rep in self.rows])

    def masses(self, snapshot_index):
        return np.array([rep[snapshot_index][2] for rep in self.rows])


def _forward_task(rng, index, config, horizon, functionals, transform):
    traj = run_forward(config, horizon, rng)
    rows = []
    for snap in traj.snapshots:
        if transform is not None:
            snap = transform(snap)
        vals = [empirical_moment(snap, f, rng=rng) for f in functionals]
        rows.append((snap.time, snap.n, snap.mass, vals))
    return rows, traj.truncated, traj.max_population


def simulate_replicates(config, functionals, replicates, seed, key=(), workers=None, horizon=None, transform=None):
    """Run independent replicates; replicate i uses stream (seed, FORWARD_STREAM, *key, i).

    ``transform`` (a picklable callable on snapshots) is applied before the
    functionals are evaluated.
    """
    from .streams import map_replicates

    horizon = max(config.snapshots) if horizon is None else horizon
    out = map_replicates(
        _forward_task, replicates, seed, (FORWARD_STREAM, *key), workers, (config, horizon, list(functionals), transform)
    )
    return ForwardBatch([o[0] for o in out], [o[1] for o in out], [o[2] for o in out])


def estimate_forward_moment(config, f, t, replicates, seed, key=(), workers=None):
    """MomentEstimate of E<f, X_t^m> from ``replicates`` forward runs."""
    from .oracles import MomentEstimate

    cfg = replace(config, snapshots=(float(t),))
    batch = simulate_replicates(cfg, [f], replicates, seed, key, workers)
    est = MomentEstimate.from_samples(batch.column(0, 0), {"side": "forward", "truncated": batch.any_truncated})
    return est, batch
