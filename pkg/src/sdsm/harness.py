"""Experiment orchestration: two-sided duality checks, the total-mass law,
the diffusive rescaling experiment and report files."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dual import dual_moment_bound, estimate_dual_moment
from .forward import ForwardConfig, ParticleEnsemble, estimate_forward_moment, simulate_replicates
from .functionals import TensorF
from .oracles import MomentEstimate, laplace_mass, sbm_moments

__all__ = [
    "Z_THRESHOLD",
    "TruncationWarning",
    "DualityReport",
    "duality_check",
    "rescale_transform",
    "Rescale",
    "RescaleRow",
    "rescaling_experiment",
    "rescaling_trend",
    "mass_check",
    "config_hash",
    "run_report",
]

Z_THRESHOLD = 3.0


class TruncationWarning(UserWarning):
    """The branching-rate truncation was active in at least one forward replicate."""


# --------------------------------------------------------------------------
# duality


@dataclass
class DualityReport:
    forward: MomentEstimate
    dual: MomentEstimate
    bound: float
    truncated: bool

    @property
    def z(self):
        return self.forward.z_against(self.dual)

    @property
    def passed(self):
        return abs(self.z) <= Z_THRESHOLD

    def row(self):
        return {
            "forward": self.forward.value,
            "forward_stderr": self.forward.stderr,
            "forward_n": self.forward.n,
            "dual": self.dual.value,
            "dual_stderr": self.dual.stderr,
            "dual_n": self.dual.n,
            "z": self.z,
            "bound": self.bound,
            "truncated": int(self.truncated),
        }


def duality_check(forward_config, f, m, t, forward_replicates, dual_replicates, seed, key=(), workers=None):
    """Compare forward and dual estimates of E<f, X_t^m> under identical inputs.

    The dual side runs with the forward system's effective branching density
    (``gamma * sigma_p``), the same initial measure and the same ``dt_max``.
    """
    model, law = forward_config.model, forward_config.law
    dual_model = model.with_sigma(law.effective_sigma(model))
    fwd, batch = estimate_forward_moment(forward_config, f, t, forward_replicates, seed, key, workers)
    dual = estimate_dual_moment(
        dual_model, f, m, forward_config.initial, t, dual_replicates, forward_config.dt_max, seed, key, workers
    )
    bound = dual_moment_bound(m, getattr(f, "sup", math.inf), dual_model.sigma_sup, forward_config.initial.mass)
    if batch.any_truncated:
        warnings.warn(
            f"branching truncation active in {sum(batch.truncated)} of {len(batch.truncated)} forward replicates "
            f"at theta={forward_config.theta}; the forward side is biased relative to the limit",
            TruncationWarning,
            stacklevel=2,
        )
    return DualityReport(fwd, dual, bound, batch.any_truncated)


# --------------------------------------------------------------------------
# rescaling


def rescale_transform(snapshot, theta_scale):
    """Space contraction x -> x / s with mass unit theta * s^2 and time t / s^2."""
    if not theta_scale > 0:
        raise ValueError("theta_scale must be positive")
    s = float(theta_scale)
    return ParticleEnsemble(snapshot.theta * s * s, snapshot.positions / s, snapshot.time / (s * s))


@dataclass(frozen=True)
class Rescale:
    """Picklable wrapper of :func:`rescale_transform` for replicate workers."""

    theta_scale: float

    def __call__(self, snapshot):
        return rescale_transform(snapshot, self.theta_scale)


@dataclass
class RescaleRow:
    theta: float
    first: MomentEstimate
    second: MomentEstimate
    oracle_first: float
    oracle_second: float
    truncated: bool = False

    @property
    def deviation(self):
        return self.second.value - self.oracle_second

    @property
    def z_first(self):
        return self.first.z_against(self.oracle_first)

    @property
    def z_second(self):
        return self.second.z_against(self.oracle_second)


def rescaling_experiment(
    model,
    law,
    mu,
    phi,
    t,
    theta_list,
    particles_per_mass,
    replicates,
    dt_max=1e-3,
    seed=0,
    workers=None,
    a_inf=None,
    sigma_inf=None,
    population_cap=10**6,
):
    """Moments of the rescaled system ``theta^-2 K_theta X_{theta^2 t}`` against super-Brownian motion.

    For each theta the original system starts from ``mu`` pushed forward by
    ``x -> theta x`` with mass multiplied by ``theta^2``, uses
    ``particles_per_mass / theta^2`` particles per unit mass (so the rescaled
    system has ``particles_per_mass``), and runs to ``theta^2 t`` with Euler
    step ``theta^2 dt_max``.  The truncation level is raised to
    ``particles_per_mass * theta^2`` so that it matches the rescaled system's
    own level.  Snapshots are mapped back with :func:`rescale_transform`.
    """
    if model.c.lower_bound() <= 0.0:
        raise ValueError("the rescaling limit needs |c| bounded away from zero")
    if a_inf is None:
        if not hasattr(model.c, "value"):
            raise ValueError("a_inf must be given when c has no single limit at infinity")
        a_inf = float(model.c.value) ** 2 + model.rho0
    if sigma_inf is None:
        sigma_inf = law.effective_sigma(model).limit
        if sigma_inf is None:
            raise ValueError("sigma_inf must be given when sigma has no single limit at infinity")
    oracle_first, oracle_second = sbm_moments(a_inf, sigma_inf, phi, mu, t)
    functionals = [TensorF((phi,)), TensorF((phi, phi))]
    rows = []
    for idx, theta in enumerate(theta_list):
        s2 = float(theta) ** 2
        cfg = ForwardConfig(
            model=model,
            law=law,
            theta=particles_per_mass / s2,
            initial=mu.scaled(theta, s2),
            snapshots=(s2 * t,),
            dt_max=s2 * dt_max,
            population_cap=population_cap,
            truncation_level=particles_per_mass * s2,
        )
        batch = simulate_replicates(cfg, functionals, replicates, seed, (idx,), workers, transform=Rescale(theta))
        meta = {"theta": theta, "side": "forward"}
        rows.append(
            RescaleRow(
                float(theta),
                MomentEstimate.from_samples(batch.column(0, 0), meta),
                MomentEstimate.from_samples(batch.column(0, 1), meta),
                oracle_first,
                oracle_second,
                batch.any_truncated,
            )
        )
    return rows


def rescaling_trend(rows, final_z=4.0):
    """Check that |deviation| is non-increasing in theta up to one SE-sized inversion.

    An inversion between consecutive rows is tolerated once if the increase is
    within the combined standard error of the two rows.  The last row must be
    within ``final_z`` standard errors of the oracle.
    """
    devs = [abs(r.deviation) for r in rows]
    ses = [r.second.stderr for r in rows]
    inversions = []
    for i in range(len(rows) - 1):
        rise = devs[i + 1] - devs[i]
        if rise > 0:
            inversions.append((i, rise, math.hypot(ses[i], ses[i + 1])))
    trend_ok = len(inversions) == 0 or (len(inversions) == 1 and inversions[0][1] <= inversions[0][2])
    final_ok = abs(rows[-1].z_second) <= final_z
    return {
        "trend_ok": trend_ok,
        "final_ok": final_ok,
        "passed": trend_ok and final_ok,
        "inversions": inversions,
        "deviations": [r.deviation for r in rows],
        "stderrs": ses,
    }


# --------------------------------------------------------------------------
# total mass


def mass_check(forward_config, sigma0, lambdas, times, replicates, seed, key=(), workers=None):
    """Empirical E exp(lambda <1, X_t>) against the Feller transform.

    Returns rows ``(t, lambda, MomentEstimate, oracle)``.  ``forward_config``
    must realize the constant effective density ``sigma0``.
    """
    eff = forward_config.law.effective_sigma(forward_config.model)
    if eff.limit is None or not np.allclose(eff(np.linspace(-50, 50, 201)), sigma0):
        raise ValueError(f"the forward law does not realize the constant density {sigma0}")
    cfg = replace(forward_config, snapshots=tuple(sorted(times)))
    batch = simulate_replicates(cfg, [], replicates, seed, key, workers)
    rows = []
    for si, t in enumerate(cfg.snapshots):
        masses = batch.masses(si)
        for lam in lambdas:
            est = MomentEstimate.from_samples(np.exp(lam * masses), {"t": t, "lambda": lam})
            rows.append((t, lam, est, laplace_mass(forward_config.initial.mass, sigma0, t, lam)))
    return rows, batch


# --------------------------------------------------------------------------
# reports


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def config_hash(config):
    """Git-style blob hash (sha1 of ``blob <len>\\0`` + canonical JSON) of a config."""
    data = _canonical(config).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)


def run_report(out_dir, config, seed, tables):
    """Write one CSV per non-empty table plus ``manifest.json``; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written, counts = [], {}
    for table in tables:
        counts[table.name] = len(table.rows)
        if not table.rows:
            continue
        path = os.path.join(out_dir, f"{table.name}.csv")
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(table.columns)
                for row in table.rows:
                    w.writerow([_fmt(row.get(c, "")) for c in table.columns])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "seed": int(seed),
        "row_counts": counts,
        "files": [os.path.basename(p) for p in written],
    }
    mpath = os.path.join(out_dir, "manifest.json")
    try:
        with open(mpath, "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=2, default=_json_default) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {mpath}: {exc}") from exc
    return written + [mpath]
