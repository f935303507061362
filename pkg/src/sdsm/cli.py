"""Command-line entry point: ``sdsm <subcommand> [--config FILE] [--set key=value] ...``.

Every subcommand writes CSV tables plus ``manifest.json`` into ``--out`` and
exits with 0 on success, 2 when a statistical check fails and 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import catalysts, config as cfgmod
from .dual import estimate_dual_moment
from .forward import ForwardConfig, law_from_spec, simulate_replicates
from .functionals import TensorF, f_from_spec, phi_from_spec
from .harness import (
    Z_THRESHOLD,
    Table,
    duality_check,
    mass_check,
    rescaling_experiment,
    rescaling_trend,
    run_report,
)
from .kernels import ConstantCoefficient, model_from_spec
from .measures import AtomMeasure, measure_from_spec
from .oracles import MomentEstimate, first_moment_no_interaction, sbm_moments

EXIT_OK, EXIT_ERROR, EXIT_STAT_FAIL = 0, 1, 2

CONTRACT = ["experiment_id", "estimate", "stderr", "n", "oracle", "z"]


def _columns(index, extra=()):
    return ["experiment_id", index] + CONTRACT[1:] + list(extra)


# --------------------------------------------------------------------------
# builders


def _model(cfg):
    return model_from_spec(cfg["kernel"])


def _forward_config(cfg, model=None, snapshots=None):
    fwd = cfg["forward"]
    return ForwardConfig(
        model=model or _model(cfg),
        law=law_from_spec(fwd["law"]),
        theta=float(fwd["theta"]),
        initial=measure_from_spec(cfg["initial_measure"]),
        snapshots=tuple(fwd["snapshots"] if snapshots is None else snapshots),
        dt_max=float(fwd["dt_max"]),
        population_cap=int(fwd["population_cap"]),
        truncation_level=fwd["truncation_level"],
        engine=fwd["engine"],
    )


def _estimate_row(est, oracle=None):
    row = {"estimate": est.value, "stderr": est.stderr, "n": est.n}
    if oracle is not None:
        row["oracle"] = oracle.value if isinstance(oracle, MomentEstimate) else oracle
        row["z"] = est.z_against(oracle)
    return row


def _print_table(table):
    print(f"[{table.name}]")
    print(",".join(table.columns))
    for row in table.rows:
        print(",".join("" if row.get(c, "") == "" else _short(row[c]) for c in table.columns))


def _short(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


# --------------------------------------------------------------------------
# subcommands; each returns (tables, passed)


def cmd_kernel_info(cfg):
    model = _model(cfg)
    ki = cfg["kernel_info"]
    xs = np.linspace(ki["x_min"], ki["x_max"], int(ki["points"]))
    rho = model.rho(xs)
    print(f"rho(0) = {model.rho0:.12g}")
    print(f"sigma sup = {model.sigma_sup:.12g}")
    print(f"c Lipschitz bound = {model.lipschitz_bound_c:.12g}")
    print(f"smooth = {model.smooth}")
    if not model.smooth:
        print("note: rho is not twice continuously differentiable for this h")
    eid = cfg["experiment_id"]
    rows = [{"experiment_id": eid, "x": float(x), "rho": float(r), "a": float(a)} for x, r, a in zip(xs, rho, model.a(xs))]
    return [Table("kernel_info", ["experiment_id", "x", "rho", "a"], rows)], True


def _first_moment_oracle(model, phi, mu, t):
    if not isinstance(model.c, ConstantCoefficient) or not isinstance(mu, AtomMeasure):
        return None
    return first_moment_no_interaction(model.c.value**2 + model.rho0, phi, mu, t)


def cmd_simulate_forward(cfg):
    fcfg = _forward_config(cfg)
    fwd = cfg["forward"]
    phi = phi_from_spec(fwd["phi"])
    batch = simulate_replicates(fcfg, [TensorF((phi,))], int(fwd["replicates"]), cfg["seed"], (), cfg["workers"], float(fwd["horizon"]))
    rows = []
    for si, t in enumerate(fcfg.snapshots):
        est = MomentEstimate.from_samples(batch.column(si, 0))
        mass = MomentEstimate.from_samples(batch.masses(si))
        row = {"experiment_id": cfg["experiment_id"], "time": t, "mass": mass.value, "mass_stderr": mass.stderr}
        row.update(_estimate_row(est, _first_moment_oracle(fcfg.model, phi, fcfg.initial, t)))
        row["truncated_replicates"] = int(sum(batch.truncated))
        rows.append(row)
    cols = _columns("time", ["mass", "mass_stderr", "truncated_replicates"])
    per_rep = [
        {"experiment_id": cfg["experiment_id"], "replicate": r, "time": t, "n_particles": n, "mass": mass, "phi": vals[0]}
        for r, rep in enumerate(batch.rows)
        for t, n, mass, vals in rep
    ]
    rep_cols = ["experiment_id", "replicate", "time", "n_particles", "mass", "phi"]
    return [Table("forward_moments", cols, rows), Table("forward_replicates", rep_cols, per_rep)], True


def cmd_estimate_dual(cfg):
    model = _model(cfg)
    d = cfg["dual"]
    f = f_from_spec(d["f"])
    mu = measure_from_spec(cfg["initial_measure"])
    est = estimate_dual_moment(
        model, f, int(d["m"]), mu, float(d["t"]), int(d["replicates"]), float(cfg["forward"]["dt_max"]),
        cfg["seed"], (), cfg["workers"], d["engine"],
    )
    row = {"experiment_id": cfg["experiment_id"], "time": float(d["t"]), "bound": est.meta["bound"]}
    row.update(_estimate_row(est))
    return [Table("dual_moment", _columns("time", ["bound"]), [row])], True


def cmd_check_duality(cfg):
    d = cfg["dual"]
    t = float(d["t"])
    fcfg = _forward_config(cfg, snapshots=(t,))
    rep = duality_check(
        fcfg, f_from_spec(d["f"]), int(d["m"]), t, int(cfg["forward"]["replicates"]), int(d["replicates"]),
        cfg["seed"], (), cfg["workers"],
    )
    row = {"experiment_id": cfg["experiment_id"], "time": t}
    row.update(_estimate_row(rep.forward, rep.dual))
    row.update({"oracle_stderr": rep.dual.stderr, "oracle_n": rep.dual.n, "bound": rep.bound, "truncated": int(rep.truncated)})
    cols = _columns("time", ["oracle_stderr", "oracle_n", "bound", "truncated"])
    print(f"duality z = {rep.z:.3f} ({'pass' if rep.passed else 'FAIL'} at |z| <= {Z_THRESHOLD})")
    return [Table("duality", cols, [row])], rep.passed


def cmd_check_mass(cfg):
    mc = cfg["mass_check"]
    fcfg = _forward_config(cfg, snapshots=tuple(mc["times"]))
    rows_raw, batch = mass_check(
        fcfg, float(mc["sigma0"]), mc["lambdas"], mc["times"], int(mc["replicates"]), cfg["seed"], (), cfg["workers"]
    )
    rows, passed = [], True
    for t, lam, est, oracle in rows_raw:
        row = {"experiment_id": cfg["experiment_id"], "time": t, "lambda": lam}
        row.update(_estimate_row(est, oracle))
        passed &= abs(row["z"]) <= Z_THRESHOLD
        rows.append(row)
    cols = ["experiment_id", "time", "lambda"] + CONTRACT[1:]
    return [Table("mass_check", cols, rows)], passed


def cmd_rescale_experiment(cfg):
    r = cfg["rescaling"]
    model = _model(cfg)
    law = law_from_spec(cfg["forward"]["law"])
    mu = measure_from_spec(cfg["initial_measure"])
    rows_raw = rescaling_experiment(
        model, law, mu, phi_from_spec(r["phi"]), float(r["t"]), r["theta_list"], float(r["particles_per_mass"]),
        int(r["replicates"]), float(r["dt_max"]), cfg["seed"], cfg["workers"], r["a_inf"], r["sigma_inf"],
        int(cfg["forward"]["population_cap"]),
    )
    trend = rescaling_trend(rows_raw, float(r["final_z"]))
    eid = cfg["experiment_id"]
    rows = []
    for row_raw in rows_raw:
        row = {"experiment_id": eid, "theta": row_raw.theta}
        row.update(_estimate_row(row_raw.second, row_raw.oracle_second))
        row.update(
            {
                "deviation": row_raw.deviation,
                "first_estimate": row_raw.first.value,
                "first_stderr": row_raw.first.stderr,
                "first_oracle": row_raw.oracle_first,
                "first_z": row_raw.z_first,
                "truncated": int(row_raw.truncated),
            }
        )
        rows.append(row)
    cols = _columns("theta", ["deviation", "first_estimate", "first_stderr", "first_oracle", "first_z", "truncated"])
    summary = {"experiment_id": eid, "trend_ok": trend["trend_ok"], "final_ok": trend["final_ok"], "passed": trend["passed"]}
    print(f"rescaling trend {'pass' if trend['passed'] else 'FAIL'}")
    return [
        Table("rescaling", cols, rows),
        Table("rescaling_trend", ["experiment_id", "trend_ok", "final_ok", "passed"], [summary]),
    ], trend["passed"]


def cmd_catalyst_experiment(cfg):
    c = cfg["catalyst"]
    eta = catalysts.catalyst_from_spec(c["eta"])
    rows_raw = catalysts.catalyst_experiment(
        eta, c["k_list"], _model(cfg), f_from_spec(c["f"]), int(c["m"]), float(c["t"]),
        measure_from_spec(cfg["initial_measure"]), float(c["epsilon"]), float(c["theta"]),
        int(c["forward_replicates"]), int(c["dual_replicates"]), float(cfg["forward"]["dt_max"]),
        cfg["seed"], cfg["workers"], c["law_k"], int(cfg["forward"]["population_cap"]),
    )
    z_max = float(c["z_max"])
    eid = cfg["experiment_id"]
    rows, passed = [], True
    for cr in rows_raw:
        rep = cr.report
        row = {"experiment_id": eid, "k": cr.k}
        row.update(_estimate_row(rep.forward, rep.dual))
        row.update({"oracle_stderr": rep.dual.stderr, "law_k": cr.law_k, "sigma_offset": cr.offset, "truncated": int(rep.truncated)})
        passed &= abs(rep.z) <= z_max
        rows.append(row)
    tables = [Table("catalyst", _columns("k", ["oracle_stderr", "law_k", "sigma_offset", "truncated"]), rows)]
    if len(rows_raw) >= 2:
        stab = catalysts.stabilization(rows_raw, z_max)
        passed &= stab["passed"]
        tables.append(Table("catalyst_stabilization", ["experiment_id", "z", "passed"], [{"experiment_id": eid, **stab}]))
    return tables, passed


def cmd_sbm_oracle(cfg):
    s = cfg["sbm"]
    mu = measure_from_spec(cfg["initial_measure"])
    if not isinstance(mu, AtomMeasure):
        raise ValueError("sbm-oracle needs an atomic initial measure")
    phi = phi_from_spec(s["phi"])
    rows = []
    for t in s["times"]:
        first, second = sbm_moments(float(s["a_inf"]), float(s["sigma_inf"]), phi, mu, float(t))
        for moment, value in ((1, first), (2, second)):
            rows.append({"experiment_id": cfg["experiment_id"], "time": float(t), "moment": moment, "oracle": value})
    return [Table("sbm_oracle", ["experiment_id", "time", "moment"] + CONTRACT[1:], rows)], True


COMMANDS = {
    "kernel-info": (cmd_kernel_info, "Print rho(0), sup sigma and the smoothness flag; tabulate rho and a."),
    "simulate-forward": (cmd_simulate_forward, "Forward replicates: <phi, X_t> and total mass at each snapshot."),
    "estimate-dual": (cmd_estimate_dual, "Dual estimate of E<f, X_t^m>."),
    "check-duality": (cmd_check_duality, "Forward against dual estimate of E<f, X_t^m>."),
    "check-mass": (cmd_check_mass, "Total-mass Laplace transform against its closed form."),
    "rescale-experiment": (cmd_rescale_experiment, "Rescaled moments against super-Brownian motion across scales."),
    "catalyst-experiment": (cmd_catalyst_experiment, "Forward and dual moments for binned catalyst densities."),
    "sbm-oracle": (cmd_sbm_oracle, "First and second moments of super-Brownian motion."),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; unspecified keys take the shipped defaults")
    common.add_argument("--seed", type=int, help="master seed (config key: seed)")
    common.add_argument("--out", help="output directory (config key: out)")
    common.add_argument("--workers", type=int, help="worker processes (config key: workers)")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key, e.g. forward.theta=100"
    )
    parser = argparse.ArgumentParser(prog="sdsm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    sub.add_parser("show-config", parents=[common], help="Print every config key with its default and description.")
    return parser


def _resolve(args):
    overrides = list(args.set)
    for key in ("seed", "out", "workers"):
        val = getattr(args, key)
        if val is not None:
            overrides.append(f"{key}={json.dumps(val)}")
    return cfgmod.load_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "show-config":
            for key, default, desc in cfgmod.describe():
                print(f"{key} = {default!r}\n    {desc}")
            return EXIT_OK
        func = COMMANDS[args.command][0]
        tables, passed = func(cfg)
        for table in tables:
            if len(table.rows) <= 50:
                _print_table(table)
        run_report(cfg["out"], cfg, cfg["seed"], tables)
    except (ValueError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if passed else EXIT_STAT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
