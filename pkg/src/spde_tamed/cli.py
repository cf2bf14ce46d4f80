"""Command line interface: ``spde-tamed {simulate,verify,sweep,bound}``.

Exit codes: 0 success, 2 config error, 3 invariant failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .config import ConfigError, Experiment, load, override, serialize
from .lyapunov import log_initial_moment, mc_estimate, model_bound, resolve_threads
from .scheme import simulate_path
from .spectral import DomainError
from .verify import report, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4


class InvariantFailure(RuntimeError):
    pass


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    return "%.17g" % x


def _clean(obj):
    # JSON has no inf/nan
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def mode_label(mode) -> str:
    if isinstance(mode, tuple):
        return "c_" + "_".join(str(v) for v in mode)
    return f"c_{mode}"


def write_trajectory(path, traj, p=0):
    header = ["t"] + [mode_label(m) for m in traj.modes.ids] + ["inside", "accumulator"]
    rows = []
    for k, t in enumerate(traj.times):
        coeffs = [float(v) for v in traj.states[p, k]]
        rows.append([float(t)] + coeffs + [int(traj.inside[p, k]), float(traj.accumulator[p, k])])
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# subcommands


def _estimate(exp, theta, threads):
    cfg = exp.cfg
    est = mc_estimate(
        exp.model, theta, exp.I, exp.J, exp.xi, cfg.paths, cfg.batches,
        seed=cfg.seed, threads=threads, functional=cfg.functional,
    )
    if not np.all(np.isfinite(est.log_mean)):
        raise InvariantFailure("non-finite moment estimate")
    try:
        est.bound_loglog = model_bound(exp.model, theta.mesh, theta.T).leading_loglog
    except DomainError:
        est.bound_loglog = None
    return est


def cmd_simulate(exp: Experiment, out: str, threads=None):
    cfg = exp.cfg
    theta = exp.theta
    os.makedirs(out, exist_ok=True)
    traj = simulate_path(exp.model, theta, exp.I, exp.J, exp.xi, cfg.seed, 0, cfg.form)
    write_trajectory(os.path.join(out, "trajectory.csv"), traj)
    if cfg.dump_paths:
        os.makedirs(os.path.join(out, "paths"), exist_ok=True)
        for p in range(min(cfg.dump_paths, cfg.paths)):
            tp = simulate_path(exp.model, theta, exp.I, exp.J, exp.xi, cfg.seed, p, cfg.form)
            write_trajectory(os.path.join(out, "paths", f"path_{p:06d}.csv"), tp)
    est = _estimate(exp, theta, threads)
    rows = [
        [k, float(t), float(m), float(h)]
        for k, (t, m, h) in enumerate(zip(est.times, est.log_mean, est.ci_halfwidth))
    ]
    write_csv(os.path.join(out, "moments.csv"), ["node", "t", "log_mean", "ci_halfwidth"], rows)
    doc = est.to_json()
    doc["log_initial_moment"] = log_initial_moment(exp.model, exp.xi, exp.I)
    write_json(os.path.join(out, "estimate.json"), doc)
    print(
        f"sup-node log-mean {fmt(est.sup_node_log_mean)} "
        f"+/- {fmt(est.sup_node_ci)} at t={fmt(float(est.times[est.sup_index]))}"
    )
    return doc


def cmd_verify(exp: Experiment, out: str, threads=None):
    os.makedirs(out, exist_ok=True)
    checks = run_suite(exp, fault=exp.cfg.verify.fault)
    doc = report(checks)
    doc["model"] = exp.model.to_json()
    write_json(os.path.join(out, "verify.json"), doc)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: residual {c.residual:.3e} (tol {c.tolerance:.1e})")
    if not doc["passed"]:
        raise InvariantFailure("invariant checks failed: " + ", ".join(c.name for c in checks if not c.passed))
    return doc


def cmd_sweep(exp: Experiment, out: str, steps, threads=None):
    steps = list(steps)
    if not steps or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ConfigError("sweep.M: step counts must be increasing (meshes descending)")
    os.makedirs(out, exist_ok=True)
    exact = log_initial_moment(exp.model, exp.xi, exp.I)
    rows, per_mesh = [], []
    for M in steps:
        theta = exp.with_steps(M)
        est = _estimate(exp, theta, threads)
        t_sup = float(est.times[est.sup_index])
        rows.append([M, float(theta.mesh), est.sup_node_log_mean, est.sup_node_ci, t_sup,
                     float(est.log_mean[-1]), float(est.ci_halfwidth[-1]),
                     float(est.inside_fraction), float(exact)])
        per_mesh.append({"M": M, "mesh": theta.mesh, **est.to_json()})
        print(f"M={M}: sup-node log-mean {fmt(est.sup_node_log_mean)} +/- {fmt(est.sup_node_ci)}")
    header = ["M", "mesh", "sup_node_log_mean", "ci_halfwidth", "sup_node_t", "terminal_log_mean",
              "terminal_ci_halfwidth", "inside_fraction", "log_initial_moment"]
    write_csv(os.path.join(out, "sweep.csv"), header, rows)
    doc = {"log_initial_moment": exact, "meshes": per_mesh}
    write_json(os.path.join(out, "sweep.json"), doc)
    print(f"log E[exp V(xi)] = {fmt(exact)}")
    return doc


def cmd_bound(exp: Experiment, out: str, threads=None):
    os.makedirs(out, exist_ok=True)
    m, theta = exp.model, exp.theta
    try:
        b = model_bound(m, theta.mesh, theta.T)
    except DomainError as exc:
        raise ConfigError(f"model: {exc}") from None
    doc = {
        "c": m.c, "delta": m.delta, "varsigma": m.varsigma, "iota": 1.0, "rho": m.rho,
        "T": theta.T, "mesh": theta.mesh,
        "halving_factor": 2.0**b.exponent,
        **b.to_json(),
    }
    write_json(os.path.join(out, "bound.json"), doc)
    print(f"log log of leading factor: {fmt(b.leading_loglog)} (~10^{b.leading_log10_digits:.6g} inner exponent)")
    print(f"mesh factor: min(mesh,1)^{fmt(-b.exponent)} -> log {fmt(b.mesh_log)}; halving the mesh scales by {fmt(2.0**b.exponent)}")
    return doc


# ---------------------------------------------------------------------------


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated step counts, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("step counts must be positive")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="spde-tamed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("simulate", "simulate paths and estimate exponential moments"),
        ("verify", "run the invariant suite"),
        ("sweep", "estimate exponential moments over a list of meshes"),
        ("bound", "evaluate the explicit moment bound in nested-log space"),
    ]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--threads", type=int, help="worker threads (default: $SPDE_TAMED_THREADS or 1)")
        s.add_argument("--out", help="output directory (default: config 'out')")
        s.add_argument("--paths", type=int, help="override the number of paths")
        s.add_argument("--mesh", type=_int_list, help="step count(s) M over [0, T], comma separated")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        cfg = override(cfg, seed=args.seed, paths=args.paths)
        steps = args.mesh
        if steps is not None and args.command != "sweep":
            if len(steps) != 1:
                raise ConfigError("--mesh: a single step count is expected for this command")
            part = cfg.partition.model_dump(mode="json")
            part.update(M=steps[0], nodes=None)
            cfg = override(cfg, partition=part)
        threads = resolve_threads(args.threads if args.threads is not None else cfg.threads)
        exp = Experiment(cfg)
        out = args.out or cfg.out
        if args.command == "simulate":
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "config.json"), "w", encoding="utf-8", newline="\n") as fh:
                # worker count does not affect results, so it is not recorded
                fh.write(serialize(cfg.model_copy(update={"threads": None})))
            cmd_simulate(exp, out, threads)
        elif args.command == "verify":
            cmd_verify(exp, out, threads)
        elif args.command == "sweep":
            cmd_sweep(exp, out, steps if steps is not None else cfg.sweep.M, threads)
        else:
            cmd_bound(exp, out, threads)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantFailure as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
