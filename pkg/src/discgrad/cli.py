"""Command line entry point: ``discgrad <subcommand> [--config PATH] [--out DIR] [--seed N]``.

Each subcommand writes one CSV per method to the output directory, named
``<subcommand>_<label>.csv``, and prints a short summary to stdout.

Columns:

* simulate:   t, x1..xd, I, drift
* conserve:   t, I, drift
* order:      h, error, residual_log10   (fit summary on stdout)
* efficiency: h, error, wall_time, steps, f_evals, i_evals, linear_solves, newton_iters, failure
* stepcrit:   R, h, denom_ratio, cond, error, status
* phase:      h, t, x1..xd   (plus ``phase_reference.csv``)
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import DiscGradError
from .experiments import (
    ExperimentConfig,
    conservation_study,
    efficiency_study,
    order_study,
    phase_trajectory_export,
    stepsize_criterion_study,
)
from .integrators import estimate_bound_constants, integrate, theoretical_step_bound

# ball radius |i(x)| / BOUND_R for the sampled constants printed by ``simulate``
BOUND_R = 10.0

SUBCOMMANDS = ("simulate", "order", "conserve", "efficiency", "stepcrit", "phase")


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _state_cols(d):
    return [f"x{k + 1}" for k in range(d)]


def run_simulate(cfg: ExperimentConfig, out: Path, seed: int):
    problem, x0 = cfg.make_problem(), cfg.initial_state()
    paths = []
    for spec in cfg.methods_for("simulate"):
        traj = integrate(spec.stepper, problem, x0, cfg.h, cfg.t_end)
        drift = traj.drift()
        rows = ([t, *x, I, dr] for t, x, I, dr in
                zip(traj.times, traj.states, traj.integral_values, drift))
        paths.append(write_csv(out / f"simulate_{spec.label}.csv",
                               ["t", *_state_cols(problem.dim), "I", "drift"], rows))
        print(f"{spec.label}: {traj.n_steps} steps, max relative drift "
              f"{traj.max_relative_drift():.3e}, cost {traj.cost.as_dict()}")
        if spec.stepper.method in ("dg_linear", "dg_fixed_point"):
            rng = np.random.default_rng(seed)
            est = estimate_bound_constants(problem, spec.stepper.config, x0, R=BOUND_R,
                                           H=cfg.h, rng=rng)
            Rp, Hp = theoretical_step_bound(est)
            print(f"  sampled L={est.L:.4g} C1={est.C1:.4g} -> R'={Rp:.4g} H'={Hp:.4g}")
    return paths


def run_conserve(cfg: ExperimentConfig, out: Path, seed: int):
    res = conservation_study(cfg)
    paths = []
    for label, drift in res.drift.items():
        traj = res.trajectories[label]
        paths.append(write_csv(out / f"conserve_{label}.csv", ["t", "I", "drift"],
                               zip(res.times, traj.integral_values, drift)))
        print(f"{label}: max relative drift {res.relative_drift[label]:.3e}")
    return paths


def run_order(cfg: ExperimentConfig, out: Path, seed: int):
    fits = order_study(cfg)
    paths = []
    for label, fit in fits.items():
        paths.append(write_csv(out / f"order_{label}.csv", ["h", "error", "residual_log10"],
                               zip(fit.h, fit.errors, fit.residuals)))
        flag = "" if fit.reliable else "  [UNRELIABLE FIT]"
        failed = f" failed at h={fit.failed}" if fit.failed else ""
        print(f"{label}: slope {fit.slope:.4f} intercept {fit.intercept:.4f}{failed}{flag}")
    return paths


def run_efficiency(cfg: ExperimentConfig, out: Path, seed: int):
    records = efficiency_study(cfg)
    header = ["h", "error", "wall_time", "steps", "f_evals", "i_evals", "linear_solves",
              "newton_iters", "failure"]
    paths = []
    for label in dict.fromkeys(r.label for r in records):
        rows = [[r.h, r.error, r.wall_time, r.steps, r.f_evals, r.i_evals, r.linear_solves,
                 r.newton_iters, r.failure] for r in records if r.label == label]
        paths.append(write_csv(out / f"efficiency_{label}.csv", header, rows))
        for r in rows:
            print(f"{label}: h={r[0]:g} error={r[1]:.3e} i_evals={r[5]} newton_iters={r[7]}")
    return paths


def run_stepcrit(cfg: ExperimentConfig, out: Path, seed: int):
    spec = cfg.methods_for("stepcrit")[0]
    res = stepsize_criterion_study(cfg, spec.stepper.config)
    path = write_csv(out / f"stepcrit_{spec.label}.csv",
                     ["R", "h", "denom_ratio", "cond", "error", "status"],
                     ([r.R, r.h, r.denom_ratio, r.cond, r.error, r.status] for r in res.rows))
    for R, h in res.largest_h.items():
        txt = "critical point, any h" if math.isinf(h) else f"{h:.6g}"
        print(f"R={R:g}: largest accepted h {txt}")
    return [path]


def run_phase(cfg: ExperimentConfig, out: Path, seed: int):
    res = phase_trajectory_export(cfg)
    by_label: dict = {}
    for (label, h), traj in res.trajectories.items():
        by_label.setdefault(label, []).extend(
            [h, t, *x] for t, x in zip(traj.times, traj.states))
    d = cfg.make_problem().dim
    header = ["h", "t", *_state_cols(d)]
    paths = [write_csv(out / f"phase_{label}.csv", header, rows) for label, rows in by_label.items()]
    ref_rows = []
    for h, states in res.references.items():
        ref_rows.extend([h, k * h, *x] for k, x in enumerate(states))
    paths.append(write_csv(out / "phase_reference.csv", header, ref_rows))
    for (label, h), traj in res.trajectories.items():
        print(f"{label} h={h:.6g}: max|x| {np.linalg.norm(traj.states, axis=1).max():.4f} "
              f"final |x| {np.linalg.norm(traj.final):.4f}")
    return paths


RUNNERS = {
    "simulate": run_simulate,
    "order": run_order,
    "conserve": run_conserve,
    "efficiency": run_efficiency,
    "stepcrit": run_stepcrit,
    "phase": run_phase,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discgrad",
                                     description="Discrete gradient integrator experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", type=Path, help="TOML configuration file")
        p.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
        p.add_argument("--seed", type=int, default=0, help="seed for sampled diagnostics")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        out = args.out if args.out is not None else Path(cfg.out_dir)
        paths = RUNNERS[args.command](cfg, out, args.seed)
    except (DiscGradError, OSError) as exc:
        print(f"discgrad {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
