"""Command-line driver.

Exit codes: 0 success, 1 unexpected error, 2 bad arguments or configuration,
3 I/O error, 4 mesh or data format error, 5 solver aborted, 6 verification
failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_IO, EXIT_FORMAT, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4, 5, 6

log = logging.getLogger("gedamage")


class SolverAborted(RuntimeError):
    pass


def _out_dir(args, default):
    d = Path(args.out_dir or default)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _set_threads(n):
    if n:
        import torch

        torch.set_num_threads(int(n))


def _check(traj, what):
    if traj.status == "aborted":
        raise SolverAborted(f"{what}: {traj.message}")


# -- subcommands --------------------------------------------------------------------------


def cmd_run(args):
    from . import io
    from .fem.solver import continuation

    cfg = io.load_config(args.config)
    if args.steps:
        cfg.solver.steps = args.steps
    if args.scheme:
        cfg.solver.scheme = args.scheme
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.solver.validate()
    out = Path(args.out_dir or Path(cfg.base_dir) / cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    problem = io.build_problem(cfg)
    traj = continuation(problem, cfg.solver)
    io.save_config(cfg, out / "config.json")
    if len(traj):
        io.write_history(traj, out / "history.csv")
        every = cfg.output.every
        for rec in traj.records:
            if every and rec.step % every == 0:
                io.write_vtk(problem, rec.state, out / f"step_{rec.step:04d}.vtk", cfg.solver, cfg.output.fields)
        io.write_vtk(problem, traj.records[-1].state, out / "final.vtk", cfg.solver, cfg.output.fields)
    print(f"{traj.status}: {len(traj)} steps, max d = {traj.column('max_d')[-1] if len(traj) else 0.0:.6g} -> {out}")
    _check(traj, "run")


def cmd_single_element(args):
    from . import io
    from .studies import single_element_sweep

    out = _out_dir(args, "results/single_element")
    kw = {}
    if args.steps:
        kw["steps"] = args.steps
    if args.scheme:
        kw["scheme"] = "local-monolithic" if args.scheme == "local" else args.scheme
    cases = single_element_sweep(**kw)
    rows = []
    for c in cases:
        name = f"eta{c.eta_d:g}_kappa{c.kappa_d:g}"
        io.write_history(c.trajectory, out / f"history_{name}.csv")
        peak = int(np.argmax(c.sigma11))
        rows.append((c.eta_d, c.kappa_d, len(c.stretch), c.stretch[peak], c.sigma11[peak], c.d[-1],
                     c.trajectory.status))
        _check(c.trajectory, name)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta_d", "kappa_d", "steps", "peak_stretch", "peak_sigma11", "final_d", "status"])
        w.writerows(rows)
    for r in rows:
        print(f"eta_d={r[0]:g} kappa_d={r[1]:g}: peak sigma11 {r[4]:.4g} MPa at stretch {r[3]:.4f}, final d {r[5]:.4f}")


def cmd_mesh_study(args):
    from . import io
    from .fem.solver import SolverConfig
    from .studies import MESH_STUDY_SCHEMES, localization_indicator, mesh_study

    out = _out_dir(args, "results/mesh_study")
    schemes = MESH_STUDY_SCHEMES
    if args.scheme:
        schemes = {k: v for k, v in schemes.items() if v == args.scheme}
    res = mesh_study(displacement=args.displacement, steps=args.steps or 100, schemes=schemes)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mesh", "strategy", "step", "displacement", "reaction", "max_d", "max_kappa"])
        for (mname, sname), (problem, traj) in res.items():
            for r in traj.records:
                s = r.summary
                w.writerow([mname, sname, r.step, f"{s.control:.17g}", f"{s.reaction:.17g}",
                            f"{s.max_d:.17g}", f"{s.max_kappa:.17g}"])
    with open(out / "localization.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mesh", "strategy", "status", "steps", "final_max_d", "indicator"])
        for (mname, sname), (problem, traj) in res.items():
            last = traj.records[-1].state if len(traj) else problem.initial_state()
            ind = localization_indicator(problem, last)
            w.writerow([mname, sname, traj.status, len(traj), f"{traj.column('max_d')[-1] if len(traj) else 0:.17g}",
                        f"{ind:.17g}"])
            io.write_vtk(problem, last, out / f"{mname}_{sname}.vtk", SolverConfig(scheme=MESH_STUDY_SCHEMES[sname]))
            print(f"{mname:10s} {sname:20s} {traj.status:10s} max d {traj.column('max_d')[-1] if len(traj) else 0:.4f}"
                  f"  localization {ind:.3e}")
    for (mname, sname), (_, traj) in res.items():
        _check(traj, f"{mname}/{sname}")


NOTCHED_DEFAULTS = dict(mesh="coarse", steps=[25, 50, 100], strain=0.25, scale=0.1, weights=None, scheme="monolithic")


def load_notched_config(path):
    from .io import ConfigError

    cfg = dict(NOTCHED_DEFAULTS)
    if path is None:
        return cfg
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ConfigError("", "expected an object")
    for k, v in doc.items():
        if k not in cfg:
            raise ConfigError(k, "unknown key")
        cfg[k] = v
    if not isinstance(cfg["steps"], list) or not all(isinstance(s, int) and s > 0 for s in cfg["steps"]):
        raise ConfigError("steps", "expected a list of positive integers")
    for k in ("strain", "scale"):
        if isinstance(cfg[k], bool) or not isinstance(cfg[k], (int, float)) or cfg[k] <= 0:
            raise ConfigError(k, "must be a positive number")
    base = Path(path).parent
    for k in ("weights",):
        if cfg[k] is not None:
            cfg[k] = str(base / cfg[k])
    if cfg["mesh"] not in ("coarse", "medium", "fine"):
        cfg["mesh"] = str(base / cfg["mesh"])
    return cfg


def cmd_notched_plate(args):
    from . import io
    from .fem.solver import SolverConfig
    from .studies import element_damage, notched_material, notched_meshes, notched_plate

    cfg = load_notched_config(args.config)
    if args.steps:
        cfg["steps"] = [args.steps]
    if args.scheme:
        cfg["scheme"] = args.scheme
    out = _out_dir(args, "results/notched_plate")
    mesh = notched_meshes()[cfg["mesh"]] if cfg["mesh"] in ("coarse", "medium", "fine") else io.parse_inp(cfg["mesh"])
    m = notched_material(scale=cfg["scale"], weights=cfg["weights"])
    fields = {}
    for n in cfg["steps"]:
        problem, traj = notched_plate(mesh, m, steps=n, strain=cfg["strain"], scheme=cfg["scheme"])
        io.write_history(traj, out / f"history_{n}.csv")
        state = traj.records[-1].state
        io.write_vtk(problem, state, out / f"final_{n}.vtk", SolverConfig(scheme=cfg["scheme"]))
        fields[n] = element_damage(problem, state)
        print(f"{n:4d} increments: {traj.status}, max d {fields[n].max():.5f}")
        _check(traj, f"{n} increments")
    if len(fields) > 1:
        ref = fields[max(fields)]
        for n, d in fields.items():
            print(f"  |d({n}) - d({max(fields)})|_max = {np.abs(d - ref).max():.3e}")


def cmd_fit(args):
    from . import fitting
    from . import networks as nn

    data = fitting.read_data(args.data)
    seed = 0 if args.seed is None else args.seed
    res = fitting.fit(data, eta_d=args.eta_d, kappa_d=args.kappa_d, epochs=args.epochs, seed=seed,
                      threads=args.threads)
    Path(args.weights).parent.mkdir(parents=True, exist_ok=True)
    nn.save_weights(res.params, args.weights)
    conv = nn.convexity_violations(res.params.psi_iso_net)
    mono = nn.monotonicity_violations(res.params.yield_net)
    print(f"relative RMSE {res.rel_rmse:.3e}; convexity violations {conv}; monotonicity violations {mono}")
    print(f"weights written to {args.weights}")


def cmd_synthetic_data(args):
    from . import fitting

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    fitting.write_data(fitting.synthetic_data(), args.out)
    print(f"synthetic data written to {args.out}")


def cmd_verify(args):
    from . import verify
    from .networks import load_weights
    from .studies import default_weights_path

    weights = load_weights(args.weights or default_weights_path())
    results = verify.run_all(seed=0 if args.seed is None else args.seed, weights=weights, quick=args.quick)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


# -- entry point ------------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--steps", type=int, help="number of load increments")
    common.add_argument("--scheme", choices=["monolithic", "staggered", "local", "local-monolithic"])
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="torch thread count")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="gedamage", description="Gradient-enhanced damage finite-element solver.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a simulation from a JSON config")
    p.add_argument("config", nargs="?")
    p.add_argument("--config", dest="config_opt")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("single-element", parents=[common], help="single-element parameter sweep")
    p.set_defaults(func=cmd_single_element)

    p = sub.add_parser("mesh-study", parents=[common], help="three meshes times three strategies")
    p.add_argument("--displacement", type=float, default=20.0, help="prescribed end displacement (mm)")
    p.set_defaults(func=cmd_mesh_study)

    p = sub.add_parser("notched-plate", parents=[common], help="notched plate with the fitted model")
    p.add_argument("config", nargs="?")
    p.add_argument("--config", dest="config_opt")
    p.set_defaults(func=cmd_notched_plate)

    p = sub.add_parser("fit", parents=[common], help="train the networks on cycle,stretch,stress data")
    p.add_argument("data")
    p.add_argument("weights")
    p.add_argument("--epochs", type=int, default=5000)
    p.add_argument("--eta-d", type=float, default=0.001)
    p.add_argument("--kappa-d", type=float, default=0.1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synthetic-data", parents=[common], help="write closed-form uniaxial data")
    p.add_argument("out")
    p.set_defaults(func=cmd_synthetic_data)

    p = sub.add_parser("verify", parents=[common], help="run the property suites")
    p.add_argument("--weights", help="weight file to check (default: shipped weights)")
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    from . import io
    from .fem.solver import ConfigError as SolverConfigError
    from .fitting import DataFileError
    from .networks import WeightFileError

    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "config_opt", None):
        if args.config and args.config != args.config_opt:
            ap.error("config given twice")
        args.config = args.config_opt
    if args.command == "run" and not args.config:
        ap.error("run needs a config file")
    _set_threads(args.threads)
    try:
        code = args.func(args)
        return EXIT_OK if code is None else code
    except (io.ConfigError, SolverConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.InpFormatError, WeightFileError, DataFileError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        name = f": {exc.filename}" if getattr(exc, "filename", None) else ""
        print(f"I/O error: {exc.strerror or exc}{name}", file=sys.stderr)
        return EXIT_IO
    except SolverAborted as exc:
        print(f"solver aborted: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
