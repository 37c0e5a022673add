"""Command-line surface.

Subcommands: constants, minimize, energy, flow, toy, pm, logsob, sweep,
verify.  Exit codes: 0 success, 2 usage error, 1 numerical failure.  All file
outputs land under --out together with a manifest.json describing them; an
optional JSON config file mirrors the flags (explicit flags win).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import constants as cst
from .constants import ParameterRangeError
from .energy import energy_report, free_energy_relaxed, optimal_rescale
from .flow import RunOptions, run as flow_run, toy_critical_mass, toy_mass, toy_run
from .minimize import minimize_relaxed, suggest_r_max
from .radial_core import (
    DegenerateProfileError,
    Params,
    RadialGrid,
    RadialProfile,
    RelaxedMeasure,
    profile_from_csv,
    profile_to_csv,
)
from .regimes_q_ge_1 import PMParams, log_constant_estimate, pm_minimize
from .sweep import SweepSpec, region_svg, rows_to_csv, sweep_region, write_manifest
from .acceptance import SUITES, run_suite


class NumericalFailure(RuntimeError):
    pass


def _add_common(sub, with_q=True):
    sub.add_argument("--dim", type=int, required=True, help="space dimension N")
    sub.add_argument("--lambda", dest="lam", type=float, required=True, help="kernel exponent")
    if with_q:
        sub.add_argument("--q", type=float, required=True, help="diffusion exponent")
    sub.add_argument("--out", type=str, default=None, help="output directory")


def _emit(args, payload: dict, artifacts: Optional[list] = None) -> None:
    print(json.dumps(payload, indent=2, default=_jsonable))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        files = artifacts or []
        report_path = os.path.join(args.out, f"{args.command}.json")
        with open(report_path, "w") as fh:
            json.dump(payload, fh, indent=2, default=_jsonable)
        files.append({"path": os.path.basename(report_path), "kind": "json", "description": f"{args.command} report"})
        write_manifest(args.out, files, extra={"command": sys.argv[1:]})


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"not serializable: {type(obj)}")


def _write_profile(args, profile, p, stem) -> list:
    if not args.out:
        return []
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{stem}.csv")
    with open(path, "w") as fh:
        fh.write(profile_to_csv(profile, p))
    return [{"path": f"{stem}.csv", "kind": "csv", "description": "radial profile (r_center, value)"}]


def _load_init(args, p) -> Optional[RelaxedMeasure]:
    if args.init == "file":
        if not args.init_file:
            raise NumericalFailure("--init file requires --init-file")
        with open(args.init_file) as fh:
            prof, _ = profile_from_csv(fh.read())
        return RelaxedMeasure(profile=prof)
    if args.init == "dirac":
        grid = RadialGrid.make(p.dim, args.rmax or suggest_r_max(p), cells=args.cells)
        vals = cst.carlson_levin(p.dim, p.lam, p.q).optimizer(grid.centers)
        prof = RadialProfile(grid=grid, values=vals)
        total = prof.mass() + 0.5
        return RelaxedMeasure(profile=prof.with_values(vals / total), dirac_mass=0.5 / total)
    return None  # carlson default handled inside minimize_relaxed


def cmd_constants(args) -> int:
    th = cst.thresholds(args.dim, args.lam)
    payload = {
        "dim": args.dim,
        "lambda": args.lam,
        "q": args.q,
        "alpha": cst.alpha_exponent(args.dim, args.lam, args.q) if args.q != 1 else None,
        "q_admissible": th.q_admissible,
        "q_conformal": th.q_conformal,
        "q_concentration": th.q_concentration,
        "q_mccann": th.q_mccann,
        "q_bar": th.q_bar,
        "q_explicit_bound": th.q_explicit_bound,
        "C_closed_form": cst.closed_form_constant(args.dim, args.lam, args.q),
        "conformal_constant": cst.conformal_constant(args.dim, args.lam),
        "uniqueness_region": cst.uniqueness_region(args.dim, args.lam, args.q),
        "A_sup_ratio": cst.sup_ratio_A(args.dim, args.lam),
        "B_lower_bound": cst.B_lower_bound(args.dim, args.lam),
    }
    q_adm = th.q_admissible
    if q_adm < args.q < 1:
        cl = cst.carlson_levin(args.dim, args.lam, args.q)
        payload["carlson_levin_constant"] = cl.constant
        payload["kappa_star"] = cst.kappa_star(args.dim, args.lam, args.q)
    _emit(args, payload)
    return 0


def cmd_minimize(args) -> int:
    p = Params(dim=args.dim, lam=args.lam, q=args.q)
    init = _load_init(args, p)
    rep = minimize_relaxed(
        p, init=init, cells=args.cells, r_max=args.rmax, tol=args.tol, max_iter=args.max_iter
    )
    artifacts = _write_profile(args, rep.measure.profile, p, "minimizer_profile")
    _emit(args, rep.summary(), artifacts)
    return 0


def cmd_energy(args) -> int:
    p = Params(dim=args.dim, lam=args.lam, q=args.q)
    init = _load_init(args, p)
    if init is None:
        rep = minimize_relaxed(
            p, init=None, cells=args.cells, r_max=args.rmax, tol=args.tol, max_iter=args.max_iter
        )
        measure = rep.measure
        c_value, c_source = rep.estimate_C, "minimizer estimate"
    else:
        measure = init
        c_value, c_source = None, None
    closed = cst.closed_form_constant(p.dim, p.lam, p.q)
    if closed is not None:
        c_value, c_source = closed, "closed form"
    if c_value is None:
        rep = minimize_relaxed(p, cells=args.cells, r_max=args.rmax, max_iter=args.max_iter)
        c_value, c_source = rep.estimate_C, "minimizer estimate"
    er = energy_report(measure, p, c_value)
    payload = {
        "free_energy": er.free_energy,
        "rescale_ell": er.rescale_ell,
        "lower_bound": er.lower_bound,
        "virial_residual": er.virial_residual,
        "C_value": c_value,
        "C_source": c_source,
    }
    artifacts = _write_profile(args, measure.profile, p, "energy_profile")
    _emit(args, payload, artifacts)
    return 0


def _history_csv(state) -> str:
    lines = ["t,mass,energy,innermost_mass"]
    for row in state.history:
        lines.append(",".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def cmd_flow(args) -> int:
    p = Params(dim=args.dim, lam=args.lam, q=args.q)
    grid = RadialGrid.make(p.dim, args.rmax or 40.0, cells=args.cells)
    if args.init == "file":
        with open(args.init_file) as fh:
            init, _ = profile_from_csv(fh.read())
    else:
        vals = np.exp(-grid.centers**2 / 2)
        init = RadialProfile(grid=grid, values=vals)
        init = init.with_values(vals / init.mass() * args.mass)
    state = flow_run(init, p, t_end=args.t_end, opts=RunOptions(stationary_tol=args.stationary_tol))
    payload = {
        "t_final": state.time,
        "stationary": state.stationary,
        "mass": state.profile.mass(),
        "steps": len(state.history) - 1,
        "final_energy": state.history[-1][2],
        "innermost_mass": state.innermost_mass,
    }
    artifacts = _write_profile(args, state.profile, p, "flow_final")
    if args.out:
        path = os.path.join(args.out, "flow_history.csv")
        with open(path, "w") as fh:
            fh.write(_history_csv(state))
        artifacts.append({"path": "flow_history.csv", "kind": "csv", "description": "t, mass, energy, innermost_mass"})
    _emit(args, payload, artifacts)
    return 0


def cmd_toy(args) -> int:
    p = Params(dim=args.dim, lam=args.lam, q=args.q)
    m0 = toy_critical_mass(p)
    target = args.mass if args.mass is not None else args.mass_factor * m0
    verdict = toy_run(None, p, target, t_end=args.t_end, cells=args.cells, r_max=args.rmax or 16.0)
    payload = {
        "critical_mass": m0,
        "mass_target": target,
        "verdict": verdict.verdict,
        "fitted_h": verdict.fitted_h,
        "l1_error": verdict.l1_error,
        "innermost_share_ratio": verdict.innermost_share_ratio,
        "t_final": verdict.state.time,
        "stationary": verdict.state.stationary,
    }
    artifacts = _write_profile(args, verdict.state.profile, p, "toy_final")
    if args.out:
        path = os.path.join(args.out, "toy_history.csv")
        with open(path, "w") as fh:
            fh.write(_history_csv(verdict.state))
        artifacts.append({"path": "toy_history.csv", "kind": "csv", "description": "t, mass, energy, innermost_mass"})
    _emit(args, payload, artifacts)
    return 0


def cmd_pm(args) -> int:
    p = PMParams(dim=args.dim, lam=args.lam, q=args.q)
    rep = pm_minimize(p, cells=args.cells, r_max=args.rmax or 8.0, max_iter=args.max_iter)
    payload = {
        "estimate_C": rep.estimate_C,
        "support_radius": rep.support_radius,
        "support_cells": rep.support_cells,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "alpha_pm": p.alpha_pm,
        "conformal_lower_bound": cst.conformal_constant(args.dim, args.lam),
    }
    artifacts = _write_profile(args, rep.profile, None, "pm_profile")
    _emit(args, payload, artifacts)
    return 0


def cmd_logsob(args) -> int:
    est = log_constant_estimate(args.dim, args.lam, cells=args.cells)
    payload = {
        "C_upper_estimate": est,
        "conformal_lower_bound": cst.conformal_constant(args.dim, args.lam),
        "note": "upper bound from the fixed-point trial family; the sharp constant is not known in closed form",
    }
    _emit(args, payload)
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        dim=args.dim,
        lambda_range=tuple(args.lambda_range),
        q_range=tuple(args.q_range),
        mode=args.mode,
        cells=args.cells,
    )
    rows = sweep_region(spec)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write(rows_to_csv(rows))
    svg_path = os.path.join(args.out, "regions.svg")
    with open(svg_path, "w") as fh:
        fh.write(region_svg(rows, spec))
    artifacts = [
        {"path": "sweep.csv", "kind": "csv", "description": "per-point labels"},
        {"path": "regions.svg", "kind": "svg", "description": "region map"},
    ]
    write_manifest(args.out, artifacts, extra={"command": sys.argv[1:]})
    n_err = sum("error" in r for r in rows)
    print(json.dumps({"points": len(rows), "errors": n_err, "out": args.out}))
    return 0


def cmd_verify(args) -> int:
    results = run_suite(args.suite, seed=args.seed)
    width = max(len(r.name) for r in results)
    all_pass = True
    for r in results:
        all_pass &= r.passed
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    print(f"{'OK' if all_pass else 'FAILED'}: {sum(r.passed for r in results)}/{len(results)} criteria")
    return 0 if all_pass else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rhls",
        description="Numerical laboratory for reverse Hardy-Littlewood-Sobolev inequalities",
    )
    ap.add_argument("--config", type=str, default=None, help="JSON config mirroring flags (flags win)")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("constants", help="thresholds and closed-form constants")
    _add_common(sp)
    sp.set_defaults(fn=cmd_constants)

    for name, fn in (("minimize", cmd_minimize), ("energy", cmd_energy)):
        sp = sub.add_parser(name, help=f"{name} the relaxed quotient problem")
        _add_common(sp)
        sp.add_argument("--cells", type=int, default=2048)
        sp.add_argument("--rmax", type=float, default=None)
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--max-iter", type=int, default=10000)
        sp.add_argument("--init", choices=("carlson", "dirac", "file"), default="carlson")
        sp.add_argument("--init-file", type=str, default=None)
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("flow", help="aggregation/fast-diffusion gradient flow")
    _add_common(sp)
    sp.add_argument("--cells", type=int, default=512)
    sp.add_argument("--rmax", type=float, default=None)
    sp.add_argument("--t-end", type=float, default=20.0)
    sp.add_argument("--mass", type=float, default=1.0)
    sp.add_argument("--stationary-tol", type=float, default=1e-8)
    sp.add_argument("--init", choices=("gaussian", "file"), default="gaussian")
    sp.add_argument("--init-file", type=str, default=None)
    sp.set_defaults(fn=cmd_flow)

    sp = sub.add_parser("toy", help="external-potential toy model")
    _add_common(sp)
    sp.add_argument("--cells", type=int, default=768)
    sp.add_argument("--rmax", type=float, default=None)
    sp.add_argument("--t-end", type=float, default=60.0)
    sp.add_argument("--mass", type=float, default=None, help="absolute mass target")
    sp.add_argument("--mass-factor", type=float, default=0.5, help="mass as multiple of m_lam(0)")
    sp.set_defaults(fn=cmd_toy)

    sp = sub.add_parser("pm", help="porous-medium range q > 1")
    _add_common(sp)
    sp.add_argument("--cells", type=int, default=1024)
    sp.add_argument("--rmax", type=float, default=None)
    sp.add_argument("--max-iter", type=int, default=5000)
    sp.set_defaults(fn=cmd_pm)

    sp = sub.add_parser("logsob", help="logarithmic endpoint q = 1")
    _add_common(sp, with_q=False)
    sp.add_argument("--cells", type=int, default=1024)
    sp.set_defaults(fn=cmd_logsob)

    sp = sub.add_parser("sweep", help="(lambda, q) region sweep with CSV/SVG output")
    sp.add_argument("--dim", type=int, required=True)
    sp.add_argument("--lambda-range", type=float, nargs=3, required=True, metavar=("MIN", "MAX", "STEPS"))
    sp.add_argument("--q-range", type=float, nargs=3, required=True, metavar=("MIN", "MAX", "STEPS"))
    sp.add_argument("--mode", choices=("analytic_regions", "minimize_classify"), default="analytic_regions")
    sp.add_argument("--cells", type=int, default=512)
    sp.add_argument("--out", type=str, required=True)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("verify", help="run acceptance suites")
    sp.add_argument("--suite", choices=sorted(SUITES) + ["all"], default="all")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        idx = argv.index("--config")
        try:
            with open(argv[idx + 1]) as fh:
                cfg = json.load(fh)
        except (OSError, IndexError, json.JSONDecodeError) as exc:
            print(f"rhls: bad config: {exc}", file=sys.stderr)
            return 2
        del argv[idx : idx + 2]
    else:
        cfg = {}
    ap = build_parser()
    if cfg:
        for action in ap._subparsers._group_actions[0].choices.values():
            known = {a.dest for a in action._actions}
            action.set_defaults(**{k: v for k, v in cfg.items() if k in known})
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ParameterRangeError, DegenerateProfileError, NumericalFailure, ValueError) as exc:
        print(f"rhls: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
