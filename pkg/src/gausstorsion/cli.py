"""Command-line entry point: ``gausstorsion <subcommand>``.

Every subcommand exits with status 0 if and only if all of its checks pass.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import domain as dom
from . import gauss
from .errors import GaussTorsionError
from .fem import (DEFAULT_SOLVER, SolverConfig, assemble, boundary_identity_residual,
                  dump_field_csv, generate_mesh, load_field, save_field, solve, torsion_value)
from .halfspace import (ClosedFormSolution, HalfSpaceProblem, evaluate_v, fubini_constant,
                        halfspace_torsion, isoperimetric_identity_residual, v_min)
from .levelset import compute_profile
from .sweep import SweepConfig, report_emit, report_json, run_sweep, verify_tuple


def _emit_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


def _write_rows(header, rows, path=None):
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
    finally:
        if path:
            out.close()


def cmd_halfspace(args) -> int:
    if args.measure is not None:
        hs = HalfSpaceProblem.from_measure(args.measure, args.beta)
    else:
        hs = HalfSpaceProblem(args.lam, args.beta)
    if args.profile:
        sol = ClosedFormSolution(hs)
        x = np.linspace(hs.lam, hs.lam + args.span, args.points)
        _write_rows(("x1", "v"), np.c_[x, evaluate_v(sol, x)], args.output)
        return 0
    s = hs.measure()
    vm = v_min(hs)
    out = {
        "lambda": hs.lam, "beta": hs.beta, "measure": s, "v_m": vm,
        "T_halfspace": halfspace_torsion(hs),
        "isoperimetric_identity_residual": isoperimetric_identity_residual(hs),
        "fubini_residual": abs(fubini_constant(hs) - s / (2 * hs.beta)) / (s / (2 * hs.beta)),
    }
    ok = out["isoperimetric_identity_residual"] <= 1e-10 and out["fubini_residual"] <= 1e-10
    if args.format == "csv":
        keys = list(out)
        _write_rows(keys, [[out[k] for k in keys]], args.output)
    else:
        _emit_json(out, args.output)
    return 0 if ok else 1


def cmd_domain(args) -> int:
    d = dom.load_domain_spec(args.spec)
    info = dom.domain_info(d)
    _emit_json(info, args.output)
    ok = 0 < info["measure"] < 1 and info["isoperimetric_margin"] >= -1e-12
    return 0 if ok else 1


def _solver(args) -> SolverConfig:
    return SolverConfig(cg_tol=args.cg_tol) if args.cg_tol else DEFAULT_SOLVER


def cmd_solve(args) -> int:
    d = dom.load_domain_spec(args.spec)
    cfg = _solver(args)
    measure = dom.gaussian_measure(d)
    lam = dom.symmetrize(d, measure).lam
    u = solve(assemble(generate_mesh(d, args.h), args.beta, cfg), cfg)
    T = torsion_value(u)
    T_hs = halfspace_torsion(HalfSpaceProblem(lam, args.beta))
    res = boundary_identity_residual(u, measure)
    out = {"measure": measure, "lambda_star": lam, "T_domain": T, "T_halfspace": T_hs,
           "u_min": u.u_min, "boundary_identity_residual": res, "cg_iters": u.cg_iters,
           "n_triangles": u.mesh.n_triangles, "h": args.h, "beta": args.beta}
    if args.dump_field:
        dump_field_csv(args.dump_field, u)
    if args.save_field:
        save_field(args.save_field, u, measure=measure, lambda_star=lam)
    _emit_json(out, args.output)
    ok = u.u_min >= -1e-10 and res <= 1e-3 and T <= T_hs * (1 + 1e-9)
    return 0 if ok else 1


def cmd_profile(args) -> int:
    u, meta = load_field(args.field)
    prof = compute_profile(u, args.levels)
    _write_rows(("t", "mu", "perim", "ext_integral"), prof.rows(), args.output)
    ok = bool(np.all(np.diff(prof.mu) <= 1e-15) and np.all(prof.rows()[:, 1:] >= 0))
    return 0 if ok else 1


def cmd_verify(args) -> int:
    row = verify_tuple(args.family, args.measure, args.beta, tuple(args.h), seed=args.seed)
    _emit_json(row, args.output)
    return 0 if row["passed"] else 1


def cmd_sweep(args) -> int:
    cfg = SweepConfig.from_json(args.config) if args.config else SweepConfig()
    report = run_sweep(cfg)
    out = args.output or cfg.output
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for fmt in args.format:
            target = out / {"json": "report.json", "csv": "report.csv"}.get(fmt, "plot-data")
            report_emit(report, fmt, target)
    else:
        sys.stdout.write(report_json(report))
    for r in report.rows:
        status = "PASS" if r["passed"] else "FAIL " + r["failure"]
        print(f"{r['family']:>20s} s={r['target_measure']:<4g} beta={r['beta']:<4g} {status}",
              file=sys.stderr)
    return 0 if report.passed else 1


def cmd_gauss_table(args) -> int:
    lam = np.linspace(args.lam_min, args.lam_max, args.n)
    s = np.asarray(gauss.half_space_measure(lam))
    rows = np.c_[lam, s, gauss.isoperimetric_function(s), gauss.mills_ratio(lam),
                 gauss.F_function(s), gauss.psi_function(lam)]
    _write_rows(("lambda", "h", "I", "R", "F", "Psi"), rows, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gausstorsion",
                                description="Gaussian Robin torsion: solver and comparison checks")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    hs = sub.add_parser("halfspace", help="closed-form half-space quantities")
    g = hs.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--measure", type=float)
    hs.add_argument("--beta", type=float, default=1.0)
    hs.add_argument("--format", choices=("json", "csv"), default="json")
    hs.add_argument("--profile", action="store_true", help="emit an (x1, v) table instead")
    hs.add_argument("--span", type=float, default=5.0)
    hs.add_argument("--points", type=int, default=101)
    hs.add_argument("--output")
    hs.set_defaults(func=cmd_halfspace)

    dm = sub.add_parser("domain", help="domain utilities")
    dsub = dm.add_subparsers(dest="domain_command", required=True)
    info = dsub.add_parser("info", help="measure, perimeter, lambda*, isoperimetric margin")
    info.add_argument("spec", help="JSON domain spec file or inline JSON")
    info.add_argument("--output")
    info.set_defaults(func=cmd_domain)

    sv = sub.add_parser("solve", help="solve the torsion problem on one domain")
    sv.add_argument("spec")
    sv.add_argument("--beta", type=float, required=True)
    sv.add_argument("--h", type=float, required=True)
    sv.add_argument("--cg-tol", type=float)
    sv.add_argument("--output")
    sv.add_argument("--dump-field", help="write x,y,u vertex table (CSV)")
    sv.add_argument("--save-field", help="write the field (npz) for the profile command")
    sv.set_defaults(func=cmd_solve)

    pr = sub.add_parser("profile", help="level-set profile of a saved field")
    pr.add_argument("field")
    pr.add_argument("--levels", type=int, default=200)
    pr.add_argument("--output")
    pr.set_defaults(func=cmd_profile)

    vf = sub.add_parser("verify", help="all checks for one (family, measure, beta)")
    vf.add_argument("--family", choices=dom.FAMILIES, required=True)
    vf.add_argument("--measure", type=float, required=True)
    vf.add_argument("--beta", type=float, default=1.0)
    vf.add_argument("--h", type=float, nargs="+", default=[0.08, 0.04, 0.02])
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--output")
    vf.set_defaults(func=cmd_verify)

    sw = sub.add_parser("sweep", help="full comparison sweep")
    sw.add_argument("--config", help="JSON sweep config")
    sw.add_argument("--output", help="output directory")
    sw.add_argument("--format", nargs="+", choices=("json", "csv", "plot-data"),
                    default=["json", "csv", "plot-data"])
    sw.set_defaults(func=cmd_sweep)

    gt = sub.add_parser("gauss-table", help="table of h, I, R, F and Psi over a lambda grid")
    gt.add_argument("--lam-min", type=float, default=-6.0)
    gt.add_argument("--lam-max", type=float, default=6.0)
    gt.add_argument("--n", type=int, default=25)
    gt.add_argument("--output")
    gt.set_defaults(func=cmd_gauss_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GaussTorsionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
