"""Batch front-end: verify-identity | solve | carleman-scan | stability | check-weights.

Every command loads a JSON configuration (defaults + file + flag overrides),
validates it against all module preconditions, and writes its reports under
a run directory named by the configuration hash.  Outputs are byte-stable:
rerunning an identical configuration reproduces identical files.

Exit codes: 0 pass, 1 assertion failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import fields as flds
from .config import ConfigError, build_domain, build_run_grid, config_hash, load_config
from .functionals import lambda_scan, suite_worst_constant
from .gloperator import check_condition1, derive_coeffs
from .grid import build_grid
from .identity import (T_coefficient_positivity, identity_residual_linear,
                       identity_residual_nonlinear)
from .solver import SolveConfig, energy_balance, save_trajectory, solve
from .stability import perturbation_suite
from .weights import (CarlemanParams, check_time_monotonicity,
                      derivative_consistency, export_envelope_csv,
                      verify_psi_admissibility, weight_envelope)


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return x


def write_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _prepare(args, command):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.grid is not None:
        overrides["grid"] = {"nx": args.grid, "ny": args.grid, "nt": args.grid}
    if getattr(args, "lam", None):
        overrides.setdefault("scan", {})["lambdas"] = args.lam
        overrides.setdefault("identity", {})["lambdas"] = args.lam
    if getattr(args, "mu", None):
        overrides.setdefault("scan", {})["mus"] = args.mu
        overrides.setdefault("identity", {})["mus"] = args.mu
    cfg = load_config(args.config, overrides)
    out_dir = args.output_dir or cfg["output_dir"] or os.path.join(
        "runs", config_hash(cfg))
    os.makedirs(out_dir, exist_ok=True)
    return cfg, out_dir


def _solve_suite(cfg, grid, n):
    """Seeded trajectories alternating Dirichlet / Neumann."""
    coeffs = derive_coeffs(cfg["coeffs"]["b"], cfg["coeffs"]["c"])
    out = []
    for k in range(n):
        bc = "dirichlet0" if k % 2 == 0 else "neumann0"
        if grid.spec.shape == "unit_disk":
            bc = "dirichlet0"
        sc = SolveConfig(b=coeffs.b, c=coeffs.c, bc=bc,
                         scheme=cfg["solver"]["scheme"])
        y0 = flds.random_initial_field(grid, seed=cfg["seed"] + k,
                                       amplitude=cfg["solver"]["amplitude"],
                                       bc=bc, n_modes=cfg["solver"]["n_modes"])
        out.append((bc, solve(y0, sc, grid).Y))
    return coeffs, out


def cmd_verify_identity(args) -> int:
    cfg, out_dir = _prepare(args, "verify-identity")
    grid = build_run_grid(cfg)
    ident = cfg["identity"]
    threshold = ident["threshold"]
    pairs = [(cfg["coeffs"]["b"], cfg["coeffs"]["c"])]
    results = []
    worst = 0.0
    for fid in range(ident["n_fields"]):
        field = flds.random_trig_field(seed=cfg["seed"] + 1000 + fid,
                                       T=grid.T, n_modes=3)
        for (b, c) in pairs:
            coeffs = derive_coeffs(b, c)
            for lam in ident["lambdas"]:
                for mu in ident["mus"]:
                    params = CarlemanParams(lam=lam, mu=mu, T=grid.T)
                    nl = identity_residual_nonlinear(
                        field, params, coeffs, grid, corrupt=args.corrupt_term)
                    lin = identity_residual_linear(
                        field, params, coeffs, grid, corrupt=args.corrupt_term)
                    worst = max(worst, nl.max_rel, lin.max_rel)
                    results.append({
                        "field": fid, "b": b, "c": c, "lambda": lam, "mu": mu,
                        "nonlinear_max_rel": nl.max_rel,
                        "nonlinear_l2_rel": nl.l2_rel,
                        "linear_max_rel": lin.max_rel,
                        "linear_l2_rel": lin.l2_rel,
                        "term_magnitudes": nl.term_magnitudes,
                    })
    tpos = T_coefficient_positivity(derive_coeffs(*pairs[0]))
    passed = worst <= threshold and tpos.passed
    write_json(os.path.join(out_dir, "identity_report.json"), {
        "config": cfg, "results": results, "worst_max_rel": worst,
        "threshold": threshold,
        "t_coefficient": {"value": tpos.t_value, "bound": tpos.lower_bound,
                          "passed": tpos.passed},
        "passed": passed,
        "corrupt_term": args.corrupt_term,
    })
    print(f"verify-identity: worst max relative residual {worst:.3e} "
          f"(threshold {threshold:g}) -> {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 1


def _manufactured_study(cfg, out_dir) -> int:
    """Convergence table of the manufactured-solution run over halved grids."""
    import math

    from .grid import integrate_q
    from .solver import dirichlet_data_from, grid_source

    coeffs = derive_coeffs(cfg["coeffs"]["b"], cfg["coeffs"]["c"])
    ref = flds.manufactured_reference()
    sizes = [32, 64, 128]
    rows = []
    errs = []
    for n in sizes:
        g = build_grid(build_domain(cfg), n, n, n, 0.5)
        sc = SolveConfig(b=coeffs.b, c=coeffs.c, bc="dirichlet_data",
                         bc_data=dirichlet_data_from(ref, g),
                         scheme="imex_cn", source=grid_source(ref, g, coeffs))
        y0 = ref.sample(g, times=np.array([0.0]))[0]
        Y = solve(y0, sc, g).Y
        err = float(np.sqrt(integrate_q(np.abs(Y - ref.sample(g)) ** 2, g)))
        errs.append(err)
        order = math.log2(errs[-2] / err) if len(errs) > 1 else float("nan")
        rows.append({"n": n, "l2_error": err, "order": order})
    write_csv(os.path.join(out_dir, "manufactured.csv"), rows,
              ["n", "l2_error", "order"])
    orders = [r["order"] for r in rows[1:]]
    ok = all(1.8 <= p <= 2.2 for p in orders)
    write_json(os.path.join(out_dir, "solve_summary.json"), {
        "config": cfg, "mode": "manufactured",
        "orders": orders, "passed": bool(ok),
    })
    print(f"solve --manufactured: orders {', '.join(f'{p:.2f}' for p in orders)}"
          f" -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_solve(args) -> int:
    cfg, out_dir = _prepare(args, "solve")
    if args.manufactured:
        return _manufactured_study(cfg, out_dir)
    grid = build_run_grid(cfg)
    coeffs = derive_coeffs(cfg["coeffs"]["b"], cfg["coeffs"]["c"])
    sc = SolveConfig(b=coeffs.b, c=coeffs.c, bc=cfg["solver"]["bc"],
                     scheme=cfg["solver"]["scheme"])
    y0 = flds.random_initial_field(grid, seed=cfg["seed"],
                                   amplitude=cfg["solver"]["amplitude"],
                                   bc=cfg["solver"]["bc"],
                                   n_modes=cfg["solver"]["n_modes"])
    res = solve(y0, sc, grid)
    save_trajectory(os.path.join(out_dir, "trajectory.bin"), res.Y, grid)
    bal = energy_balance(res.Y, grid)
    rows = [{"step": k, "t": grid.t_nodes[k + 1], "l2_norm": res.l2_norms[k + 1],
             "energy_residual": bal[k], "substeps": int(res.substeps[k])}
            for k in range(grid.nt)]
    write_csv(os.path.join(out_dir, "energy.csv"), rows,
              ["step", "t", "l2_norm", "energy_residual", "substeps"])
    dissipative = bool(np.all(np.diff(res.l2_norms) <= 1e-8 * res.l2_norms[:-1]))
    write_json(os.path.join(out_dir, "solve_summary.json"), {
        "config": cfg, "final_l2": res.l2_norms[-1],
        "max_energy_residual": float(bal.max()),
        "l2_dissipative": dissipative,
    })
    print(f"solve: final L2 {res.l2_norms[-1]:.6g}, "
          f"max energy residual {bal.max():.3e}, "
          f"dissipative={dissipative}")
    return 0 if dissipative else 1


def cmd_carleman_scan(args) -> int:
    cfg, out_dir = _prepare(args, "carleman-scan")
    grid = build_run_grid(cfg)
    sc_cfg = cfg["scan"]
    coeffs, suite = _solve_suite(cfg, grid, sc_cfg["n_trajectories"])
    cond = check_condition1(coeffs, cfg["coeffs"]["r0"], cfg["coeffs"]["delta0"])
    rows = []
    summary = {}
    ok = cond.passed
    for variant in sc_cfg["variants"]:
        scans = []
        for k, (bc, Y) in enumerate(suite):
            if variant.endswith("boundary") and bc != "dirichlet0":
                continue
            scan = lambda_scan(Y, grid, sc_cfg["lambdas"], sc_cfg["mus"],
                               variant, coeffs)
            scans.append(scan)
            for rep in scan.reports:
                row = rep.as_row()
                row["trajectory"] = k
                row["bc"] = bc
                rows.append(row)
        lams = sorted(float(l) for l in sc_cfg["lambdas"])
        per_mu = {}
        for mu in sc_cfg["mus"]:
            stabs = [s.stabilization_lambda.get(float(mu)) for s in scans]
            c_last = suite_worst_constant(scans, lams[-1], float(mu))
            c_prev = suite_worst_constant(scans, lams[-2], float(mu))
            drift = abs(c_last - c_prev) / c_prev if c_prev > 0 else float("inf")
            per_mu[str(mu)] = {
                "stabilization_lambda": max(stabs) if all(
                    s is not None for s in stabs) else None,
                "c_emp_last": c_last, "c_emp_prev": c_prev,
                "c_emp_drift": drift,
            }
            ok = ok and np.isfinite(c_last) and drift <= 0.10 \
                and all(s is not None for s in stabs)
        summary[variant] = per_mu
    columns = sorted({k for row in rows for k in row}, key=str)
    write_csv(os.path.join(out_dir, "carleman_scan.csv"), rows, columns)
    write_json(os.path.join(out_dir, "carleman_summary.json"), {
        "config": cfg, "condition1": {"passed": cond.passed,
                                      "margins": cond.margins},
        "variants": summary, "passed": bool(ok),
    })
    print(f"carleman-scan: {len(rows)} cells -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_stability(args) -> int:
    cfg, out_dir = _prepare(args, "stability")
    grid = build_run_grid(cfg)
    st = cfg["stability"]
    coeffs = derive_coeffs(cfg["coeffs"]["b"], cfg["coeffs"]["c"])
    sc = SolveConfig(b=coeffs.b, c=coeffs.c, bc="dirichlet0",
                     scheme=cfg["solver"]["scheme"])
    y0 = flds.random_initial_field(grid, seed=cfg["seed"],
                                   amplitude=cfg["solver"]["amplitude"],
                                   bc="dirichlet0",
                                   n_modes=cfg["solver"]["n_modes"])
    w = flds.random_initial_field(grid, seed=cfg["seed"] + 77, amplitude=1.0,
                                  bc="dirichlet0",
                                  n_modes=cfg["solver"]["n_modes"])
    eps_list = [fr * grid.T for fr in st["eps_fractions"]]
    reports = perturbation_suite(y0, w, st["deltas"], eps_list, sc, grid,
                                 variants=tuple(st["variants"]))
    rows = [r.as_row() for r in reports]
    ok = True
    spreads = {}
    for variant in st["variants"]:
        for eps in eps_list:
            cs = [r.c_emp for r in reports
                  if r.variant == variant and r.epsilon == eps
                  and not r.degenerate and np.isfinite(r.c_emp)]
            if not cs:
                ok = False
                continue
            spread = max(cs) / min(cs)
            spreads[f"{variant}_eps_{eps:.6g}"] = spread
            ok = ok and spread <= 10.0
    write_csv(os.path.join(out_dir, "stability.csv"), rows,
              ["variant", "delta", "epsilon", "lhs", "rhs_obs", "c_u2", "c_u1",
               "c_emp", "c_emp_u1", "degenerate"])
    write_json(os.path.join(out_dir, "stability_summary.json"), {
        "config": cfg, "spreads": spreads, "passed": bool(ok),
    })
    print(f"stability: {len(rows)} reports -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_check_weights(args) -> int:
    cfg, out_dir = _prepare(args, "check-weights")
    grid = build_run_grid(cfg)
    g = cfg["grid"]
    from .grid import DomainSpec

    payload = {"config": cfg, "admissibility": {}, "derivatives": {},
               "monotonicity": {}}
    ok = True

    sq_spec = DomainSpec(shape="unit_square", omega_center=(0.5, 0.5),
                         omega_radius=0.25)
    disk_spec = DomainSpec(shape="unit_disk", omega_center=(0.0, 0.0),
                           omega_radius=0.35)
    sq_grid = grid if grid.spec.shape == "unit_square" \
        else build_grid(sq_spec, g["nx"], g["ny"], g["nt"], g["T"])
    disk_grid = grid if grid.spec.shape == "unit_disk" \
        else build_grid(disk_spec, g["nx"], g["ny"], g["nt"], g["T"])

    cases = [("square_psi1", sq_spec, "psi1", sq_grid),
             ("disk_psi1", disk_spec, "psi1", disk_grid),
             ("square_psi2", sq_spec, "psi2", sq_grid)]
    for name, spec, which, gg in cases:
        rep = verify_psi_admissibility(spec, which, gg)
        payload["admissibility"][name] = {
            "clauses": rep.clauses, "passed": rep.passed,
            "min_grad_outside_omega": rep.min_grad_outside_omega,
        }
        ok = ok and rep.passed

    lam0 = float(cfg["scan"]["lambdas"][0])
    mu0 = float(cfg["scan"]["mus"][0])
    for name, spec, which, gg in cases:
        family = "j1_interior" if which == "psi1" else "j2_boundary"
        params = CarlemanParams(lam=lam0, mu=mu0, T=g["T"], family=family)
        if spec.shape == "unit_square":
            pts = np.array([[0.3, 0.4], [0.5, 0.7], [0.8, 0.2]])
        else:
            pts = np.array([[0.2, 0.1], [-0.3, 0.4], [0.1, -0.5]])
        times = np.array([0.3, 0.5, 0.6]) * g["T"]
        cons = derivative_consistency(params, spec, which, pts, times)
        payload["derivatives"][name] = cons
        ok = ok and max(cons.values()) <= 1e-6

    for name, spec, which, gg in cases:
        family = "j1_interior" if which == "psi1" else "j2_boundary"
        params = CarlemanParams(lam=lam0, mu=mu0, T=g["T"], family=family)
        env = weight_envelope(params, gg, which)
        mono = check_time_monotonicity(env, gg)
        payload["monotonicity"][name] = mono
        ok = ok and mono["monotone_first_half"] and mono["symmetric"]
        if args.export_envelope and name == "square_psi1":
            export_envelope_csv(env, gg, os.path.join(out_dir, "envelope.csv"))

    payload["passed"] = bool(ok)
    write_json(os.path.join(out_dir, "weights_report.json"), payload)
    print(f"check-weights -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="glcarleman",
        description="Carleman-estimate laboratory for the cubic complex "
                    "Ginzburg-Landau equation")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--grid", type=int, default=None,
                        help="set nx = ny = nt")
    parser.add_argument("--lambda", dest="lam", type=_float_list, default=None,
                        help="override lambda list (comma separated)")
    parser.add_argument("--mu", dest="mu", type=_float_list, default=None,
                        help="override mu list (comma separated)")
    parser.add_argument("--output-dir", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-identity", help="pointwise weighted identity suite")
    p.add_argument("--corrupt-term", default=None,
                   choices=["B", "E", "U", "M", "H"],
                   help="deliberately flip one term (failure-path test)")
    p.set_defaults(fn=cmd_verify_identity)

    p = sub.add_parser("solve", help="forward solve with energy diagnostics")
    p.add_argument("--manufactured", action="store_true",
                   help="run the manufactured-solution convergence study")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("carleman-scan", help="lambda/mu scans of the inequalities")
    p.set_defaults(fn=cmd_carleman_scan)

    p = sub.add_parser("stability", help="state observation perturbation suite")
    p.set_defaults(fn=cmd_stability)

    p = sub.add_parser("check-weights", help="psi admissibility and weight checks")
    p.add_argument("--export-envelope", action="store_true")
    p.set_defaults(fn=cmd_check_weights)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
