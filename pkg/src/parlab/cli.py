"""Experiment runner: TOML config in, JSON/CSV (and optionally PNG) out.

Each run writes into a directory named by the hash of its configuration:
report.json and tables/*.csv are byte-deterministic for a fixed config and
seed; wall-clock metadata lives separately in metadata.json so it cannot
perturb the reproducible record.  Exit codes: 0 all checks passed, 2 when
at least one inequality suite failed, 1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from parlab import __version__
from parlab.errors import ParlabError
from parlab.grid import GridFunction, ParabolicCylinder, export_csv, make_domain, make_grid
from parlab.report import EstimateReport, write_ratio_table_csv, write_reports_json


def _load_config(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _config_hash(path, seed):
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    h.update(str(seed).encode())
    return h.hexdigest()[:12]


def _outdir(args):
    base = Path(args.out) if args.out else Path("runs")
    run = base / f"{args.command.replace('-', '_')}-{_config_hash(args.config, args.seed)}"
    (run / "tables").mkdir(parents=True, exist_ok=True)
    if args.plot:
        (run / "figures").mkdir(exist_ok=True)
    return run


def _finish(run_dir, report, reports, t_start, args):
    write_reports_json(reports, run_dir / "tables" / "estimates.json")
    write_ratio_table_csv(reports, run_dir / "tables" / "ratios.csv")
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    meta = {
        "elapsed_seconds": time.time() - t_start,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
    }
    with open(run_dir / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    if args.plot and reports:
        from parlab import plots

        plots.render_ratio_table(reports, run_dir / "figures" / "ratios.png")
    failed = [r for r in reports if not r.passed]
    print(f"[{args.command}] wrote {run_dir}")
    for r in reports:
        print(f"  {'PASS' if r.passed else 'FAIL'} {r.name}: ratio={r.ratio:.4g} "
              f"tol={r.tolerance:.4g}")
    return 2 if failed else 0


def _build_domain(cfg):
    d = dict(cfg.get("domain", {}))
    kind = d.pop("kind", "interval")
    d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
    return make_domain(kind, **d)


def _build_grid(cfg, domain):
    g = cfg.get("grid", {})
    return make_grid(domain, t0=g.get("t0", 0.0), T=g.get("T", 0.1), nt=g.get("nt", 33))


def _build_nonlinearity(cfg, domain):
    from parlab.solver import Nonlinearity

    n = cfg.get("nonlinearity", {})
    return Nonlinearity(
        p=n.get("p", 2.0),
        dim=domain.dim,
        lambda0=n.get("lambda0", 1.0),
        lambda1=n.get("lambda1", 1.0),
        variant=n.get("variant", "p_laplace"),
        eps=n.get("eps", 0.0),
    )


def _build_solve_config(cfg):
    from parlab.solver import SolveConfig

    s = cfg.get("solve", {})
    return SolveConfig(
        newton_tol=s.get("tol", 1e-10),
        max_newton=s.get("max_newton", 60),
        regularization_eps=s.get("eps", 1e-9),
    )


def _data_fields(cfg, grid, rng):
    """(lateral w, initial values) from the named analytic family or file."""
    d = cfg.get("data", {})
    family = d.get("family", "sine")
    amp = d.get("amplitude", 1.0)
    dom = grid.spatial
    if "file" in d:
        from parlab.grid import read_grid

        f = read_grid(d["file"])
        return f, f.values[0].copy()
    x = dom.center_mesh()[0]
    tt = grid.times.reshape((-1,) + (1,) * dom.dim)
    if family == "sine":
        w = GridFunction.zeros(grid)
        init = amp * np.sin(np.pi * x / dom.lengths[0]) * dom.mask
    elif family == "sine_drift":
        w = GridFunction(
            grid, amp * 0.3 * np.sin(np.pi * x / dom.lengths[0]) * (0.5 + tt / grid.T)
        )
        init = w.values[0].copy()
    elif family == "kinked":
        kink = np.where(tt < grid.T / 3, 0.0, tt - grid.T / 3)
        w = GridFunction(grid, 20.0 * amp * kink * np.sin(np.pi * x / dom.lengths[0]))
        init = np.zeros(dom.counts)
    elif family == "zero":
        w = GridFunction.zeros(grid)
        init = np.zeros(dom.counts)
    else:
        raise ParlabError(f"unknown data family {family!r}")
    return w, init


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_solve(cfg, args, rng, run_dir):
    from parlab import plots
    from parlab.grid import write_grid
    from parlab.solver import solve

    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    nl = _build_nonlinearity(cfg, dom)
    scfg = _build_solve_config(cfg)
    w, init = _data_fields(cfg, grid, rng)
    diag = {}
    u = solve(nl, grid, w, init, scfg, diagnostics=diag)
    write_grid(u, run_dir / "solution.pgrd")
    export_csv(u, run_dir / "tables" / "solution.csv")
    energy = diag["l2_energy"]
    reports = [
        EstimateReport.from_sides(
            "energy_dissipation_when_homogeneous",
            max(np.diff(energy).max(), 0.0) if np.allclose(w.values, 0) else 0.0,
            max(energy[0], 1e-300) * 1e-10 + 1e-300,
            1.0,
            meta={"note": "positive increments only count for zero lateral data"},
        )
    ]
    report = {
        "grid": {"cells": list(dom.counts), "nt": grid.nt, "dt": grid.dt},
        "newton_iterations": diag["newton_iterations"],
        "final_energy": energy[-1],
        "gradient_p_integral": diag["gradient_p_integral"],
    }
    if args.plot:
        plots.render_solution_slices(u, run_dir / "figures" / "solution.png")
    return report, reports


def cmd_existence(cfg, args, rng, run_dir):
    from parlab import plots
    from parlab.solver import approximation_loop

    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    nl = _build_nonlinearity(cfg, dom)
    scfg = _build_solve_config(cfg)
    w, _ = _data_fields(cfg, grid, rng)
    ex = cfg.get("existence", {})
    scales = list(ex.get("scales", [0, 1, 2, 3]))
    run = approximation_loop(nl, w, scales, cfg=scfg, beta=ex.get("beta", 0.1))
    off = [float(run.pairwise_energy[k, k + 1]) for k in range(len(scales) - 1)]
    monotone = all(off[i + 1] <= off[i] for i in range(len(off) - 1))
    reports = [
        EstimateReport.from_sides("mollifier_gradient_bound", run.c_app_gradient,
                                  ex.get("c_app_cap", 2.0), 1.0),
        EstimateReport.from_sides("mollifier_time_bound", run.c_app_time,
                                  ex.get("c_app_cap", 2.0), 1.0),
        EstimateReport.from_sides("pairwise_energy_monotone", 0.0 if monotone else 1.0,
                                  0.5, 1.0, meta={"offdiagonal": off}),
    ]
    report = {
        "scales": scales,
        "pairwise_energy": run.pairwise_energy.tolist(),
        "cauchy_trend": run.cauchy_trend,
        "c_app_gradient": run.c_app_gradient,
        "c_app_time": run.c_app_time,
    }
    np.savetxt(run_dir / "tables" / "pairwise_energy.csv", run.pairwise_energy,
               delimiter=",")
    if args.plot:
        plots.render_decay(off, run_dir / "figures" / "energy_decay.png")
    return report, reports


def cmd_truncate(cfg, args, rng, run_dir):
    from parlab import plots
    from parlab.calculus import steklov
    from parlab.solver import solve
    from parlab.truncation import (
        build_good_set,
        lambda_from_percentile,
        lipschitz_certify_truncation,
        truncate,
        verify_truncation_bounds,
    )

    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    nl = _build_nonlinearity(cfg, dom)
    scfg = _build_solve_config(cfg)
    w, init = _data_fields(cfg, grid, rng)
    u = solve(nl, grid, w, init, scfg)
    t = cfg.get("truncate", {})
    q = t.get("q", nl.p - 0.5)
    variant = t.get("variant", "apriori")
    Q = None
    if variant == "initial":
        variant = "initial_boundary"
    if variant == "initial_boundary":
        rho = t.get("rho", 4 * max(dom.cell_size))
        alpha_g = t.get("gamma", 1.0)
        Q = ParabolicCylinder((tuple(L / 2 for L in dom.lengths),
                               grid.t0 + 0.5 * alpha_g * rho * rho), rho, alpha_g)
    h0 = nl.h0_values(grid)
    gs0 = build_good_set(u, w, h0, q=q, lam=np.inf, p=nl.p, variant=variant, Q=Q)
    lam = lambda_from_percentile(gs0.g, t.get("lambda_percentile", 90.0))
    gs = build_good_set(u, w, h0, q=q, lam=lam, p=nl.p, variant=variant, Q=Q,
                        w_field=gs0.w_field)
    if variant == "initial_boundary":
        v_pre = gs.v
    else:
        v_pre = u.with_values(u.values - w.values)
    vh = steklov(v_pre, 2 * grid.dt)
    tr = truncate(vh, gs, lam, nl.p)
    reports = verify_truncation_bounds(tr)
    caps = t.get("tolerances", {})
    reports = [
        EstimateReport.from_sides(r.name, r.lhs, r.rhs, caps.get(r.name, np.inf),
                                  meta=r.meta)
        for r in reports
    ]
    lip = None if tr.identity else lipschitz_certify_truncation(tr, lam, nl.p, rng=rng)
    report = {
        "lambda": lam,
        "variant": variant,
        "complement_cells": int((~gs.E).sum()),
        "cylinders": 0 if tr.identity else tr.cover.size,
        "zeroed_cylinders": int(tr.zeroed.sum()) if not tr.identity else 0,
        "lipschitz": None if lip is None else {
            "direct_over_lambda": lip["direct_over_lambda"],
            "campanato_over_lambda": lip["campanato_over_lambda"],
        },
    }
    if args.plot:
        plots.render_field(gs.g, run_dir / "figures" / "good_set_g.png", title="g")
        plots.render_solution_slices(tr.v_trunc, run_dir / "figures" / "v_trunc.png")
    return report, reports


def cmd_maximal(cfg, args, rng, run_dir):
    from parlab import plots
    from parlab.calculus import neg_sobolev_norm
    from parlab.maximal import (
        neg_maximal,
        neg_maximal_spacetime,
        strong_maximal,
        weak_one_one_ratio,
    )

    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    m = cfg.get("maximal", {})
    op = args.op or m.get("op", "strong")
    theta = args.theta or m.get("theta", 1.2)
    qexp = args.q or m.get("q", 2.0)
    reports = []
    report = {"op": op, "theta": theta, "q": qexp}
    if op == "strong":
        n_inst = m.get("instances", 20)
        worst = 0.0
        for _ in range(n_inst):
            vals = rng.standard_normal(grid.shape) * dom.mask
            worst = max(worst, weak_one_one_ratio(vals, grid))
        bound = 5.0 ** (dom.dim + 2)
        reports.append(
            EstimateReport.from_sides("weak_1_1_ratio", worst, bound, 1.0,
                                      meta={"instances": n_inst})
        )
        mf = strong_maximal(rng.standard_normal(grid.shape) * dom.mask, grid)
        report["sample_max"] = float(mf.max())
        if args.plot:
            plots.render_field(mf if dom.dim == 1 else mf[grid.nt // 2],
                               run_dir / "figures" / "maximal.png", title="M f")
    elif op == "neg":
        f = rng.standard_normal(dom.counts) * dom.mask
        norm, rep = neg_sobolev_norm(f, 2.0, dom)
        mf = neg_maximal(rep.psi, theta, dom)
        vol = dom.cell_volume
        mag = np.sqrt((rep.psi**2).sum(axis=0))
        num = float(((mf**qexp).sum() * vol) ** (1 / qexp))
        den = float(((mag**qexp).sum() * vol) ** (1 / qexp))
        reports.append(
            EstimateReport.from_sides("dual_maximal_strong_bound", num,
                                      max(den, 1e-300), m.get("cap", 3.0))
        )
        report["dual_norm"] = norm
    elif op == "neg-spacetime":
        w_field = rng.standard_normal((grid.nt, dom.dim) + dom.counts)
        ours = neg_maximal_spacetime(w_field, theta, grid)
        mag = np.sqrt((w_field**2).sum(axis=1))
        other = strong_maximal(mag**theta, grid) ** (1.0 / theta)
        gap = float((ours - other).max())
        reports.append(
            EstimateReport.from_sides("timeslice_vs_strong_chain", max(gap, 0.0),
                                      1e-10 + 1e-300, 1.0)
        )
        report["sup_value"] = float(ours.max())
    else:
        raise ParlabError(f"unknown maximal op {op!r}")
    return report, reports


def cmd_whitney(cfg, args, rng, run_dir):
    from parlab.whitney import build_cover, check_cover

    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    wcfg = cfg.get("whitney", {})
    lam = wcfg.get("lam", 1.0)
    p = wcfg.get("p", 2.0)
    kind = wcfg.get("set", "halfspace")
    E = np.zeros(grid.shape, dtype=bool)
    if kind == "halfspace":
        E[grid.times <= wcfg.get("cut", 0.3 * grid.T)] = True
    elif kind == "random":
        gamma = lam ** (2.0 - p)
        for _ in range(int(wcfg.get("pieces", 3))):
            x = tuple(rng.uniform(0.2, 0.8) * L for L in dom.lengths)
            t = rng.uniform(0.2, 0.8) * grid.T
            r = rng.uniform(0.1, 0.3) * max(dom.lengths)
            q = ParabolicCylinder((x, t), r, gamma)
            from parlab.grid import cylinder_masks

            tmask, smask = cylinder_masks(grid, q)
            E[tmask] |= smask
        if not E.any():
            E[0] = True
        if E.all():
            E[-1] = False
    else:
        raise ParlabError(f"unknown whitney set {kind!r}")
    cover = build_cover(E, grid, lam, p)
    res = check_cover(cover, E, rng=rng)
    stats = cover.stats()
    reports = [
        EstimateReport.from_sides("whitney_W2_snap", res["W2_max_abs_error"],
                                  res["W2_cell"] + 1e-300, 1.0),
        EstimateReport.from_sides("whitney_W14_partition", res["W14_max_error"],
                                  1e-10 + 1e-300, 1.0),
        EstimateReport.from_sides(
            "whitney_disjoint_cover",
            0.0 if (res["W3_ok"] and res["W6_ok"]) else 1.0, 0.5, 1.0),
    ]
    report = {"stats": stats, "invariants": {k: v for k, v in res.items()}}
    rows = np.column_stack([cover.centers_t, cover.radii])
    np.savetxt(run_dir / "tables" / "cylinders.csv", rows, delimiter=",",
               header="t_center,radius", comments="")
    return report, reports


def cmd_capacity(cfg, args, rng, run_dir):
    from parlab.capacity import thickness_check

    dom = _build_domain(cfg)
    c = cfg.get("capacity", {})
    rep = thickness_check(
        dom,
        c.get("p", 2.0),
        radii_cells=tuple(c.get("radii_cells", (2, 4, 8))),
        max_points=c.get("max_points", 12),
        rng=rng,
    )
    reports = [
        EstimateReport.from_sides("thickness_b0_floor", c.get("b0_floor", 0.05),
                                  max(rep.b0_empirical, 1e-300), 1.0,
                                  meta={"b0": rep.b0_empirical})
    ]
    report = rep.to_dict()
    with open(run_dir / "tables" / "thickness.csv", "w", encoding="utf-8") as fh:
        fh.write("radius,ratio\n")
        for _, r, ratio in rep.samples:
            fh.write(f"{r!r},{ratio!r}\n")
    return report, reports


def _estimate_instance(cfg, args, rng):
    from parlab.solver import solve

    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    nl = _build_nonlinearity(cfg, dom)
    scfg = _build_solve_config(cfg)
    w, init = _data_fields(cfg, grid, rng)
    u = solve(nl, grid, w, init, scfg)
    return dom, grid, nl, u, w


def cmd_verify_apriori(cfg, args, rng, run_dir):
    from parlab.estimates import ladder, verify_apriori

    dom, grid, nl, u, w = _estimate_instance(cfg, args, rng)
    e = cfg.get("estimates", {})
    reports = []
    for beta in e.get("betas", [0.1]):
        lad = ladder(nl.p, dom.dim, beta, e.get("eps0", 0.5))
        rep = verify_apriori(u, w, nl, lad, rng=rng)
        rep.tolerance = e.get("tolerance", np.inf)
        rep.passed = rep.ratio <= rep.tolerance
        reports.append(rep)
    report = {"betas": e.get("betas", [0.1]), "p": nl.p,
              "ratios": [r.ratio for r in reports]}
    return report, reports


def cmd_verify_higher_int(cfg, args, rng, run_dir):
    from parlab.estimates import (
        find_intrinsic_cylinder,
        ladder,
        verify_caccioppoli,
        verify_higher_integrability,
        verify_reverse_holder,
    )

    dom, grid, nl, u, w = _estimate_instance(cfg, args, rng)
    e = cfg.get("estimates", {})
    beta = e.get("beta", 0.1)
    lad = ladder(nl.p, dom.dim, beta, e.get("eps0", 0.5))
    rho = e.get("rho_cells", 4) * max(dom.cell_size)
    center = tuple(L / 2 for L in dom.lengths)
    icd = find_intrinsic_cylinder(u, w, nl, lad, center, rho)
    tol = e.get("tolerance", np.inf)
    reports = []
    for rep in (
        verify_caccioppoli(u, w, nl, icd, lad),
        verify_reverse_holder(u, w, nl, icd, lad),
        verify_higher_integrability(
            u, w, nl, icd.Q,
            ParabolicCylinder(icd.Q.center, 2 * icd.Q.r, icd.Q.gamma / 2.0),
            lad,
        ),
    ):
        rep.tolerance = tol
        rep.passed = rep.ratio <= tol
        reports.append(rep)
    report = {
        "alpha0": icd.alpha0, "rho": rho, "beta": beta,
        "two_sided": list(icd.two_sided),
        "ratios": {r.name: r.ratio for r in reports},
    }
    return report, reports


def cmd_gehring(cfg, args, rng, run_dir):
    from parlab.estimates import gehring_estimate, ladder

    g = cfg.get("gehring", {})
    dom = _build_domain(cfg)
    grid = _build_grid(cfg, dom)
    lad = ladder(g.get("p", 2.0), dom.dim, g.get("beta", 0.1), g.get("eps0", 0.5))
    mesh = dom.center_mesh()
    center = tuple(L / 2 for L in dom.lengths)
    r = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
    q_c = g.get("q_c", 2.5)
    prof = np.maximum(r, 1e-9) ** (-2.0 / q_c)
    vals = np.broadcast_to(prof, grid.shape).copy()
    region = ParabolicCylinder(
        (center, (grid.t0 + grid.T) / 2),
        g.get("region_radius", 0.45 * min(dom.lengths)),
        ((grid.T - grid.t0) / 2) / (0.45 * min(dom.lengths)) ** 2,
    )
    best, diag = gehring_estimate(vals, np.ones_like(vals), lad, region, grid, rng=rng)
    est = diag["estimated_exponent"]
    reports = [
        EstimateReport.from_sides("gehring_exponent_error", abs(est - q_c),
                                  q_c * g.get("rel_tol", 0.1), 1.0,
                                  meta={"estimated": est, "target": q_c})
    ]
    report = {"delta": best, "estimated_exponent": est,
              "alpha0": diag["alpha0"], "lambda0": diag["lambda0"],
              "stopping": diag["stopping"]}
    with open(run_dir / "tables" / "delta_table.csv", "w", encoding="utf-8") as fh:
        fh.write("delta,growth_fine,growth_coarse,rhs_ratio,pass\n")
        for row in diag["delta_table"]:
            fh.write(
                f"{row['delta']!r},{row['growth_fine']!r},{row['growth_coarse']!r},"
                f"{row['rhs_ratio']!r},{int(row['pass'])}\n"
            )
    return report, reports


_HANDLERS = {
    "solve": cmd_solve,
    "existence": cmd_existence,
    "truncate": cmd_truncate,
    "maximal": cmd_maximal,
    "whitney": cmd_whitney,
    "capacity": cmd_capacity,
    "verify-apriori": cmd_verify_apriori,
    "verify-higher-int": cmd_verify_higher_int,
    "gehring": cmd_gehring,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="parlab",
        description="degenerate-parabolic numerical laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML configuration file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap (best effort via threadpoolctl)")
        sp.add_argument("--out", default=None, help="output root (default: runs/)")
        sp.add_argument("--plot", action="store_true",
                        help="also render matplotlib figures next to the tables")
        if name == "maximal":
            sp.add_argument("--op", choices=["strong", "neg", "neg-spacetime"],
                            default=None)
            sp.add_argument("--theta", type=float, default=None)
            sp.add_argument("--q", type=float, default=None)
    args = parser.parse_args(argv)

    if args.threads:
        try:
            from threadpoolctl import threadpool_limits

            threadpool_limits(args.threads)
        except Exception:
            pass

    t_start = time.time()
    try:
        cfg = _load_config(args.config)
        rng = np.random.default_rng(args.seed)
        run_dir = _outdir(args)
        report, reports = _HANDLERS[args.command](cfg, args, rng, run_dir)
        return _finish(run_dir, report, reports, t_start, args)
    except (OSError, ParlabError, KeyError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
