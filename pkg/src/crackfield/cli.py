"""Command-line surface.

Commands: static, quasistatic, blowup, sif, stability, identity-check,
demo-load-collapse, sweep.  Exit codes: 0 success, 1 numerical failure
(a JSON error record lands in the run directory), 2 usage or config
errors.  CRACKFIELD_WORKERS bounds sweep concurrency.
"""

import argparse
import datetime
import itertools
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig
from .energy import LoadSpec, surface_energy, total_phase_energy
from .errors import ConfigError, CrackfieldError, NotDisconnecting
from .evolution import LoadProgram, quasistatic_run, stability_audit
from .fields import PhaseField, ScalarField, blowup_state
from .formats import (EnergiesWriter, import_snapshot, write_csv,
                      write_field_csv, write_fields_vtk, write_json_atomic)
from .solve import alternate_minimize, solve_displacement
from .stability import (CompetitorFamily, blowup_diagnose, check_ball_bound,
                        check_load_scaling, check_scaling_identity,
                        extract_sif, griffith_verdict)

COMMANDS = ("static", "quasistatic", "blowup", "sif", "stability",
            "identity-check", "demo-load-collapse", "sweep")


def _manifest(out_dir, cfg, grid, command, results, started):
    payload = {
        "command": command,
        "version": __version__,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config_text": cfg.text,
        "grid": grid.descriptor() if grid is not None else None,
        "results": results,
    }
    write_json_atomic(os.path.join(out_dir, "manifest.json"), payload)


def _state(cfg, grid, params, settings):
    """Imported snapshot if configured, else one static solve.

    [solver] elastic = true computes the sharp elastic state (v frozen at
    1) instead of a staggered solve.
    """
    u_path = cfg.get("stability", "input_u")
    if u_path:
        v_path = cfg.get("stability", "input_v")
        u, v = import_snapshot(grid, u_path, v_path)
        return u, v
    t = cfg.times()[0]
    loads = cfg.loads_at(t, grid)
    if cfg.get("solver", "elastic", False):
        u = solve_displacement(grid, None, params, loads, settings)
        return u, None
    res = alternate_minimize(grid, params, loads,
                             PhaseField.ones(grid), settings, cfg.split())
    return res.u, res.v


def _dump_state(out_dir, cfg, u, v, prefix=""):
    write_field_csv(os.path.join(out_dir, prefix + "u.csv"), u)
    fields = {"u": u}
    if v is not None:
        write_field_csv(os.path.join(out_dir, prefix + "v.csv"), v)
        fields["v"] = v
    if cfg.get("output", "vtk", False):
        write_fields_vtk(os.path.join(out_dir, prefix + "fields.vtk"), fields)


def cmd_static(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    settings = cfg.solver_settings()
    t = cfg.times()[0]
    res = alternate_minimize(grid, params, cfg.loads_at(t, grid),
                             PhaseField.ones(grid), settings, cfg.split())
    _dump_state(out_dir, cfg, res.u, res.v)
    EnergiesWriter(os.path.join(out_dir, "energies.csv")).append(0, t, res.ledger)
    write_csv(os.path.join(out_dir, "objective_history.csv"), "half_step,merged_objective",
              list(enumerate(res.objective_history)))
    print(f"static: {res.iterations} cycles, converged={res.converged}, "
          f"merged objective {res.ledger.merged_objective:.6e}")
    return grid, {"iterations": res.iterations, "converged": res.converged,
                  "ledger": res.ledger.as_dict()}


def cmd_quasistatic(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    settings = cfg.solver_settings()
    times = cfg.times()
    program = LoadProgram(times=times, loads_at=lambda t: cfg.loads_at(t, grid))
    energies = EnergiesWriter(os.path.join(out_dir, "energies.csv"))
    audit = None
    if "stability" in cfg.sections:
        audit = {"eps_list": cfg.get("stability", "eps_list", [0.5, 0.25]),
                 "r": cfg.get("stability", "r")}
        ann = cfg.get("stability", "annulus")
        if ann:
            audit["annulus"] = tuple(ann)

    def sink(k, step):
        step_dir = os.path.join(out_dir, f"step_{k:04d}")
        os.makedirs(step_dir, exist_ok=True)
        write_field_csv(os.path.join(step_dir, "u.csv"), step.u)
        write_field_csv(os.path.join(step_dir, "v.csv"), step.v)
        energies.append(k, step.time, step.ledger)
        if step.audits or audit is not None:
            write_json_atomic(os.path.join(step_dir, "audit.json"),
                              [a.as_dict() for a in step.audits])

    traj = quasistatic_run(grid, params, program, settings, cfg.split(),
                           audit=audit, sink=sink)
    print(f"quasistatic: {len(traj.steps)} steps, {len(traj.events)} events")
    return grid, {"steps": len(traj.steps), "events": traj.events}


def cmd_blowup(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    settings = cfg.solver_settings()
    u, v = _state(cfg, grid, params, settings)
    tip = cfg.get("stability", "tip")
    x0 = tuple(tip) if tip else grid.slit.tip
    eps_list = cfg.require("stability", "eps_list")
    r = cfg.require("stability", "r")
    diag = blowup_diagnose(u, x0, eps_list, r, v=v)
    for k, eps in enumerate(eps_list):
        pair = blowup_state(u, v, x0, eps, r)
        write_field_csv(os.path.join(out_dir, f"u_blowup_{k}.csv"), pair.u)
        if pair.v is not None:
            write_field_csv(os.path.join(out_dir, f"v_blowup_{k}.csv"), pair.v)
    payload = {"eps_list": list(diag.eps_list), "cauchy": diag.cauchy,
               "observed_rate": diag.observed_rate(), "x0": list(x0), "r": r}
    write_json_atomic(os.path.join(out_dir, "blowup.json"), payload)
    print("blowup cauchy:", " ".join(f"{d:.3e}" for d in diag.cauchy))
    return grid, payload


def cmd_sif(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    settings = cfg.solver_settings()
    u, _ = _state(cfg, grid, params, settings)
    tip = cfg.get("stability", "tip")
    x0 = tuple(tip) if tip else grid.slit.tip
    r_in, r_out = cfg.require("stability", "annulus")
    k_fit, residual = extract_sif(u, x0, r_in, r_out)
    verdict = griffith_verdict(k_fit, params.g_c,
                               cfg.get("stability", "tol_band", 0.05))
    err = 0.25 * math.pi * k_fit * k_fit
    payload = {"tip": list(x0), "k_fit": k_fit, "fit_residual": residual,
               "err": err, "g_c": params.g_c, "verdict": verdict}
    write_json_atomic(os.path.join(out_dir, "sif.json"), payload)
    print(f"sif: K = {k_fit:.7f}, err = {err:.7f}, verdict = {verdict}")
    return grid, payload


def cmd_stability(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    settings = cfg.solver_settings()
    u, v = _state(cfg, grid, params, settings)
    kwargs = {"params": params, "settings": settings}
    tip = cfg.get("stability", "tip")
    if tip:
        kwargs["tips"] = [tuple(tip)]
    eps_list = cfg.get("stability", "eps_list")
    if eps_list:
        kwargs["eps_list"] = eps_list
    for name in ("r", "tol_band", "competitor_r", "ridge_threshold"):
        val = cfg.get("stability", name)
        if val is not None:
            kwargs[name] = val
    ann = cfg.get("stability", "annulus")
    if ann:
        kwargs["annulus"] = tuple(ann)
    angles = cfg.get("stability", "angles")
    lengths = cfg.get("stability", "lengths")
    if angles and lengths:
        kwargs["competitors"] = CompetitorFamily(
            tuple(angles), tuple(lengths),
            cfg.get("stability", "insertion_cells", 2))
    reports = stability_audit(u, v=v, **kwargs)
    payload = [rep.as_dict() for rep in reports]
    write_json_atomic(os.path.join(out_dir, "audit.json"),
                      {"reports": payload, "no_tips": not payload})
    sweep_rows = [row for rep in reports for row in (rep.competitor_rows or [])]
    if sweep_rows:
        from .stability import CompetitorResult
        write_csv(os.path.join(out_dir, "competitors.csv"),
                  CompetitorResult.CSV_HEADER, sweep_rows)
    if not reports:
        print("stability: no tips found (empty audit)")
    for rep in reports:
        print(f"stability: tip {rep.tip} K={rep.k_fit:.5f} err={rep.err:.5f} "
              f"verdict={rep.verdict}")
    return grid, {"reports": payload}


def cmd_identity_check(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    settings = cfg.solver_settings()
    u, v = _state(cfg, grid, params, settings)
    tip = cfg.get("stability", "tip")
    if tip:
        x0 = tuple(tip)
    elif grid.slit is not None:
        x0 = grid.slit.tip
    else:
        x0 = grid.node_point(grid.nx // 2, grid.ny // 2)
    eps_list = cfg.require("stability", "eps_list")
    r = cfg.require("stability", "r")
    rows = []
    worst = 0.0
    for eps in eps_list:
        chk = check_scaling_identity(u, v, params, x0, eps, r)
        for term, lhs, rhs, rel in chk.rows:
            rows.append((eps, term, lhs, rhs, rel))
            worst = max(worst, rel)
        fsec = cfg.sections.get("loads", {}).get("f")
        if fsec is not None:
            from .config import compile_expr
            t = cfg.times()[0]
            fn = compile_expr(fsec)
            lc = check_load_scaling(u, lambda x, y: fn(x, y, t), x0, eps, r)
            rows.append((eps, "load", lc.lhs, lc.rhs, lc.rel_diff))
            worst = max(worst, lc.rel_diff)
    write_csv(os.path.join(out_dir, "identity.csv"),
              "eps,term,lhs,rhs,rel_diff", rows)
    print(f"identity-check: {len(rows)} rows, max rel_diff = {worst:.3e}")
    return grid, {"rows": len(rows), "max_rel_diff": worst}


def cmd_demo_load_collapse(cfg, out_dir):
    grid = cfg.build_grid()
    params = cfg.material()
    t = cfg.times()[0]
    loads = cfg.loads_at(t, grid)
    band_y = cfg.require("demo", "band_y")
    band_rows = cfg.get("demo", "band_rows", 3)
    amplitudes = cfg.require("demo", "amplitudes")
    table, slope, ref = demo_load_collapse(grid, params, loads, band_y,
                                           band_rows, amplitudes)
    write_csv(os.path.join(out_dir, "collapse.csv"), "amplitude,e_load", table)
    payload = {"fitted_slope": slope, "reference_slope": ref,
               "slope_rel_err": abs(slope - ref) / abs(ref) if ref else None,
               "strictly_decreasing": all(b[1] < a[1] for a, b in
                                          zip(table[:-1], table[1:]))}
    write_json_atomic(os.path.join(out_dir, "collapse.json"), payload)
    print(f"demo-load-collapse: slope {slope:.6f} vs -int(g phi) {ref:.6f}")
    return grid, payload


def demo_load_collapse(grid, params, loads, band_y, band_rows, amplitudes):
    """Energy table of the disconnecting family u_c = c * phi.

    A horizontal band of band_rows node rows at band_y carries v = 0; phi
    is 1 strictly above the band center and 0 elsewhere, so its gradient
    lives inside the dead band and the elastic term keeps only the
    eta-residual.  The load potential is linear in c, so the total energy
    decreases without bound as c grows.
    """
    if len(amplitudes) < 2:
        raise ConfigError("[demo] amplitudes: need at least two values")
    half = (band_rows - 1) / 2.0
    on_band = np.abs(grid.node_y - band_y) <= half * grid.hy + 1e-12
    v = PhaseField(grid, np.where(on_band, 0.0, 1.0))

    # the band must disconnect every loaded Neumann node from Dirichlet data
    from .solve import stiffness_coefficients, assemble_stiffness
    import scipy.sparse as sp
    from scipy.sparse.csgraph import connected_components
    coeff = stiffness_coefficients(grid, v, params)
    live = coeff > params.mu * (params.eta_delta + 1e-12)
    cn = grid.cell_nodes[live]
    n = grid.n_nodes
    adj = sp.coo_matrix((np.ones(3 * cn.shape[0]),
                         (np.concatenate([cn[:, 0]] * 3),
                          np.concatenate([cn[:, 1], cn[:, 2], cn[:, 3]]))),
                        shape=(n, n))
    _, labels = connected_components(adj + adj.T, directed=False)
    dmask, _ = loads.dirichlet_arrays(grid)
    ids, w, g = loads.neumann_quadrature(grid)
    loaded = ids[np.abs(g) > 0.0]
    if loaded.size == 0:
        raise ConfigError("demo needs a nonzero boundary load g")
    if np.intersect1d(labels[loaded], labels[dmask]).size:
        raise NotDisconnecting("the damage band does not disconnect the "
                               "loaded boundary from the Dirichlet data")

    phi = (grid.node_y > band_y + 1e-12).astype(float)
    ref_slope = -float(np.dot(w, g * phi[ids]))
    table = []
    for c in amplitudes:
        u = ScalarField(grid, c * phi)
        ledger = total_phase_energy(u, v, params, loads)
        table.append((float(c), ledger.total))
    cs = np.array([row[0] for row in table])
    es = np.array([row[1] for row in table])
    cm = cs - cs.mean()
    slope = float(np.dot(cm, es - es.mean()) / np.dot(cm, cm))
    return table, slope, ref_slope


def cmd_sweep(cfg, out_dir, config_path):
    sweep = cfg.sections.get("sweep")
    if not sweep:
        raise ConfigError("sweep needs a [sweep] section")
    command = sweep.get("command")
    if command not in COMMANDS or command == "sweep":
        raise ConfigError(f"[sweep] command: invalid {command!r}")
    axes = {k: [v.strip() for v in raw.split(";") if v.strip()]
            for k, raw in sweep.items() if k != "command"}
    if not axes:
        raise ConfigError("[sweep] needs at least one parameter axis")
    keys = sorted(axes)
    combos = list(itertools.product(*(axes[k] for k in keys)))
    workers = int(os.environ.get("CRACKFIELD_WORKERS",
                                 cfg.get("output", "workers", 1)))
    children = []
    jobs = []
    for idx, combo in enumerate(combos):
        child_dir = os.path.join(out_dir, f"sweep_{idx:04d}")
        os.makedirs(child_dir, exist_ok=True)
        overrides = [f"{k}={v}" for k, v in zip(keys, combo)]
        overrides.append(f"output.directory={child_dir}")
        children.append({"directory": child_dir, "overrides": overrides})
        jobs.append((cfg.text, command, overrides, child_dir,
                     os.path.abspath(os.path.join(out_dir, "manifest.json"))))
    if workers > 1:
        import concurrent.futures as cf
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_run_child, jobs))
    else:
        codes = [_run_child(job) for job in jobs]
    for child, code in zip(children, codes):
        child["exit_status"] = code
    print(f"sweep: {len(children)} children, "
          f"{sum(1 for c in codes if c == 0)} succeeded")
    if any(codes):
        raise CrackfieldError("one or more sweep children failed")
    return None, {"command": command, "children": children}


def _run_child(job):
    text, command, overrides, child_dir, parent_manifest = job
    cfg = RunConfig(text).with_overrides(overrides)
    code = _dispatch(command, cfg, child_dir, None, parent=parent_manifest)
    return code


def _dispatch(command, cfg, out_dir, config_path, parent=None):
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    os.makedirs(out_dir, exist_ok=True)
    handlers = {
        "static": cmd_static,
        "quasistatic": cmd_quasistatic,
        "blowup": cmd_blowup,
        "sif": cmd_sif,
        "stability": cmd_stability,
        "identity-check": cmd_identity_check,
        "demo-load-collapse": cmd_demo_load_collapse,
    }
    try:
        if command == "sweep":
            grid, results = cmd_sweep(cfg, out_dir, config_path)
        else:
            grid, results = handlers[command](cfg, out_dir)
    except ConfigError:
        raise
    except CrackfieldError as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "command": command}
        write_json_atomic(os.path.join(out_dir, "error.json"), record)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if parent is not None:
        results = dict(results or {})
        results["parent_manifest"] = parent
    _manifest(out_dir, cfg, grid, command, results, started)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="crackfield",
        description="antiplane phase-field fracture toolkit")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="path to a run configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    parser.add_argument("--out", help="output directory override")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = RunConfig(text).with_overrides(args.overrides)
        out_dir = args.out or cfg.output_dir(
            default=os.path.splitext(os.path.basename(args.config))[0] + "_out")
        return _dispatch(args.command, cfg, out_dir, args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
