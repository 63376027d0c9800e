"""Quasi-static evolution with irreversibility, energy bookkeeping and
per-step stability audits.

Each load step alternately minimizes with the previous step's damage as
the upper bound, so v is nodewise non-increasing across steps (the
discrete reading of monotone crack growth).  Work done by applied forces
and moving Dirichlet data accumulates by the trapezoidal rule with
discrete reactions; a Dirichlet-driven purely elastic run is then balanced
to rounding error for affine ramps.  Energy-balance violations are
recorded as events and the run continues: staggered states are critical
points, not global minimizers, and the balance is a check, not a law the
solver can enforce.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import total_phase_energy
from .errors import (AnnulusEmpty, NoTipFound, ProgramEmpty, TipOffLattice,
                     WindowTooCoarse)
from .fields import PhaseField, ScalarField
from .formats import import_snapshot  # noqa: F401  (snapshot audits enter here)
from .solve import (DEFAULT_SETTINGS, alternate_minimize, assemble_stiffness,
                    load_vector, solve_displacement, stiffness_coefficients,
                    StaggeredResult)
from .stability import (StabilityReport, blowup_diagnose, check_ball_bound,
                        competitor_test, extract_sif, griffith_verdict)


@dataclass
class LoadProgram:
    """Times plus per-time load specifications.

    loads_at(t) must return a LoadSpec; the side partition must not change
    over time.
    """

    times: tuple
    loads_at: callable

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ProgramEmpty("load program has no time steps")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        parts = {tuple(sorted(self.loads_at(t).partition.items())) for t in times}
        if len(parts) != 1:
            raise ValueError("boundary partition must be fixed over time")


@dataclass
class TrajectoryStep:
    time: float
    u: ScalarField
    v: PhaseField
    ledger: object
    audits: list
    iterations: int
    converged: bool


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def surface_energies(self):
        return [s.ledger.surface for s in self.steps]

    def totals(self):
        return [s.ledger.total for s in self.steps]


def _reactions(grid, v, params, loads, u):
    coeff = stiffness_coefficients(grid, v, params)
    A = assemble_stiffness(grid, coeff)
    b = load_vector(grid, loads)
    return A @ u.values - b


def quasistatic_run(grid, params, program, settings=DEFAULT_SETTINGS,
                    split="full", v_init=None, elastic_only=False,
                    energy_tol_rel=0.02, audit=None, sink=None):
    """Drive the staggered solver through the load program.

    elastic_only freezes v at v_init (control runs for the work ledger).
    audit: optional dict of stability_audit keyword arguments applied at
    every step.  sink: optional callable(step_index, TrajectoryStep)
    invoked as steps complete (used for persistence).
    """
    v = v_init if v_init is not None else PhaseField.ones(grid)
    traj = Trajectory()
    work = 0.0
    prev = None  # (u, loads, reactions, f_nodal, neumann, time)
    u_warm = None
    for k, t in enumerate(program.times):
        loads = program.loads_at(t)
        if elastic_only:
            u = solve_displacement(grid, v, params, loads, settings, x0=u_warm)
            res = StaggeredResult(u, v, None, 1, True, [])
        else:
            res = alternate_minimize(grid, params, loads, v, settings, split,
                                     u_init=u_warm)
        u, v = res.u, res.v
        u_warm = u
        reac = _reactions(grid, v, params, loads, u)
        f_nodal = loads.body_values(grid) if loads.f is not None else None
        neu = loads.neumann_quadrature(grid)
        dmask, _ = loads.dirichlet_arrays(grid)

        if prev is not None:
            du = u.values - prev[0].values
            dwork = 0.0
            if f_nodal is not None or prev[3] is not None:
                fbar = 0.5 * ((f_nodal if f_nodal is not None else 0.0)
                              + (prev[3] if prev[3] is not None else 0.0))
                dwork += float(np.dot(grid.full_node_weights, fbar * du))
            ids, w, g = neu
            if ids.size:
                gbar = 0.5 * (g + prev[4][2])
                dwork += float(np.dot(w, gbar * du[ids]))
            rbar = 0.5 * (reac + prev[2])
            dwork += float(np.dot(rbar[dmask], du[dmask]))
            work += dwork

        ledger = total_phase_energy(u, v, params, loads, work=work)
        audits = []
        if audit is not None:
            audits = stability_audit(u, v=None if elastic_only else v,
                                     params=params, settings=settings, **audit)
        step = TrajectoryStep(t, u, v, ledger, audits, res.iterations,
                              res.converged)
        traj.steps.append(step)

        if prev is not None:
            scale = max(ledger.elastic + ledger.surface, abs(ledger.total),
                        abs(traj.steps[-2].ledger.total), 1e-30)
            rise = ledger.total - traj.steps[-2].ledger.total
            if rise > energy_tol_rel * scale:
                traj.events.append({"step": k, "type": "energy_increase",
                                    "amount": rise, "scale": scale})
        if not res.converged:
            traj.events.append({"step": k, "type": "not_converged",
                                "iterations": res.iterations})
        if sink is not None:
            sink(k, step)
        prev = (u, loads, reac, f_nodal, neu, t)
    return traj


# -- tip detection ---------------------------------------------------------------

def _thin(mask):
    """Zhang-Suen thinning of a boolean lattice image."""
    img = mask.astype(np.uint8).copy()

    def neighbors(a):
        p = np.pad(a, 1)
        return (p[1:-1, 2:], p[:-2, 2:], p[:-2, 1:-1], p[:-2, :-2],
                p[1:-1, :-2], p[2:, :-2], p[2:, 1:-1], p[2:, 2:])

    changed = True
    while changed:
        changed = False
        for phase in (0, 1):
            e, ne, n, nw, w, sw, s, se = neighbors(img)
            ring = [n, ne, e, se, s, sw, w, nw]
            b = sum(ring)
            a = sum((ring[i] == 0) & (ring[(i + 1) % 8] == 1) for i in range(8))
            if phase == 0:
                c1 = (n * e * s == 0)
                c2 = (e * s * w == 0)
            else:
                c1 = (n * e * w == 0)
                c2 = (n * s * w == 0)
            cond = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2
            if np.any(cond):
                img[cond] = 0
                changed = True
    return img.astype(bool)


def detect_tips(v, threshold=0.1):
    """Endpoints of the thinned v < threshold ridge, interior nodes only.

    Returns a deterministically ordered list of (x, y) points; empty if no
    ridge exists.
    """
    grid = v.grid
    lattice = grid.logical_values(v.values, reduce="min") < threshold
    if not lattice.any():
        return []
    skel = _thin(lattice)
    p = np.pad(skel.astype(np.uint8), 1)
    count = (p[1:-1, 2:] + p[:-2, 2:] + p[:-2, 1:-1] + p[:-2, :-2]
             + p[1:-1, :-2] + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:])
    endpoints = skel & (count == 1)
    tips = []
    for j, i in zip(*np.nonzero(endpoints)):
        if 0 < i < grid.nx and 0 < j < grid.ny:
            tips.append(grid.node_point(int(i), int(j)))
    tips.sort(key=lambda p: (p[1], p[0]))
    return tips


# -- per-state audit ---------------------------------------------------------------

def stability_audit(u, v=None, params=None, tips="auto", eps_list=(0.5, 0.25),
                    r=None, annulus=None, tol_band=0.05, competitors=None,
                    competitor_r=None, settings=DEFAULT_SETTINGS,
                    ridge_threshold=0.1):
    """Blow-up, SIF, verdict and ball-bound audit at each crack tip.

    tips "auto" detects slit tips plus damage-ridge endpoints; an explicit
    list of points skips detection.  Returns one StabilityReport per tip
    (empty if no tip is found).
    """
    grid = u.grid
    if tips == "auto":
        tip_list = []
        if grid.slit is not None and grid.slit.tip is not None:
            tip_list.append(grid.slit.tip)
        if v is not None:
            h = max(grid.hx, grid.hy)
            for cand in detect_tips(v, ridge_threshold):
                if all(math.hypot(cand[0] - t[0], cand[1] - t[1]) > 2.0 * h
                       for t in tip_list):
                    tip_list.append(cand)
    else:
        tip_list = list(tips)
    if not tip_list:
        return []

    ox, oy = grid.origin
    xmax = ox + grid.nx * grid.hx
    ymax = oy + grid.ny * grid.hy
    reports = []
    for tip in tip_list:
        bdist = min(tip[0] - ox, xmax - tip[0], tip[1] - oy, ymax - tip[1])
        if annulus is None:
            r_out = 0.5 * bdist
            r_in = max(3.0 * max(grid.hx, grid.hy), r_out / 8.0)
        else:
            r_in, r_out = annulus
        slit_tip = (grid.slit is not None and grid.slit.tip is not None
                    and math.isclose(tip[0], grid.slit.tip[0])
                    and math.isclose(tip[1], grid.slit.tip[1]))
        ahead = None if slit_tip else (1.0, 0.0)
        try:
            k_fit, residual = extract_sif(u, tip, r_in, r_out, ahead=ahead)
        except (TipOffLattice, AnnulusEmpty):
            # ridge endpoints can land on crack-face copies or too close to
            # the boundary for a fit; such candidates are skipped
            continue
        verdict = griffith_verdict(k_fit, params.g_c, tol_band)

        rwin = r if r is not None else bdist
        cauchy = []
        ball_ok = True
        try:
            diag = blowup_diagnose(u, tip, eps_list, rwin, v=v)
            cauchy = diag.cauchy
            fr = [0.25 * rwin, 0.5 * rwin, 0.75 * rwin, rwin]
            ball_ok = check_ball_bound(diag.finest.u, params.g_c, fr).all_ok
        except WindowTooCoarse:
            pass

        margin = None
        rows = None
        if competitors is not None:
            rc = competitor_r if competitor_r is not None else 0.5 * bdist
            result = competitor_test(u, params, competitors, rc, tip=tip,
                                     v_hat=v, settings=settings)
            margin = result.margin
            rows = result.rows
            if result.verdict == "Unstable":
                verdict = "Unstable"
        reports.append(StabilityReport(tuple(tip), k_fit, residual, verdict,
                                       cauchy, ball_ok, margin, rows))
    return reports
