import math

import numpy as np
import pytest

from crackfield.energy import LoadSpec, MaterialParams
from crackfield.errors import ProgramEmpty
from crackfield.evolution import (LoadProgram, detect_tips, quasistatic_run,
                                  stability_audit)
from crackfield.fields import PhaseField, ScalarField
from crackfield.grid import SlitSpec, build_grid
from crackfield.singular import mode_iii_displacement
from crackfield.solve import SolverSettings

PARAMS = MaterialParams(g_c=1.0, delta=0.05, eta_delta=1e-8)


def stretch_program(times, scale=1.0):
    def loads_at(t):
        return LoadSpec(partition={"top": "dirichlet", "bottom": "dirichlet",
                                   "left": "neumann", "right": "neumann"},
                        dirichlet={"top": scale * t, "bottom": -scale * t})
    return LoadProgram(times=times, loads_at=loads_at)


def test_program_validation():
    with pytest.raises(ProgramEmpty):
        LoadProgram(times=(), loads_at=lambda t: LoadSpec())
    with pytest.raises(ValueError):
        LoadProgram(times=(0.0, 0.0), loads_at=lambda t: LoadSpec())


def test_constant_zero_program_stays_zero():
    g = build_grid((0, 0, 1, 1), 16)
    prog = LoadProgram(times=(0.0, 1.0, 2.0),
                       loads_at=lambda t: LoadSpec(dirichlet=0.0))
    traj = quasistatic_run(g, PARAMS, prog)
    for step in traj.steps:
        assert np.max(np.abs(step.u.values)) == 0.0
        assert step.ledger.total == 0.0


def test_stationary_after_first_step_under_constant_loads():
    g = build_grid((0, 0, 1, 1), 24)
    prog = LoadProgram(times=(0.0, 1.0, 2.0),
                       loads_at=lambda t: LoadSpec(
                           partition={"top": "dirichlet", "bottom": "dirichlet",
                                      "left": "neumann", "right": "neumann"},
                           dirichlet={"top": 0.4, "bottom": -0.4}))
    traj = quasistatic_run(g, PARAMS, prog)
    u0, v0 = traj.steps[0].u.values, traj.steps[0].v.values
    for step in traj.steps[1:]:
        assert np.allclose(step.u.values, u0, atol=1e-9)
        assert np.allclose(step.v.values, v0, atol=1e-9)


def test_elastic_control_work_balance_affine():
    # Dirichlet-driven purely elastic run: elastic(t) - work(t) is constant
    # to rounding error because the trapezoid is exact for a single ramped
    # mode shape
    g = build_grid((0, 0, 1, 1), 32)
    prog = stretch_program(np.linspace(0.01, 0.5, 11))
    traj = quasistatic_run(g, PARAMS, prog, elastic_only=True)
    totals = traj.totals()
    assert max(totals) - min(totals) <= 1e-6 * max(abs(t) for t in totals)


def test_elastic_control_work_balance_shape_changing_ramp():
    # the trapezoid with averaged reactions is algebraically exact for a
    # fixed stiffness (delta of u'Au/2 equals Rbar . du), so even a ramp
    # that changes mode shape balances to rounding error at every step count
    g = build_grid((0, 0, 1, 1), 24)

    def loads_at(t):
        return LoadSpec(partition={"top": "dirichlet", "bottom": "dirichlet",
                                   "left": "neumann", "right": "neumann"},
                        dirichlet=lambda x, y, t=t: t * (2 * y - 1)
                        + t * t * np.sin(math.pi * x) * (2 * y - 1))

    for nsteps in (6, 11, 21):
        prog = LoadProgram(times=np.linspace(0.1, 0.6, nsteps), loads_at=loads_at)
        traj = quasistatic_run(g, PARAMS, prog, elastic_only=True)
        totals = traj.totals()
        scale = max(abs(t) for t in totals)
        assert max(totals) - min(totals) <= 1e-6 * scale


def test_irreversibility_exact_and_jump_calibration():
    slit = SlitSpec(((0.0, 0.5), (0.25, 0.5)), tip=(0.25, 0.5))
    g = build_grid((0, 0, 1, 1), 64, slit=slit)
    prog = stretch_program(np.linspace(0.05, 1.4, 14))
    traj = quasistatic_run(g, PARAMS, prog,
                           settings=SolverSettings(altmin_max_iter=400))
    for a, b in zip(traj.steps[:-1], traj.steps[1:]):
        assert np.all(b.v.values <= a.v.values)
    surf = traj.surface_energies()
    jump = float(np.max(np.diff(surf)))
    assert jump == pytest.approx(0.75, rel=0.1)  # G_c times the ligament
    assert not any(e["type"] == "energy_increase" for e in traj.events)


def test_audit_invariance_under_rigid_shift():
    g = build_grid((-1, -1, 1, 1), 256,
                   slit=SlitSpec(((-1.0, 0.0), (0.0, 0.0)), tip=(0.0, 0.0)))
    us = mode_iii_displacement(g, k=1.0)
    shifted = ScalarField(g, us.values + 3.7)
    reports = stability_audit(us, params=PARAMS, eps_list=[0.5, 0.25], r=0.5)
    reports2 = stability_audit(shifted, params=PARAMS, eps_list=[0.5, 0.25], r=0.5)
    assert len(reports) == len(reports2) == 1
    assert reports[0].verdict == reports2[0].verdict
    assert reports2[0].k_fit == pytest.approx(reports[0].k_fit, rel=1e-12)
    assert reports2[0].blowup_cauchy == pytest.approx(reports[0].blowup_cauchy,
                                                      abs=1e-12)


def test_audit_no_tips_on_undamaged_state():
    g = build_grid((0, 0, 1, 1), 32)
    u = ScalarField.from_function(g, lambda x, y: x * y)
    reports = stability_audit(u, v=PhaseField.ones(g), params=PARAMS)
    assert reports == []


def test_audit_verdict_tracks_toughness():
    g = build_grid((-1, -1, 1, 1), 256,
                   slit=SlitSpec(((-1.0, 0.0), (0.0, 0.0)), tip=(0.0, 0.0)))
    k = 1.0  # err = pi/4
    us = mode_iii_displacement(g, k=k)
    stable = stability_audit(us, params=MaterialParams(g_c=2 * 0.7854, delta=0.04),
                             eps_list=[0.5], r=0.5)[0]
    unstable = stability_audit(us, params=MaterialParams(g_c=0.5 * 0.7854, delta=0.04),
                               eps_list=[0.5], r=0.5)[0]
    assert stable.verdict == "Stable"
    assert unstable.verdict == "Unstable"
    assert stable.ball_bound_ok


def test_detect_tips_on_band():
    g = build_grid((0, 0, 1, 1), 64)
    # horizontal ridge from x=0.25 to x=0.75 at y=0.5
    vals = np.ones(g.n_nodes)
    on = (np.abs(g.node_y - 0.5) < 1e-9) & (g.node_x >= 0.25 - 1e-9) \
        & (g.node_x <= 0.75 + 1e-9)
    vals[on] = 0.0
    tips = detect_tips(PhaseField(g, vals))
    assert (0.25, 0.5) in tips and (0.75, 0.5) in tips
    assert detect_tips(PhaseField.ones(g)) == []
