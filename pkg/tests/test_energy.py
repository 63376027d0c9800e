import math

import numpy as np
import pytest

from crackfield.energy import (EnergyLedger, LoadSpec, MaterialParams,
                               elastic_energy, griffith_ball_energy,
                               load_potential, surface_energy,
                               total_phase_energy)
from crackfield.errors import BoundaryPartitionInvalid, GridMismatch
from crackfield.fields import PhaseField, ScalarField
from crackfield.grid import SlitSpec, ball_mask, build_grid
from crackfield.singular import mode_iii_displacement


def params(**kw):
    base = dict(g_c=1.0, delta=0.05, eta_delta=0.0)
    base.update(kw)
    return MaterialParams(**base)


def test_material_params_validation():
    with pytest.raises(ValueError):
        MaterialParams(g_c=-1.0, delta=0.1)
    with pytest.raises(ValueError):
        MaterialParams(g_c=1.0, delta=0.0)
    with pytest.raises(ValueError):
        MaterialParams(g_c=1.0, delta=0.1, mu_eq=0.0, mu_neq=0.0)


def test_elastic_unit_gradient():
    g = build_grid((0, 0, 1, 1), 16)
    u = ScalarField.from_function(g, lambda x, y: x)
    assert elastic_energy(u, PhaseField.ones(g), params()) == pytest.approx(0.5)


def test_elastic_killed_by_damage():
    g = build_grid((0, 0, 1, 1), 16)
    u = ScalarField.from_function(g, lambda x, y: 3 * x + y)
    v0 = PhaseField(g, np.zeros(g.n_nodes))
    assert elastic_energy(u, v0, params()) == 0.0


def test_elastic_singular_field_ball_oracle():
    # polar integral: (1/2) int_{B_r} |grad u_S|^2 = (pi/4) K^2 r
    slit = SlitSpec(((-2.0, 0.0), (0.0, 0.0)), tip=(0.0, 0.0))
    g = build_grid((-2, -2, 2, 2), 512, slit=slit)
    us = mode_iii_displacement(g, k=1.3)
    for r in (0.5, 1.0):
        m = ball_mask(g, (0.0, 0.0), r)
        expect = 0.25 * math.pi * 1.3 ** 2 * r
        assert elastic_energy(us, mask=m) == pytest.approx(expect, rel=0.01)


def test_eq_split_decomposition_exact():
    g = build_grid((0, 0, 1, 1), 32)
    p = params(mu_eq=1.0, mu_neq=0.5, eta_delta=1e-4)
    u = ScalarField.from_function(g, lambda x, y: np.sin(3 * x) * y)
    v = PhaseField.from_function(g, lambda x, y: np.clip(0.5 + 0.4 * x, 0, 1))
    full = elastic_energy(u, v, p, split="full")
    eq = elastic_energy(u, v, p, split="eq")
    neq = elastic_energy(u, v, p, split="neq")
    assert full == eq + neq


def test_surface_trivial_values():
    g = build_grid((0, 0, 1, 1), 16)
    p = params()
    assert surface_energy(PhaseField.ones(g), p) == 0.0
    v0 = PhaseField(g, np.zeros(g.n_nodes))
    assert surface_energy(v0, p) == pytest.approx(1.0 / (4 * p.delta))


def test_surface_optimal_profile_oracle():
    # the 1D optimal profile 1 - exp(-|x|/(2 delta)) carries surface energy
    # exactly G_c per unit crack length (analytic minimization)
    delta = 0.02
    p = params(delta=delta)
    g = build_grid((0, 0, 1, 0.5), (400, 200))  # h = 1/400 = delta/8
    v = PhaseField(g, 1.0 - np.exp(-np.abs(g.node_y - 0.25) / (2 * delta)))
    assert surface_energy(v, p) == pytest.approx(1.0, rel=0.05)


def test_load_potential_trivial():
    g = build_grid((0, 0, 1, 1), 16)
    loads = LoadSpec(partition={"top": "neumann", "bottom": "dirichlet",
                                "left": "dirichlet", "right": "dirichlet"},
                     f=1.0, g={"top": 1.0})
    u1 = ScalarField.from_function(g, lambda x, y: 0 * x + 1.0)
    body, boundary = load_potential(u1, loads)
    assert body == pytest.approx(1.0)
    u2 = ScalarField.from_function(g, lambda x, y: 0 * x + 2.0)
    assert load_potential(u2, loads)[1] == pytest.approx(2.0)


def test_load_potential_sine_oracle():
    # int sin^2(pi x) sin^2(pi y) = 1/4
    g = build_grid((0, 0, 1, 1), 128)
    f = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    loads = LoadSpec(f=f)
    u = ScalarField.from_function(g, f)
    body, _ = load_potential(u, loads)
    assert body == pytest.approx(0.25, rel=1e-3)


def test_load_potential_linearity():
    g = build_grid((0, 0, 1, 1), 32)
    loads = LoadSpec(partition={"top": "neumann", "bottom": "dirichlet",
                                "left": "neumann", "right": "neumann"},
                     f=lambda x, y: x - y, g={"top": lambda x, y: x})
    u = ScalarField.from_function(g, lambda x, y: x * y + 1.0)
    b1, s1 = load_potential(u, loads)
    u2 = ScalarField(g, 3.0 * u.values)
    b2, s2 = load_potential(u2, loads)
    assert b2 == pytest.approx(3 * b1, rel=1e-12)
    assert s2 == pytest.approx(3 * s1, rel=1e-12)


def test_partition_validation():
    with pytest.raises(BoundaryPartitionInvalid):
        LoadSpec(partition={"top": "neumann"})
    with pytest.raises(BoundaryPartitionInvalid):
        LoadSpec(partition={"top": "dirichlet", "bottom": "dirichlet",
                            "left": "dirichlet", "right": "dirichlet"},
                 g={"top": 1.0})


def test_total_phase_energy_ledger():
    g = build_grid((0, 0, 1, 1), 16)
    p = params(eta_delta=1e-6)
    u0 = ScalarField.zeros(g)
    v1 = PhaseField.ones(g)
    led = total_phase_energy(u0, v1, p)
    assert led.elastic == 0.0 and led.surface == 0.0 and led.total == 0.0

    ux = ScalarField.from_function(g, lambda x, y: x)
    led = total_phase_energy(ux, v1, p)
    assert led.elastic == pytest.approx(0.5 * (1 + 1e-6))
    assert led.surface == 0.0
    assert led.merged_objective == led.total == led.elastic


def test_energy_additive_over_complementary_masks():
    g = build_grid((0, 0, 1, 1), 64)
    p = params(eta_delta=1e-3)
    u = ScalarField.from_function(g, lambda x, y: np.sin(2 * x + y))
    v = PhaseField.from_function(g, lambda x, y: np.clip(0.9 - 0.3 * y, 0, 1))
    m = ball_mask(g, (0.5, 0.5), 0.3)
    from crackfield.grid import BallMask
    comp = BallMask(m.center, m.radius, g.full_cell_weights - m.cell_weights,
                    g.full_node_weights - m.node_weights, False)
    for fn in (lambda mm: elastic_energy(u, v, p, mask=mm),
               lambda mm: surface_energy(v, p, mask=mm)):
        assert fn(m) + fn(comp) == pytest.approx(fn(None), rel=1e-12)


def test_griffith_ball_energy_oracle():
    slit = SlitSpec(((-2.0, 0.0), (0.0, 0.0)), tip=(0.0, 0.0))
    g = build_grid((-2, -2, 2, 2), 512, slit=slit)
    us = mode_iii_displacement(g, k=1.0)
    r, gc = 1.0, 2.0
    got = griffith_ball_energy(us, g.slit, gc, r)
    assert got == pytest.approx(0.25 * math.pi * r + gc * r, rel=0.01)
    # zero field, no slit
    z = ScalarField.zeros(g)
    assert griffith_ball_energy(z, None, gc, r) == 0.0
    # zero field, chord across the ball
    assert griffith_ball_energy(z, SlitSpec(((-2, 0), (2, 0)), tip=None), gc, 0.5) \
        == pytest.approx(2 * gc * 0.5)


def test_ledger_csv_row_roundtrip():
    led = EnergyLedger(1.0, 0.5, 0.1, 0.2, 1.2, 1.2, 0.0)
    row = led.csv_row(3, 0.25)
    assert row.startswith("3,0.25,")
    assert len(row.split(",")) == 9
