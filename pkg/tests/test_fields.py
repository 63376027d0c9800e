import math

import numpy as np
import pytest

from crackfield.errors import (CenterOffLattice, GridMismatch,
                               WindowTooCoarse)
from crackfield.fields import (PhaseField, ScalarField, blowup_rescale,
                               blowup_state, dilate, dyadic_exponent,
                               gradient, l2_distance_on_ball,
                               resample_to_coarser)
from crackfield.grid import SlitSpec, ball_mask, build_grid
from crackfield.singular import mode_iii_displacement


def slit_grid(n=256, half=2.0):
    slit = SlitSpec(((-half, 0.0), (0.0, 0.0)), tip=(0.0, 0.0))
    return build_grid((-half, -half, half, half), n, slit=slit)


def test_gradient_linear_field():
    g = build_grid((0, 0, 1, 1), 8)
    f = ScalarField.from_function(g, lambda x, y: x)
    grad = gradient(f)
    assert np.allclose(grad[:, 0], 1.0)
    assert np.allclose(grad[:, 1], 0.0)


def test_gradient_quadratic_cell_centers():
    # bilinear derivative of x^2 at column centers: 2*x_center = {1/4,...,7/4}
    g = build_grid((0, 0, 1, 1), 4)
    f = ScalarField.from_function(g, lambda x, y: x * x)
    gx = gradient(f)[:, 0].reshape(4, 4)
    assert np.allclose(gx, [[0.25, 0.75, 1.25, 1.75]] * 4)


def test_gradient_constant_zero():
    g = build_grid((0, 0, 1, 1), 8)
    f = ScalarField.from_function(g, lambda x, y: 0 * x + 3.7)
    assert np.allclose(gradient(f), 0.0)


def test_phase_field_bounds_enforced():
    g = build_grid((0, 0, 1, 1), 4)
    with pytest.raises(ValueError):
        PhaseField(g, np.full(g.n_nodes, 1.5))


def test_dyadic_exponent():
    assert dyadic_exponent(1.0) == 0
    assert dyadic_exponent(0.5) == 1
    assert dyadic_exponent(0.0625) == 4
    with pytest.raises(ValueError):
        dyadic_exponent(0.3)


def test_blowup_identity_scale():
    g = build_grid((0, 0, 1, 1), 32)
    f = ScalarField.from_function(g, lambda x, y: x * y + 2.0)
    pair = blowup_rescale(f, (0.5, 0.5), 1.0, 0.4)
    u0 = 0.5 * 0.5 + 2.0
    # same grid spacing, values shifted by u(x0)
    assert pair.grid.hx == g.hx
    expect = pair.grid.node_x * pair.grid.node_y + (0.5 * pair.grid.node_x
                                                    + 0.5 * pair.grid.node_y)
    # u(x0+x) - u(x0) for u = xy + 2 centered at (.5,.5)
    assert np.allclose(pair.u.values,
                       (pair.grid.node_x + 0.5) * (pair.grid.node_y + 0.5) + 2 - u0)


def test_blowup_linear_slope_scaling():
    # linear slope a rescales to a * sqrt(eps)
    g = build_grid((0, 0, 1, 1), 64)
    a = 1.75
    f = ScalarField.from_function(g, lambda x, y: a * x)
    pair = blowup_rescale(f, (0.5, 0.5), 0.25, 0.5)
    grad = gradient(pair.u)
    assert np.allclose(grad[:, 0], a * 0.5)
    assert np.allclose(grad[:, 1], 0.0)
    assert pair.u.values[pair.grid.node_id(*pair.center_window_index())] == 0.0


def test_blowup_self_similarity_of_singular_field():
    g = slit_grid()
    us = mode_iii_displacement(g, k=1.0)
    for eps in (0.5, 0.25, 0.125):
        pair = blowup_rescale(us, (0.0, 0.0), eps, 1.0)
        ref = mode_iii_displacement(pair.grid, k=1.0, tip=(0.0, 0.0),
                                    ahead=(1.0, 0.0))
        assert np.max(np.abs(pair.u.values - ref.values)) <= 1e-13


def test_blowup_window_preconditions():
    g = build_grid((0, 0, 1, 1), 32)
    f = ScalarField.zeros(g)
    with pytest.raises(WindowTooCoarse):
        blowup_rescale(f, (0.5, 0.5), 0.125, 0.5)  # spans 2 cells
    with pytest.raises(CenterOffLattice):
        blowup_rescale(f, (0.51, 0.49), 0.5, 0.5)


def test_blowup_center_on_crack_face_rejected():
    g = slit_grid(n=128)
    us = mode_iii_displacement(g, k=1.0)
    with pytest.raises(CenterOffLattice):
        blowup_rescale(us, (-1.0, 0.0), 0.5, 0.5)


def test_double_rescaling_composes_exactly():
    g = build_grid((0, 0, 1, 1), 256)
    f = ScalarField.from_function(g, lambda x, y: x ** 2 + 0.3 * y + 0.1 * x * y)
    direct = blowup_rescale(f, (0.5, 0.5), 0.0625, 0.5)
    first = blowup_rescale(f, (0.5, 0.5), 0.25, 2.0)
    second = blowup_rescale(first.u, (0.0, 0.0), 0.25, 0.5)
    # dyadic scales with even exponents compose bit-exactly
    assert np.array_equal(second.u.values, direct.u.values)


def test_double_rescaling_composes_odd_exponents():
    g = build_grid((0, 0, 1, 1), 256)
    f = ScalarField.from_function(g, lambda x, y: np.sin(x) + y * y)
    direct = blowup_rescale(f, (0.5, 0.5), 0.25, 0.5)
    first = blowup_rescale(f, (0.5, 0.5), 0.5, 1.0)
    second = blowup_rescale(first.u, (0.0, 0.0), 0.5, 0.5)
    assert np.allclose(second.u.values, direct.u.values, rtol=1e-14, atol=1e-16)


def test_blowup_locality():
    # values inside the window depend only on the sampled source ball
    g = build_grid((0, 0, 1, 1), 128)
    rng = np.random.default_rng(7)
    vals = rng.standard_normal(g.n_nodes)
    f = ScalarField(g, vals)
    pair = blowup_rescale(f, (0.5, 0.5), 0.25, 0.25)
    far = np.hypot(g.node_x - 0.5, g.node_y - 0.5) > 0.25 * 0.25 * math.sqrt(2) + 2 * g.hx
    vals2 = vals.copy()
    vals2[far] += 10.0
    pair2 = blowup_rescale(ScalarField(g, vals2), (0.5, 0.5), 0.25, 0.25)
    assert np.array_equal(pair.u.values, pair2.u.values)


def test_dilate_preserves_bounds_and_profile_width():
    g = build_grid((0, 0, 1, 1), 256)
    delta = 0.02
    v = PhaseField(g, 1.0 - np.exp(-np.abs(g.node_y - 0.5) / (2 * delta)))
    pair = dilate(v, (0.5, 0.5), 0.25, 0.5)
    assert pair.v.values.min() >= 0.0 and pair.v.values.max() <= 1.0
    # transition layer of width delta dilates to width delta / eps
    ref = 1.0 - np.exp(-np.abs(pair.grid.node_y) / (2 * delta / 0.25))
    assert np.max(np.abs(pair.v.values - ref)) <= 1e-12


def test_dilate_constant_damage():
    g = build_grid((0, 0, 1, 1), 64)
    v = PhaseField.ones(g)
    pair = dilate(v, (0.5, 0.5), 0.5, 0.4)
    assert np.all(pair.v.values == 1.0)


def test_l2_distance_oracle_constant_offset():
    g = build_grid((0, 0, 1, 1), 64)
    a = ScalarField.zeros(g)
    b = ScalarField.from_function(g, lambda x, y: 0 * x + 0.7)
    m = ball_mask(g, (0.5, 0.5), 10.0)  # covers the domain, area 1
    assert l2_distance_on_ball(a, b, m) == pytest.approx(0.7, rel=1e-12)
    assert l2_distance_on_ball(a, a, m) == 0.0
    assert l2_distance_on_ball(a, b, m) == l2_distance_on_ball(b, a, m)


def test_l2_distance_singular_fields_polar_oracle():
    # closed form: int_{B(0,1)} (K sqrt(r) sin(t/2))^2 = K^2 * pi/3,
    # cross-checked by an independent polar quadrature
    K = 1.0
    theta = (np.arange(4000) + 0.5) / 4000 * 2 * math.pi - math.pi
    rr = (np.arange(2000) + 0.5) / 2000
    val = ((rr[:, None]) * np.sin(theta / 2.0) ** 2 * rr[:, None]).sum() \
        * (2 * math.pi / 4000) * (1.0 / 2000)
    assert val == pytest.approx(math.pi / 3.0, rel=1e-4)

    g = slit_grid(n=512, half=1.25)
    a = mode_iii_displacement(g, k=1.0)
    b = mode_iii_displacement(g, k=2.0)
    m = ball_mask(g, (0.0, 0.0), 1.0)
    d = l2_distance_on_ball(a, b, m)
    assert d == pytest.approx(math.sqrt(math.pi / 3.0), rel=0.02)


def test_l2_distance_grid_mismatch():
    a = ScalarField.zeros(build_grid((0, 0, 1, 1), 8))
    b = ScalarField.zeros(build_grid((0, 0, 1, 1), 16))
    m = ball_mask(a.grid, (0.5, 0.5), 0.2)
    with pytest.raises(GridMismatch):
        l2_distance_on_ball(a, b, m)


def test_resample_to_coarser_subsamples():
    g = build_grid((0, 0, 1, 1), 128)
    f = ScalarField.from_function(g, lambda x, y: x + 2 * y)
    fine = blowup_rescale(f, (0.5, 0.5), 0.5, 0.25)
    coarse = blowup_rescale(f, (0.5, 0.5), 0.25, 0.25)
    res = resample_to_coarser(fine, coarse)
    # linear field: fine sampled at coarse positions has slope sqrt(1/2)
    grad = gradient(res)
    assert np.allclose(grad[:, 0], math.sqrt(0.5))
    assert np.allclose(grad[:, 1], 2 * math.sqrt(0.5))
