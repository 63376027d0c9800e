"""The square-root singular antiplane crack-tip field.

u(r, theta) = K * sqrt(r) * sin(theta/2) in a frame where the crack runs
backward from the tip along the negative local x axis.  On the crack faces
theta = +/-pi, and the two branches are told apart by the grid's slit-node
side tags; shared on-crack nodes (tip, mouth) take the branch average 0.
"""

import math

import numpy as np

from .fields import ScalarField


def crack_frame(slit):
    """Unit vector pointing ahead of the tip (past the crack end)."""
    if slit is None or slit.tip is None:
        raise ValueError("state has no designated crack tip")
    pts = slit.points if slit.tip == slit.points[-1] else slit.points[::-1]
    bx, by = pts[-2]
    tx, ty = pts[-1]
    n = math.hypot(tx - bx, ty - by)
    return ((tx - bx) / n, (ty - by) / n)


def mode_iii_displacement(grid, k=1.0, tip=None, ahead=None):
    """Sample K sqrt(r) sin(theta/2) at every physical node, side-aware.

    tip: crack tip point; defaults to the grid slit's tip.
    ahead: unit vector continuing the crack past the tip; defaults to the
        direction of the slit's last segment.
    """
    if tip is None:
        if grid.slit is None or grid.slit.tip is None:
            raise ValueError("grid has no slit tip; pass tip explicitly")
        tip = grid.slit.tip
    if ahead is None:
        ahead = crack_frame(grid.slit) if grid.slit is not None else (1.0, 0.0)
    e1x, e1y = ahead
    dx = grid.node_x - tip[0]
    dy = grid.node_y - tip[1]
    xi = dx * e1x + dy * e1y
    up = -dx * e1y + dy * e1x
    r = np.hypot(xi, up)
    theta = np.arctan2(up, xi)
    tol = 1e-9 * max(grid.hx, grid.hy)
    on_ray = (np.abs(up) <= tol) & (xi < -tol)
    theta = np.where(on_ray, math.pi * grid.node_side, theta)
    vals = k * np.sqrt(r) * np.sin(0.5 * theta)
    vals[on_ray & (grid.node_side == 0)] = 0.0
    return ScalarField(grid, vals)


def energy_release_rate(k):
    """Antiplane energy release rate (pi/4) K^2 of the singular field."""
    return 0.25 * math.pi * k * k
