"""Nodal fields, discrete gradients, and blow-up rescaling.

Rescaling u_eps(x) = eps**-0.5 * (u(x0 + eps*x) - u(x0)) is implemented as
exact re-indexing: for dyadic eps = 2**-k and a node-aligned center x0 the
blow-up grid node at x picks up the source node at x0 + eps*x, so no
interpolation enters and scaling identities hold to rounding error.  The
damage field and the slit are only dilated (no amplitude factor).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CenterOffLattice, GridMismatch, WindowTooCoarse
from .grid import BallMask, Grid, SlitSpec, dilate_slit


@dataclass
class ScalarField:
    """Nodal scalar values on a grid (one value per physical node)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise GridMismatch(
                f"field has {self.values.shape} values, grid has {self.grid.n_nodes} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self):
        return type(self)(self.grid, self.values.copy())

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.asarray(fn(grid.node_x, grid.node_y), dtype=float)
                   * np.ones(grid.n_nodes))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n_nodes))


@dataclass
class PhaseField(ScalarField):
    """Damage field, 1 intact and 0 fully cracked; clipped to [0, 1]."""

    def __post_init__(self):
        super().__post_init__()
        if self.values.min() < -1e-12 or self.values.max() > 1.0 + 1e-12:
            raise ValueError("phase field values must lie in [0, 1]")
        np.clip(self.values, 0.0, 1.0, out=self.values)

    @classmethod
    def ones(cls, grid):
        return cls(grid, np.ones(grid.n_nodes))


def gradient(f):
    """Bilinear-element gradient at cell centers, shape (n_cells, 2)."""
    u4 = f.values[f.grid.cell_nodes]
    gx = (u4[:, 1] + u4[:, 3] - u4[:, 0] - u4[:, 2]) / (2.0 * f.grid.hx)
    gy = (u4[:, 2] + u4[:, 3] - u4[:, 0] - u4[:, 1]) / (2.0 * f.grid.hy)
    return np.stack([gx, gy], axis=1)


def same_grid(a, b):
    ga, gb = a.grid, b.grid
    if ga is gb:
        return
    if (ga.nx, ga.ny, ga.hx, ga.hy, ga.origin, ga.n_nodes) != \
       (gb.nx, gb.ny, gb.hx, gb.hy, gb.origin, gb.n_nodes):
        raise GridMismatch("fields live on different grids")


def l2_distance_on_ball(a, b, mask):
    """Quadrature-weighted L2 distance sqrt(sum w_n (a_n - b_n)^2)."""
    same_grid(a, b)
    if mask.node_weights.shape != a.values.shape:
        raise GridMismatch("mask does not match the fields' grid")
    d = a.values - b.values
    return math.sqrt(float(np.dot(mask.node_weights, d * d)))


def dyadic_exponent(eps):
    """k such that eps == 2**-k exactly; raises for non-dyadic eps."""
    if not (0.0 < eps <= 1.0):
        raise ValueError(f"eps must be in (0, 1], got {eps}")
    m, e = math.frexp(eps)
    if m != 0.5 and eps != 1.0:
        raise ValueError(f"eps must be an exact power of two, got {eps}")
    return 1 - e if eps != 1.0 else 0


@dataclass
class RescaledPair:
    """Fields re-indexed onto a blow-up window around a center node.

    The window grid has spacing (hx/eps, hy/eps) and covers the ball
    B(0, r); its node (i, j) mirrors source node src_origin + (i, j).
    """

    eps: float
    x0: tuple
    r: float
    grid: Grid
    u: ScalarField = None
    v: PhaseField = None
    src_origin: tuple = (0, 0)
    center_index: tuple = (0, 0)
    truncated: bool = False
    source_grid: Grid = field(default=None, repr=False)
    src_ids: np.ndarray = field(default=None, repr=False)

    @property
    def slit(self):
        return self.grid.slit

    def center_window_index(self):
        return (self.center_index[0] - self.src_origin[0],
                self.center_index[1] - self.src_origin[1])


def _window(grid, x0, eps, r):
    """Build the blow-up window grid and the physical-node index map."""
    k = dyadic_exponent(eps)
    try:
        i0, j0 = grid.locate_node(x0, "center")
    except Exception as exc:
        raise CenterOffLattice(str(exc)) from exc
    if grid.is_duplicated(i0, j0):
        raise CenterOffLattice(
            "center lies on the crack where the field is two-valued; "
            "only single-valued nodes (e.g. the tip) can be blow-up centers")
    hxw = grid.hx / eps
    hyw = grid.hy / eps
    ni = math.ceil(r / hxw - 1e-12)
    nj = math.ceil(r / hyw - 1e-12)
    if ni < 8 or nj < 8:
        raise WindowTooCoarse(
            f"eps*r spans {min(ni, nj)} source cells per direction; need >= 8")
    i_lo, i_hi = max(0, i0 - ni), min(grid.nx, i0 + ni)
    j_lo, j_hi = max(0, j0 - nj), min(grid.ny, j0 + nj)
    truncated = (i_lo, i_hi, j_lo, j_hi) != (i0 - ni, i0 + ni, j0 - nj, j0 + nj)
    if i_hi - i_lo < 2 or j_hi - j_lo < 2:
        raise WindowTooCoarse("window clipped to fewer than 2 cells by the grid edge")

    win_slit = _clipped_slit(grid, (i_lo, i_hi, j_lo, j_hi), (i0, j0), hxw, hyw)
    win = Grid(i_hi - i_lo, j_hi - j_lo, hxw, hyw,
               origin=((i_lo - i0) * hxw, (j_lo - j0) * hyw),
               slit=win_slit, duplicate_boundary_endpoints=True)

    src = np.empty(win.n_nodes, dtype=np.int64)
    iw = win.node_ij[:, 0] + i_lo
    jw = win.node_ij[:, 1] + j_lo
    base = jw * (grid.nx + 1) + iw
    src[:] = base
    for (wi, wj), minus in win._dup_minus.items():
        plus = wj * (win.nx + 1) + wi
        src[plus] = grid.node_id(wi + i_lo, wj + j_lo, +1)
        src[minus] = grid.node_id(wi + i_lo, wj + j_lo, -1)
    # any remaining source duplicate that maps to a shared window node would
    # make the re-indexed value ill-defined
    for (si, sj) in grid._dup_minus:
        if i_lo <= si <= i_hi and j_lo <= sj <= j_hi:
            if not win.is_duplicated(si - i_lo, sj - j_lo):
                raise WindowTooCoarse(
                    "slit geometry re-enters the window; shrink r or move x0")
    return k, win, src, (i_lo, j_lo), (i0, j0), truncated


def _clipped_slit(grid, bounds, center, hxw, hyw):
    """Source slit chain clipped to the window, in window coordinates."""
    if grid.slit is None or grid._chain is None:
        return None
    i_lo, i_hi, j_lo, j_hi = bounds
    i0, j0 = center
    inside = [i_lo <= i <= i_hi and j_lo <= j <= j_hi for i, j in grid._chain]
    runs = []
    start = None
    for idx, ok in enumerate(inside):
        if ok and start is None:
            start = idx
        elif not ok and start is not None:
            runs.append((start, idx))
            start = None
    if start is not None:
        runs.append((start, len(inside)))
    runs = [r for r in runs if r[1] - r[0] >= 2]
    if not runs:
        return None
    tip_idx = len(grid._chain) - 1 if grid.slit.tip is not None else None
    run = None
    for cand in runs:
        if tip_idx is not None and cand[0] <= tip_idx < cand[1]:
            run = cand
            break
    if run is None:
        run = max(runs, key=lambda c: c[1] - c[0])

    nodes = grid._chain[run[0]:run[1]]
    pts = [nodes[0]]
    for prev, cur, nxt in zip(nodes[:-2], nodes[1:-1], nodes[2:]):
        if (cur[0] - prev[0], cur[1] - prev[1]) != (nxt[0] - cur[0], nxt[1] - cur[1]):
            pts.append(cur)
    pts.append(nodes[-1])
    to_xy = lambda ij: ((ij[0] - i0) * hxw, (ij[1] - j0) * hyw)
    tip = None
    if tip_idx is not None and run[1] - 1 == tip_idx:
        tip = to_xy(grid._chain[tip_idx])
    return SlitSpec(tuple(to_xy(p) for p in pts), tip)


def blowup_rescale(u, x0, eps, r):
    """Blow-up of a displacement field: exact re-indexing plus scaling.

    Node values are (u(source node) - u(x0)) * eps**-0.5; the window grid
    inherits the (dilated) slit with duplicated nodes kept two-sided.
    """
    k, win, src, src_origin, cidx, trunc = _window(u.grid, x0, eps, r)
    u0 = u.values[u.grid.node_id(*cidx)]
    scale = math.sqrt(2.0 ** k)
    vals = (u.values[src] - u0) * scale
    return RescaledPair(eps, (float(x0[0]), float(x0[1])), float(r), win,
                        u=ScalarField(win, vals), src_origin=src_origin,
                        center_index=cidx, truncated=trunc, source_grid=u.grid,
                        src_ids=src)


def dilate(v, x0, eps, r):
    """Dilation of a damage field onto the blow-up window (no scaling)."""
    k, win, src, src_origin, cidx, trunc = _window(v.grid, x0, eps, r)
    return RescaledPair(eps, (float(x0[0]), float(x0[1])), float(r), win,
                        v=PhaseField(win, v.values[src]), src_origin=src_origin,
                        center_index=cidx, truncated=trunc, source_grid=v.grid,
                        src_ids=src)


def blowup_state(u, v, x0, eps, r):
    """Blow-up of a (u, v) pair sharing one window."""
    if v is not None:
        same_grid(u, v)
    k, win, src, src_origin, cidx, trunc = _window(u.grid, x0, eps, r)
    u0 = u.values[u.grid.node_id(*cidx)]
    scale = math.sqrt(2.0 ** k)
    pair = RescaledPair(eps, (float(x0[0]), float(x0[1])), float(r), win,
                        u=ScalarField(win, (u.values[src] - u0) * scale),
                        src_origin=src_origin, center_index=cidx,
                        truncated=trunc, source_grid=u.grid, src_ids=src)
    if v is not None:
        pair.v = PhaseField(win, v.values[src])
    return pair


def pushforward_mask(pair, mask):
    """Map a window ball mask to the source grid with weights * eps^2.

    The window cell (ci, cj) is the exact image of source cell
    src_origin + (ci, cj); scaling by the dyadic eps**2 is exact, so both
    masks integrate the same region with matched quadrature.
    """
    src = pair.source_grid
    win = pair.grid
    eps2 = pair.eps * pair.eps
    cw = np.zeros(src.n_cells)
    ci = np.arange(win.nx)
    for cj in range(win.ny):
        rows = (cj + pair.src_origin[1]) * src.nx + (ci + pair.src_origin[0])
        cw[rows] = mask.cell_weights[cj * win.nx + ci] * eps2
    node_w = src._lump(cw)
    center = pair.x0
    return BallMask(center, mask.radius * pair.eps, cw, node_w,
                    mask.truncated or pair.truncated)


def resample_to_coarser(fine, coarse):
    """Sample the finer-scale pair at the coarser pair's node positions.

    ``fine.eps`` must exceed ``coarse.eps`` by a power of two; the coarser
    blow-up grid (larger spacing) has nodes at every 2**m-th position of
    the finer one.  Returns a ScalarField on the coarse window grid.
    """
    if fine.u is None or coarse.u is None:
        raise ValueError("both pairs need displacement values")
    ratio = fine.eps / coarse.eps
    m = round(math.log2(ratio))
    if 2.0 ** m != ratio or m < 1:
        raise ValueError("eps values must be nested powers of two")
    step = 2 ** m
    fwin, cwin = fine.grid, coarse.grid
    fc = fine.center_window_index()
    cc = coarse.center_window_index()
    out = np.empty(cwin.n_nodes)
    rel_i = cwin.node_ij[:, 0] - cc[0]
    rel_j = cwin.node_ij[:, 1] - cc[1]
    fi = rel_i * step + fc[0]
    fj = rel_j * step + fc[1]
    if fi.min() < 0 or fj.min() < 0 or fi.max() > fwin.nx or fj.max() > fwin.ny:
        raise ValueError("fine window does not cover the coarse window")
    base = fj * (fwin.nx + 1) + fi
    out[:] = fine.u.values[base]
    for (ci, cj), minus in cwin._dup_minus.items():
        plus = cj * (cwin.nx + 1) + ci
        for pid in (plus, minus):
            out[pid] = fine.u.values[
                fwin.node_id(fi[pid], fj[pid], cwin.node_side[pid])]
    return ScalarField(cwin, out)
