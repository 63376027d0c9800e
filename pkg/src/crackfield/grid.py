"""Structured rectangular grids with optional slit cracks.

A grid is the node lattice of an axis-aligned rectangle split into
``nx * ny`` bilinear cells.  A crack is represented sharply as a polyline
running along interior grid edges: every lattice node strictly interior to
the polyline is stored twice, and each of the four cells around such a
node is wired to the copy matching its side of the crack, so gradient
stencils never couple values across the crack.  Polyline endpoints stay
single: the material remains connected around the designated tip, and a
mouth endpoint on the domain boundary shares one nodal value.

Ball masks provide quadrature weights for integrals restricted to a disk.
Cells crossing the circle are weighted by deterministic 4x4 subcell
sampling, giving O(h) accurate disk areas.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import SlitOffLattice, SlitTouchesBoundary

_LATTICE_RTOL = 1e-9

SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class SlitSpec:
    """Axis-aligned crack polyline lying on grid lines.

    points: polyline vertices ((x0, y0), (x1, y1), ...); consecutive
        vertices must differ in exactly one coordinate.
    tip: the endpoint designated as crack tip.  Defaults to the last
        vertex.  ``None`` marks a through-going crack with no tip (only
        produced internally for rescaling windows).
    """

    points: tuple
    tip: tuple = ()

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) < 2:
            raise SlitOffLattice("slit polyline needs at least two vertices")
        object.__setattr__(self, "points", pts)
        if self.tip == ():
            object.__setattr__(self, "tip", pts[-1])
        elif self.tip is not None:
            tip = (float(self.tip[0]), float(self.tip[1]))
            if tip not in (pts[0], pts[-1]):
                raise SlitOffLattice("tip must be an endpoint of the polyline")
            object.__setattr__(self, "tip", tip)

    def segments(self):
        return list(zip(self.points[:-1], self.points[1:]))

    def length(self):
        return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in self.segments())


def dilate_slit(slit, x0, eps):
    """Map a slit by y -> (y - x0) / eps (pure geometry, no clipping)."""
    pts = tuple(((x - x0[0]) / eps, (y - x0[1]) / eps) for x, y in slit.points)
    tip = None
    if slit.tip is not None:
        tip = ((slit.tip[0] - x0[0]) / eps, (slit.tip[1] - x0[1]) / eps)
    return SlitSpec(pts, tip)


def slit_length_in_ball(slit, center, radius):
    """Total length of the slit polyline inside the open disk."""
    if slit is None:
        return 0.0
    cx, cy = center
    total = 0.0
    for (ax, ay), (bx, by) in slit.segments():
        dx, dy = bx - ax, by - ay
        seg = math.hypot(dx, dy)
        if seg == 0.0:
            continue
        # |a + t d - c|^2 = radius^2, t in [0, 1]
        fx, fy = ax - cx, ay - cy
        a2 = dx * dx + dy * dy
        b2 = 2.0 * (fx * dx + fy * dy)
        c2 = fx * fx + fy * fy - radius * radius
        disc = b2 * b2 - 4.0 * a2 * c2
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        t0 = max(0.0, (-b2 - sq) / (2.0 * a2))
        t1 = min(1.0, (-b2 + sq) / (2.0 * a2))
        if t1 > t0:
            total += (t1 - t0) * seg
    return total


def _cell_side(arm_prev, arm_next, diag):
    """Which side of the crack a diagonal direction lies on.

    The crack through a duplicated node consists of the two arms.  Side +1
    is the sector swept counterclockwise from ``arm_next`` to ``arm_prev``
    (for a straight west-to-east crack this is the upper half plane).
    """
    two_pi = 2.0 * math.pi
    a = math.atan2(arm_next[1], arm_next[0])
    b = math.atan2(arm_prev[1], arm_prev[0])
    t = math.atan2(diag[1], diag[0])
    return +1 if (t - a) % two_pi < (b - a) % two_pi else -1


class Grid:
    """Immutable structured grid; build with :func:`build_grid`.

    Physical nodes are the logical lattice (row-major, id = j*(nx+1)+i)
    followed by one extra "minus side" copy per duplicated slit node.
    """

    def __init__(self, nx, ny, hx, hy, origin=(0.0, 0.0), slit=None,
                 duplicate_boundary_endpoints=False):
        if nx < 1 or ny < 1:
            raise ValueError("grid needs at least one cell per direction")
        if hx <= 0.0 or hy <= 0.0:
            raise ValueError("grid spacings must be positive")
        self.nx, self.ny = int(nx), int(ny)
        self.hx, self.hy = float(hx), float(hy)
        self.origin = (float(origin[0]), float(origin[1]))
        self.slit = slit
        self.cell_area = self.hx * self.hy
        self.n_logical = (self.nx + 1) * (self.ny + 1)
        self.n_cells = self.nx * self.ny

        ii, jj = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        xs = self.origin[0] + ii.ravel() * self.hx
        ys = self.origin[1] + jj.ravel() * self.hy

        # logical cell connectivity, corners ordered [SW, SE, NW, NE]
        ci, cj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        ci, cj = ci.ravel(), cj.ravel()
        sw = cj * (self.nx + 1) + ci
        cell_nodes = np.stack([sw, sw + 1, sw + self.nx + 1, sw + self.nx + 2], axis=1)

        self._dup_minus = {}
        self.tip_node = None
        chain = None
        if slit is not None:
            chain = self._lattice_chain(slit)
            cell_nodes, xs, ys = self._duplicate_slit_nodes(
                chain, cell_nodes, xs, ys, duplicate_boundary_endpoints)
            if slit.tip is not None:
                it, jt = self._locate(slit.tip)
                self.tip_node = jt * (self.nx + 1) + it
        self._chain = chain

        self.cell_nodes = np.ascontiguousarray(cell_nodes)
        self.node_x = np.asarray(xs, dtype=float)
        self.node_y = np.asarray(ys, dtype=float)
        self.n_nodes = self.node_x.size

        side = np.zeros(self.n_nodes, dtype=np.int8)
        ij = np.empty((self.n_nodes, 2), dtype=np.int64)
        ij[:self.n_logical, 0] = ii.ravel()
        ij[:self.n_logical, 1] = jj.ravel()
        for (i, j), minus in self._dup_minus.items():
            plus = j * (self.nx + 1) + i
            side[plus] = +1
            side[minus] = -1
            ij[minus] = (i, j)
        self.node_side = side
        self.node_ij = ij

        # full-domain quadrature weights (cell-center rule for gradients,
        # quarter-cell lumping at nodes for zeroth-order terms)
        self.full_cell_weights = np.full(self.n_cells, self.cell_area)
        self.full_node_weights = self._lump(self.full_cell_weights)

    # -- construction helpers -------------------------------------------------

    def _locate(self, point, what="point"):
        """Lattice indices of a point that must sit on a node."""
        fi = (point[0] - self.origin[0]) / self.hx
        fj = (point[1] - self.origin[1]) / self.hy
        i, j = round(fi), round(fj)
        tol = _LATTICE_RTOL * max(self.nx, self.ny, 1)
        if abs(fi - i) > tol or abs(fj - j) > tol:
            raise SlitOffLattice(f"{what} {point} is not on the node lattice")
        if not (0 <= i <= self.nx and 0 <= j <= self.ny):
            raise SlitOffLattice(f"{what} {point} lies outside the grid")
        return int(i), int(j)

    def _lattice_chain(self, slit):
        """Ordered lattice nodes visited by the polyline, tip last."""
        verts = [self._locate(p, "slit vertex") for p in slit.points]
        chain = [verts[0]]
        for (i0, j0), (i1, j1) in zip(verts[:-1], verts[1:]):
            if (i0 == i1) == (j0 == j1):
                raise SlitOffLattice("slit segments must be axis-aligned and non-degenerate")
            di = (i1 > i0) - (i1 < i0)
            dj = (j1 > j0) - (j1 < j0)
            i, j = i0, j0
            while (i, j) != (i1, j1):
                i, j = i + di, j + dj
                chain.append((i, j))
        if len(set(chain)) != len(chain):
            raise SlitOffLattice("slit polyline revisits a node")
        if slit.tip is not None:
            tip_ij = self._locate(slit.tip, "slit tip")
            if tip_ij == chain[0]:
                chain.reverse()
            elif tip_ij != chain[-1]:
                raise SlitOffLattice("tip is not an endpoint of the slit polyline")
        # interior chain nodes must be strictly inside the domain; segments
        # may not run along the boundary
        for (i0, j0), (i1, j1) in zip(chain[:-1], chain[1:]):
            if j0 == j1 and j0 in (0, self.ny):
                raise SlitTouchesBoundary("slit segment lies on the boundary")
            if i0 == i1 and i0 in (0, self.nx):
                raise SlitTouchesBoundary("slit segment lies on the boundary")
        for i, j in chain[1:-1]:
            if i in (0, self.nx) or j in (0, self.ny):
                raise SlitTouchesBoundary(
                    f"slit passes through boundary node {(i, j)} mid-chain")
        if slit.tip is not None:
            it, jt = chain[-1]
            if it in (0, self.nx) or jt in (0, self.ny):
                raise SlitTouchesBoundary("crack tip must be an interior node")
        return chain

    def _duplicate_slit_nodes(self, chain, cell_nodes, xs, ys, dup_boundary):
        def on_boundary(i, j):
            return i in (0, self.nx) or j in (0, self.ny)

        xs, ys = list(xs), list(ys)
        next_id = self.n_logical
        for idx, (i, j) in enumerate(chain):
            interior = 0 < idx < len(chain) - 1
            if not interior and not (dup_boundary and on_boundary(i, j)):
                continue
            if idx > 0:
                pi, pj = chain[idx - 1]
                arm_prev = (pi - i, pj - j)
            else:
                ni, nj = chain[idx + 1]
                arm_prev = (i - ni, j - nj)
            if idx < len(chain) - 1:
                ni, nj = chain[idx + 1]
                arm_next = (ni - i, nj - j)
            else:
                arm_next = (-arm_prev[0], -arm_prev[1])

            minus = next_id
            next_id += 1
            self._dup_minus[(i, j)] = minus
            xs.append(xs[j * (self.nx + 1) + i])
            ys.append(ys[j * (self.nx + 1) + i])
            for dcj in (-1, 0):
                for dci in (-1, 0):
                    ci, cj = i + dci, j + dcj
                    if not (0 <= ci < self.nx and 0 <= cj < self.ny):
                        continue
                    diag = (dci + 0.5, dcj + 0.5)
                    if _cell_side(arm_prev, arm_next, diag) < 0:
                        cell = cj * self.nx + ci
                        slot = (i - ci) + 2 * (j - cj)
                        cell_nodes[cell, slot] = minus
        return cell_nodes, np.asarray(xs), np.asarray(ys)

    def _lump(self, cell_weights):
        """Quarter-cell scatter of cell weights onto physical nodes."""
        nw = np.zeros(self.node_x.size if hasattr(self, "node_x") else
                      self.n_logical + len(self._dup_minus))
        for k in range(4):
            np.add.at(nw, self.cell_nodes[:, k], 0.25 * cell_weights)
        return nw

    # -- queries ---------------------------------------------------------------

    def node_id(self, i, j, side=0):
        """Physical id of lattice node (i, j); ``side`` picks the copy.

        For nodes that are not duplicated the side argument is ignored.
        """
        lid = j * (self.nx + 1) + i
        minus = self._dup_minus.get((int(i), int(j)))
        if minus is None:
            return lid
        if side > 0:
            return lid
        if side < 0:
            return minus
        raise ValueError(f"node {(i, j)} is duplicated; a side is required")

    def is_duplicated(self, i, j):
        return (int(i), int(j)) in self._dup_minus

    def locate_node(self, point, what="point"):
        return self._locate(point, what)

    def node_point(self, i, j):
        return (self.origin[0] + i * self.hx, self.origin[1] + j * self.hy)

    def boundary_node_ids(self, side):
        """Physical node ids along one side, including both slit copies."""
        if side == "left":
            logical = [(0, j) for j in range(self.ny + 1)]
        elif side == "right":
            logical = [(self.nx, j) for j in range(self.ny + 1)]
        elif side == "bottom":
            logical = [(i, 0) for i in range(self.nx + 1)]
        elif side == "top":
            logical = [(i, self.ny) for i in range(self.nx + 1)]
        else:
            raise ValueError(f"unknown side {side!r}")
        ids = []
        for i, j in logical:
            lid = j * (self.nx + 1) + i
            ids.append(lid)
            minus = self._dup_minus.get((i, j))
            if minus is not None:
                ids.append(minus)
        return np.asarray(ids, dtype=np.int64)

    def boundary_mask(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        for side in SIDES:
            mask[self.boundary_node_ids(side)] = True
        return mask

    def cell_centers(self):
        ci, cj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        cx = self.origin[0] + (ci.ravel() + 0.5) * self.hx
        cy = self.origin[1] + (cj.ravel() + 0.5) * self.hy
        return cx, cy

    def logical_values(self, values, reduce="plus"):
        """Collapse physical nodal values onto the (ny+1, nx+1) lattice.

        Duplicated nodes take the plus copy ("plus"), the minus copy
        ("minus"), or the elementwise minimum ("min").
        """
        out = np.array(values[:self.n_logical], dtype=float).reshape(self.ny + 1, self.nx + 1)
        for (i, j), minus in self._dup_minus.items():
            if reduce == "minus":
                out[j, i] = values[minus]
            elif reduce == "min":
                out[j, i] = min(values[j * (self.nx + 1) + i], values[minus])
        return out

    def descriptor(self):
        d = {"nx": self.nx, "ny": self.ny, "hx": self.hx, "hy": self.hy,
             "origin": list(self.origin), "n_nodes": int(self.n_nodes)}
        if self.slit is not None:
            d["slit"] = {"points": [list(p) for p in self.slit.points],
                         "tip": None if self.slit.tip is None else list(self.slit.tip)}
        else:
            d["slit"] = None
        return d


def build_grid(rect, resolution, slit=None):
    """Build a grid over ``rect = (xmin, ymin, xmax, ymax)``.

    resolution: cell counts, one int (both directions) or (nx, ny);
        at least 2 per direction.
    slit: optional :class:`SlitSpec` along grid edges.
    """
    xmin, ymin, xmax, ymax = (float(v) for v in rect)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("rect must have positive extent")
    if np.isscalar(resolution):
        nx = ny = int(resolution)
    else:
        nx, ny = (int(v) for v in resolution)
    if nx < 2 or ny < 2:
        raise ValueError("resolution must be at least 2 cells per direction")
    hx = (xmax - xmin) / nx
    hy = (ymax - ymin) / ny
    return Grid(nx, ny, hx, hy, (xmin, ymin), slit=slit)


@dataclass(frozen=True)
class BallMask:
    """Quadrature weights for integrals over a disk.

    cell_weights: per-cell weight in [0, cell area] for the cell-center rule.
    node_weights: quarter-cell lumping of cell weights (zeroth-order terms).
    truncated: the disk is not fully contained in the grid rectangle.
    """

    center: tuple
    radius: float
    cell_weights: np.ndarray
    node_weights: np.ndarray
    truncated: bool


_SUB = (np.arange(4) + 0.5) / 4.0
_SUBX, _SUBY = np.meshgrid(_SUB, _SUB)
_SUBX, _SUBY = _SUBX.ravel(), _SUBY.ravel()


def ball_mask(grid, center, radius):
    """Quadrature mask for the disk B(center, radius).

    Cells strictly inside get full area, cells strictly outside zero;
    cells crossed by the circle are weighted by 4x4 subcell sampling.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    cx, cy = float(center[0]), float(center[1])
    ccx, ccy = grid.cell_centers()
    dist = np.hypot(ccx - cx, ccy - cy)
    half_diag = 0.5 * math.hypot(grid.hx, grid.hy)

    weights = np.zeros(grid.n_cells)
    inside = dist <= radius - half_diag
    weights[inside] = grid.cell_area
    partial = np.flatnonzero((~inside) & (dist < radius + half_diag))
    if partial.size:
        x0 = ccx[partial] - 0.5 * grid.hx
        y0 = ccy[partial] - 0.5 * grid.hy
        px = x0[:, None] + _SUBX[None, :] * grid.hx
        py = y0[:, None] + _SUBY[None, :] * grid.hy
        frac = np.count_nonzero(
            (px - cx) ** 2 + (py - cy) ** 2 < radius * radius, axis=1) / 16.0
        weights[partial] = frac * grid.cell_area

    ox, oy = grid.origin
    truncated = bool(cx - radius < ox - 1e-12 or cy - radius < oy - 1e-12
                     or cx + radius > ox + grid.nx * grid.hx + 1e-12
                     or cy + radius > oy + grid.ny * grid.hy + 1e-12)
    node_weights = grid._lump(weights)
    return BallMask((cx, cy), float(radius), weights, node_weights, truncated)
