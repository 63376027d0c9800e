"""Energy functionals and the itemized ledger.

All integrals share one quadrature: gradient terms use the bilinear
gradient at cell centers with per-cell weights, zeroth-order terms
((1-v)^2, f*u) use quarter-cell nodal lumping.  The mixed rule keeps the
damage subproblem strictly convex (a pure cell-center rule has a
checkerboard null mode) while staying exactly equivariant under dyadic
re-indexing, which is what makes the rescaling identities machine-exact.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BoundaryPartitionInvalid, GridMismatch
from .fields import gradient, same_grid
from .grid import SIDES, slit_length_in_ball


@dataclass(frozen=True)
class MaterialParams:
    """Fracture toughness, regularization length and moduli.

    g_c: fracture toughness (energy per unit crack length).
    delta: damage regularization length.
    eta_delta: residual stiffness keeping fully cracked cells solvable.
    mu_eq, mu_neq: shear moduli of the equilibrium / non-equilibrium split;
        the displacement always feels mu_eq + mu_neq.
    """

    g_c: float
    delta: float
    eta_delta: float = 1e-6
    mu_eq: float = 1.0
    mu_neq: float = 0.0

    def __post_init__(self):
        if self.g_c <= 0.0:
            raise ValueError("g_c must be positive")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if not 0.0 <= self.eta_delta < 1.0:
            raise ValueError("eta_delta must be small and nonnegative")
        if self.mu_eq < 0.0 or self.mu_neq < 0.0 or self.mu_eq + self.mu_neq <= 0.0:
            raise ValueError("moduli must be nonnegative with positive sum")

    @property
    def mu(self):
        return self.mu_eq + self.mu_neq

    def with_delta(self, delta):
        return replace(self, delta=delta)


def resolve_mu(params, split="full"):
    if params is None:
        if split != "full":
            raise ValueError("a split needs material parameters")
        return 1.0
    if split == "full":
        return params.mu
    if split in ("eq", "eq_only"):
        return params.mu_eq
    if split == "neq":
        return params.mu_neq
    raise ValueError(f"unknown split {split!r}")


class LoadSpec:
    """Body load, boundary load and Dirichlet data on a side partition.

    partition: mapping side -> "dirichlet" | "neumann" for all four sides.
    dirichlet: value spec for Dirichlet sides; a scalar, a callable
        f(x, y), a full nodal array, or a mapping side -> spec.
    f: body load; scalar, callable or nodal array (None means zero).
    g: boundary load on Neumann sides; mapping side -> spec.
    """

    def __init__(self, partition=None, dirichlet=0.0, f=None, g=None):
        if partition is None:
            partition = {s: "dirichlet" for s in SIDES}
        unknown = set(partition) - set(SIDES)
        if unknown or set(partition) != set(SIDES):
            raise BoundaryPartitionInvalid(
                f"partition must assign exactly the sides {SIDES}")
        for s, kind in partition.items():
            if kind not in ("dirichlet", "neumann"):
                raise BoundaryPartitionInvalid(f"side {s}: unknown kind {kind!r}")
        self.partition = dict(partition)
        self.dirichlet = dirichlet
        self.f = f
        self.g = dict(g) if g else {}
        for s in self.g:
            if self.partition.get(s) != "neumann":
                raise BoundaryPartitionInvalid(f"boundary load on non-Neumann side {s!r}")

    def dirichlet_sides(self):
        return [s for s in SIDES if self.partition[s] == "dirichlet"]

    def neumann_sides(self):
        return [s for s in SIDES if self.partition[s] == "neumann"]

    def _eval(self, spec, grid, ids):
        if spec is None:
            return np.zeros(len(ids))
        if callable(spec):
            return np.asarray(spec(grid.node_x[ids], grid.node_y[ids]),
                              dtype=float) * np.ones(len(ids))
        arr = np.asarray(spec, dtype=float)
        if arr.ndim == 0:
            return np.full(len(ids), float(arr))
        if arr.shape == (grid.n_nodes,):
            return arr[ids]
        raise ValueError("value spec must be scalar, callable or full nodal array")

    def body_values(self, grid):
        ids = np.arange(grid.n_nodes)
        return self._eval(self.f, grid, ids)

    def dirichlet_arrays(self, grid):
        """(mask, values) over physical nodes for the constrained set."""
        mask = np.zeros(grid.n_nodes, dtype=bool)
        vals = np.zeros(grid.n_nodes)
        per_side = isinstance(self.dirichlet, dict)
        for s in self.dirichlet_sides():
            ids = grid.boundary_node_ids(s)
            spec = self.dirichlet.get(s, 0.0) if per_side else self.dirichlet
            vals[ids] = self._eval(spec, grid, ids)
            mask[ids] = True
        return mask, vals

    def neumann_quadrature(self, grid):
        """(ids, weights, g values) for the boundary-load line integral."""
        ids_all, w_all, g_all = [], [], []
        for s in self.neumann_sides():
            ids = grid.boundary_node_ids(s)
            if len(ids) != (grid.ny + 1 if s in ("left", "right") else grid.nx + 1):
                raise BoundaryPartitionInvalid(
                    f"slit-duplicated nodes on Neumann side {s!r} are not supported")
            h = grid.hy if s in ("left", "right") else grid.hx
            w = np.full(len(ids), h)
            w[0] = w[-1] = 0.5 * h
            ids_all.append(ids)
            w_all.append(w)
            g_all.append(self._eval(self.g.get(s), grid, ids))
        if not ids_all:
            return (np.empty(0, dtype=np.int64), np.empty(0), np.empty(0))
        return (np.concatenate(ids_all), np.concatenate(w_all), np.concatenate(g_all))


@dataclass
class EnergyLedger:
    """Itemized energies of one state; all entries are plain numbers."""

    elastic: float
    surface: float
    body_load_potential: float
    boundary_load_potential: float
    merged_objective: float
    total: float
    work_cumulative: float = 0.0

    CSV_HEADER = "step,time,elastic,surface,body_load,boundary_load,work,merged_objective,total"

    def csv_row(self, step, time):
        vals = [self.elastic, self.surface, self.body_load_potential,
                self.boundary_load_potential, self.work_cumulative,
                self.merged_objective, self.total]
        return f"{step},{float(time)!r}," + ",".join(repr(float(v)) for v in vals)

    def as_dict(self):
        return {"elastic": self.elastic, "surface": self.surface,
                "body_load_potential": self.body_load_potential,
                "boundary_load_potential": self.boundary_load_potential,
                "merged_objective": self.merged_objective,
                "total": self.total, "work_cumulative": self.work_cumulative}


def _weights(grid, mask):
    if mask is None:
        return grid.full_cell_weights, grid.full_node_weights
    if mask.cell_weights.shape != (grid.n_cells,):
        raise GridMismatch("mask does not match the grid")
    return mask.cell_weights, mask.node_weights


def cell_average(f):
    """Bilinear interpolation of nodal values at cell centers."""
    return 0.25 * f.values[f.grid.cell_nodes].sum(axis=1)


def elastic_energy(u, v=None, params=None, mask=None, split="full"):
    """(mu/2) integral of (eta + v^2) |grad u|^2; sharp (mu/2)|grad u|^2 if v is None."""
    mu = resolve_mu(params, split)
    cw, _ = _weights(u.grid, mask)
    g = gradient(u)
    g2 = g[:, 0] ** 2 + g[:, 1] ** 2
    if v is None:
        base = 0.5 * float(np.dot(cw, g2))
    else:
        same_grid(u, v)
        vc = cell_average(v)
        eta = params.eta_delta if params is not None else 0.0
        base = 0.5 * float(np.dot(cw, (eta + vc * vc) * g2))
    return mu * base


def surface_energy(v, params, mask=None):
    """G_c [ (1-v)^2 / (4 delta) + delta |grad v|^2 ] over the mask."""
    cw, nw = _weights(v.grid, mask)
    g = gradient(v)
    g2 = g[:, 0] ** 2 + g[:, 1] ** 2
    one_minus = 1.0 - v.values
    reaction = float(np.dot(nw, one_minus * one_minus)) / (4.0 * params.delta)
    grad_term = params.delta * float(np.dot(cw, g2))
    return params.g_c * (reaction + grad_term)


def load_potential(u, loads):
    """(integral f u dx, integral g u ds); positive sign, caller subtracts."""
    grid = u.grid
    body = 0.0
    if loads.f is not None:
        body = float(np.dot(grid.full_node_weights, loads.body_values(grid) * u.values))
    ids, w, g = loads.neumann_quadrature(grid)
    boundary = float(np.dot(w, g * u.values[ids])) if ids.size else 0.0
    return body, boundary


def total_phase_energy(u, v, params, loads=None, mask=None, work=0.0):
    """Itemized ledger of the phase-field state; merged = E - load terms."""
    elastic = elastic_energy(u, v, params, mask)
    surface = surface_energy(v, params, mask)
    body = boundary = 0.0
    if loads is not None:
        if mask is not None:
            raise ValueError("load potentials are defined on the whole domain")
        body, boundary = load_potential(u, loads)
    merged = elastic + surface - body - boundary
    return EnergyLedger(elastic, surface, body, boundary, merged,
                        merged - work, work)


def griffith_ball_energy(u, slit, g_c, radius, center=(0.0, 0.0), mask=None):
    """Sharp Griffith energy on a ball: elastic plus G_c * slit length."""
    from .grid import ball_mask
    if mask is None:
        mask = ball_mask(u.grid, center, radius)
    elastic = elastic_energy(u, mask=mask)
    return elastic + g_c * slit_length_in_ball(slit, center, radius)
