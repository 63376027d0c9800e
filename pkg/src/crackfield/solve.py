"""Staggered solvers: displacement CG solve, box-constrained damage solve,
and the alternating-minimization driver.

The displacement step minimizes the quadratic (mu/2)(eta + v^2)|grad u|^2
minus the load potentials at fixed v; the damage step minimizes the
strictly convex damage energy at fixed u subject to 0 <= v <= v_upper,
which encodes irreversibility as a box constraint.  Both subproblems are
solved deterministically (fixed sweep order, Jacobi-preconditioned CG), so
identical inputs reproduce bit-identical outputs.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .energy import (EnergyLedger, cell_average, resolve_mu,
                     total_phase_energy)
from .errors import (BoundaryPartitionInvalid, FloatingDomain, NoConvergence)
from .fields import PhaseField, ScalarField, gradient, same_grid


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration caps for the staggered scheme."""

    cg_tol: float = 1e-10
    cg_max_iter: int = 20000
    altmin_tol: float = 1e-8
    altmin_max_iter: int = 300
    active_set_max_sweeps: int = 100

    def __post_init__(self):
        if self.cg_tol <= 0 or self.altmin_tol <= 0:
            raise ValueError("tolerances must be positive")
        if min(self.cg_max_iter, self.altmin_max_iter,
               self.active_set_max_sweeps) < 1:
            raise ValueError("iteration caps must be at least 1")


DEFAULT_SETTINGS = SolverSettings()


@dataclass
class StaggeredResult:
    u: ScalarField
    v: PhaseField
    ledger: EnergyLedger
    iterations: int
    converged: bool
    objective_history: list = field(default_factory=list)


# -- assembly -----------------------------------------------------------------

def _local_gradient_template(grid):
    gx = np.array([-1.0, 1.0, -1.0, 1.0]) / (2.0 * grid.hx)
    gy = np.array([-1.0, -1.0, 1.0, 1.0]) / (2.0 * grid.hy)
    return np.outer(gx, gx) + np.outer(gy, gy)


def assemble_stiffness(grid, cell_coeff):
    """sum_c coeff_c * area * B_c^T B_c as CSR (cell-center gradient rule)."""
    tpl = (_local_gradient_template(grid) * grid.cell_area).ravel()
    a = np.repeat(np.arange(4), 4)
    b = np.tile(np.arange(4), 4)
    rows = grid.cell_nodes[:, a].ravel()
    cols = grid.cell_nodes[:, b].ravel()
    data = (np.asarray(cell_coeff)[:, None] * tpl[None, :]).ravel()
    K = sp.coo_matrix((data, (rows, cols)),
                      shape=(grid.n_nodes, grid.n_nodes))
    return K.tocsr()


def assemble_center_mass(grid, cell_coeff):
    """sum_c coeff_c * area * q q^T with q the quarter weights (v-bar coupling)."""
    a = np.repeat(np.arange(4), 4)
    b = np.tile(np.arange(4), 4)
    rows = grid.cell_nodes[:, a].ravel()
    cols = grid.cell_nodes[:, b].ravel()
    data = np.repeat(np.asarray(cell_coeff) * grid.cell_area / 16.0, 16)
    K = sp.coo_matrix((data, (rows, cols)),
                      shape=(grid.n_nodes, grid.n_nodes))
    return K.tocsr()


def load_vector(grid, loads):
    """Nodal load vector from body load (lumped) and boundary load (trapezoid)."""
    b = np.zeros(grid.n_nodes)
    if loads is None:
        return b
    if loads.f is not None:
        b += grid.full_node_weights * loads.body_values(grid)
    ids, w, g = loads.neumann_quadrature(grid)
    if ids.size:
        np.add.at(b, ids, w * g)
    return b


# -- linear algebra -----------------------------------------------------------

def _pcg(A, b, x0, rtol, maxiter, atol=0.0, on_stall="raise"):
    """Jacobi-preconditioned conjugate gradients; returns (x, iters).

    Stops when ||r|| <= max(rtol * ||r0||, atol); the absolute floor keeps
    warm starts from over-solving far below the problem scale.  Raises
    NoConvergence at the cap and FloatingDomain if the operator turns out
    not positive definite.  on_stall="return" hands back the best iterate
    when rounding stops the residual from improving (inexact inner solves
    whose caller checks optimality itself).
    """
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise FloatingDomain("system matrix has non-positive diagonal entries")
    minv = 1.0 / diag
    x = x0.copy()
    r = b - A @ x
    r0 = float(np.linalg.norm(r))
    target = max(rtol * r0, atol)
    if r0 <= target:
        return x, 0
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    best, best_it = r0, 0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise FloatingDomain("conjugate gradients met a non-positive curvature "
                                 "direction; the domain is not held by Dirichlet data")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r))
        if res <= target:
            return x, it
        if res < 0.95 * best:
            best, best_it = res, it
        elif on_stall == "return" and it - best_it > 60:
            return x, it
        z = minv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(f"CG did not reach rtol={rtol} in {maxiter} iterations")


def _check_connected(grid, cell_coeff, fixed_mask, b):
    """Zero-stiffness regions: error if loaded and floating, else pin to zero.

    Returns a mask of nodes to be pinned at value 0 (fully decoupled or in
    a floating zero-load component).
    """
    tiny = 1e-14 * max(float(np.max(cell_coeff)), 1.0)
    active_cells = np.flatnonzero(np.asarray(cell_coeff) > tiny)
    n = grid.n_nodes
    if active_cells.size == grid.n_cells and fixed_mask.any():
        return np.zeros(n, dtype=bool)
    cn = grid.cell_nodes[active_cells]
    rows = np.concatenate([cn[:, 0], cn[:, 0], cn[:, 0]])
    cols = np.concatenate([cn[:, 1], cn[:, 2], cn[:, 3]])
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(adj + adj.T, directed=False)
    anchored = np.zeros(ncomp, dtype=bool)
    anchored[labels[fixed_mask]] = True
    isolated = np.ones(n, dtype=bool)
    isolated[cn.ravel()] = False
    pin = np.zeros(n, dtype=bool)
    for comp in range(ncomp):
        members = labels == comp
        if anchored[comp]:
            continue
        members = members & ~fixed_mask
        if np.max(np.abs(b[members]), initial=0.0) > 1e-30:
            raise FloatingDomain(
                "a loaded region with positive stiffness has no path to "
                "Dirichlet data (eta_delta = 0 with a fully cracked band?)")
        pin |= members
    pin |= isolated & ~fixed_mask
    return pin


def _solve_linear(grid, cell_coeff, fixed_mask, fixed_values, b,
                  settings=DEFAULT_SETTINGS, x0=None):
    """Dirichlet-reduced SPD solve of the bilinear stiffness system."""
    if not fixed_mask.any():
        scale = max(float(np.max(np.abs(b))), 1.0)
        if abs(float(np.sum(b))) > 1e-10 * scale * grid.n_nodes:
            raise BoundaryPartitionInvalid(
                "pure Neumann problem with incompatible loads needs Dirichlet data")
        fixed_mask = fixed_mask.copy()
        fixed_mask[0] = True
        fixed_values = np.zeros(grid.n_nodes)
    pin = _check_connected(grid, cell_coeff, fixed_mask, b)
    if pin.any():
        fixed_mask = fixed_mask | pin
        fixed_values = np.where(pin, 0.0, fixed_values)

    A = assemble_stiffness(grid, cell_coeff)
    u = np.where(fixed_mask, fixed_values, 0.0)
    free = ~fixed_mask
    rhs = (b - A @ u)[free]
    Aff = A[free][:, free].tocsr()
    x0f = x0[free] if x0 is not None else np.zeros(free.sum())
    # absolute floor at cg_tol times the cold-start residual scale
    atol = settings.cg_tol * float(np.linalg.norm(rhs))
    xf, _ = _pcg(Aff, rhs, x0f, settings.cg_tol, settings.cg_max_iter, atol)
    u[free] = xf
    return u


def stiffness_coefficients(grid, v, params, split="full"):
    """Per-cell stiffness mu*(eta + vbar^2); sharp mu if v is None."""
    mu = resolve_mu(params, split)
    if v is None:
        return np.full(grid.n_cells, mu)
    vc = cell_average(v)
    return mu * (params.eta_delta + vc * vc)


def solve_displacement(grid, v, params, loads, settings=DEFAULT_SETTINGS, x0=None):
    """Equilibrium displacement at fixed damage.

    Minimizes (mu/2) int (eta + v^2)|grad u|^2 - int f u - int g u ds over
    fields matching the Dirichlet data; v None means the sharp problem
    with uniform stiffness mu.
    """
    coeff = stiffness_coefficients(grid, v, params)
    fixed_mask, fixed_values = loads.dirichlet_arrays(grid)
    b = load_vector(grid, loads)
    x0v = x0.values if isinstance(x0, ScalarField) else x0
    u = _solve_linear(grid, coeff, fixed_mask, fixed_values, b, settings, x0v)
    return ScalarField(grid, u)


# -- damage subproblem --------------------------------------------------------

def phase_base_operator(grid, params):
    """Driving-independent part of the damage Hessian plus its linear term."""
    react_diag = params.g_c * grid.full_node_weights / (2.0 * params.delta)
    base = assemble_stiffness(grid, np.full(grid.n_cells,
                                            2.0 * params.g_c * params.delta))
    base = (base + sp.diags(react_diag)).tocsr()
    return base, react_diag


def phase_operator(grid, u, params, split="full", base=None):
    """(H, c) of the damage quadratic (1/2) v^T H v - c^T v + const.

    Driving term (1/2) mu_drive vbar^2 |grad u|^2 at cell centers, AT2
    reaction lumped at nodes, gradient penalty at cell centers.  u None
    means zero driving force (pure surface relaxation).
    """
    if base is None:
        base = phase_base_operator(grid, params)
    H, c = base
    if u is not None:
        mu_drive = resolve_mu(params, "full" if split == "full" else "eq")
        g = gradient(u)
        d = mu_drive * (g[:, 0] ** 2 + g[:, 1] ** 2)
        H = (H + assemble_center_mass(grid, d)).tocsr()
    return H, c.copy()


def _box_qp(H, c, upper, x0, settings):
    """Projected-Newton active-set solve of min 1/2 x H x - c x, 0 <= x <= upper.

    Stationarity is measured by the diagonally scaled projected gradient
    (a quasi-Newton estimate of the remaining move per node), which keeps
    the criterion meaningful when localized driving terms make the raw
    gradient scale enormous.
    """
    lower = np.zeros_like(upper)
    assert np.all(upper >= lower), "box must be feasible"
    x = np.clip(x0, lower, upper)
    diag = H.diagonal()

    def objective(z):
        return 0.5 * float(z @ (H @ z)) - float(c @ z)

    fx = objective(x)
    # assembly rounding leaves O(eps * diag) noise in the gradient; nodes at
    # a bound stay free unless the gradient points outward beyond that noise,
    # otherwise the active set would peel off one stencil layer per sweep
    noise = 1e-12 * diag
    best_pg, best_sweep = math.inf, 0
    for sweep in range(settings.active_set_max_sweeps):
        g = H @ x - c
        pg = x - np.clip(x - g, lower, upper)
        pg_scaled = float(np.max(np.abs(pg) / diag))
        if pg_scaled <= settings.altmin_tol:
            return x
        if pg_scaled < 0.95 * best_pg:
            best_pg, best_sweep = pg_scaled, sweep
        elif sweep - best_sweep > 5:
            # stationary to the precision the arithmetic allows (extreme
            # stiffness contrast puts the gradient's rounding floor above a
            # very tight tolerance); the iterate no longer improves
            return x
        clamped = ((x <= lower) & (g > noise)) | ((x >= upper) & (g < -noise))
        clamped |= upper <= lower
        free = ~clamped
        if not free.any():
            return x
        Hff = H[free][:, free].tocsr()
        d = np.zeros_like(x)
        # inexact Newton: loose far from stationarity, tight near it; a
        # rounding-stalled inner solve returns its best direction and the
        # projected-gradient check above stays the authority
        inner_rtol = 1e-2 if pg_scaled > 100.0 * settings.altmin_tol else 1e-4
        inner_rtol = max(inner_rtol, settings.cg_tol)
        d[free], _ = _pcg(Hff, -g[free], np.zeros(int(free.sum())),
                          inner_rtol, settings.cg_max_iter, on_stall="return")
        step = 1.0
        while True:
            xt = np.clip(x + step * d, lower, upper)
            ft = objective(xt)
            if ft <= fx + 1e-4 * float(g @ (xt - x)) or step < 2.0 ** -40:
                break
            step *= 0.5
        if float(np.max(np.abs(xt - x))) == 0.0:
            # projected search cannot move: numerical stationarity
            return x
        x, fx = xt, ft
    raise NoConvergence("active-set damage solve hit its sweep cap")


def solve_phase(grid, u, params, v_upper, settings=DEFAULT_SETTINGS,
                split="full", v0=None, base=None):
    """Damage field minimizing the AT2 energy at fixed u under 0 <= v <= v_upper.

    With split "eq_only" the driving term uses mu_eq |grad u|^2 only.  The
    box constraints are satisfied exactly (final projection is a clip).
    """
    H, c = phase_operator(grid, u, params, split, base=base)
    upper = v_upper.values
    x0 = np.clip(v0.values if v0 is not None else upper, 0.0, upper)
    x = _box_qp(H, c, upper, x0, settings)
    return PhaseField(grid, np.clip(x, 0.0, upper))


# -- alternating minimization --------------------------------------------------

def alternate_minimize(grid, params, loads, v_init, settings=DEFAULT_SETTINGS,
                       split="full", u_init=None):
    """Alternate displacement and damage solves until stagnation.

    v_init is also the irreversibility upper bound for the whole call.
    With the full split the merged objective (phase-field energy minus
    load potentials) is non-increasing at every half step and stopping
    combines objective stagnation with the damage increment; with the
    "eq_only" split there is no single decreasing energy and stopping
    uses the fixed-point residual max|dv| alone.
    """
    v_upper = v_init
    v = v_init.copy()
    u = u_init
    base = phase_base_operator(grid, params)
    history = []
    converged = False
    prev_obj = None
    iterations = 0
    for it in range(1, settings.altmin_max_iter + 1):
        iterations = it
        u = solve_displacement(grid, v, params, loads, settings, x0=u)
        history.append(total_phase_energy(u, v, params, loads).merged_objective)
        v_new = solve_phase(grid, u, params, v_upper, settings, split, v0=v,
                            base=base)
        obj = total_phase_energy(u, v_new, params, loads).merged_objective
        history.append(obj)
        dv = float(np.max(np.abs(v_new.values - v.values)))
        v = v_new
        if split == "full":
            if prev_obj is not None and prev_obj - obj < settings.altmin_tol \
               and dv < settings.altmin_tol:
                converged = True
                break
            prev_obj = obj
        else:
            if dv < settings.altmin_tol:
                converged = True
                break
    ledger = total_phase_energy(u, v, params, loads)
    return StaggeredResult(u, v, ledger, iterations, converged, history)
