"""Crack-tip stability machinery: SIF extraction, blow-up diagnostics,
rescaling identities, the ball bound, and the finite-competitor surrogate.

Verdicts compare the energy release rate (pi/4) K^2 of the fitted
square-root singular field against the toughness G_c, with a configurable
marginal band around equality.  Competitor tests can only sample a finite
family of straight crack extensions, so the stable verdict is reported as
"StableWithinFamily" rather than a claim about all crack increments.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import elastic_energy, surface_energy, total_phase_energy
from .errors import AnnulusEmpty, TipOffLattice, WindowTooCoarse
from .fields import (PhaseField, ScalarField, blowup_rescale, blowup_state,
                     dilate_slit, dyadic_exponent, l2_distance_on_ball,
                     resample_to_coarser)
from .grid import ball_mask, slit_length_in_ball
from .singular import crack_frame
from .solve import (DEFAULT_SETTINGS, _solve_linear, solve_phase,
                    stiffness_coefficients)

STABLE = "Stable"
UNSTABLE = "Unstable"
MARGINAL = "Marginal"
STABLE_WITHIN_FAMILY = "StableWithinFamily"


@dataclass
class StabilityReport:
    """Per-tip stability audit result."""

    tip: tuple
    k_fit: float
    fit_residual: float
    verdict: str
    blowup_cauchy: list = field(default_factory=list)
    ball_bound_ok: bool = True
    competitor_margin: float = None
    competitor_rows: list = field(default=None, repr=False)

    @property
    def err(self):
        """Energy release rate of the fitted singular field, (pi/4) K^2."""
        return 0.25 * math.pi * self.k_fit * self.k_fit

    def as_dict(self):
        return {"tip": list(self.tip), "k_fit": self.k_fit,
                "fit_residual": self.fit_residual, "err": self.err,
                "verdict": self.verdict,
                "blowup_cauchy": list(self.blowup_cauchy),
                "ball_bound_ok": self.ball_bound_ok,
                "competitor_margin": self.competitor_margin}


@dataclass(frozen=True)
class CompetitorFamily:
    """Straight crack extensions: angles (radians, relative to the crack
    direction ahead of the tip), lengths, and the inserted band width in
    cells."""

    angles: tuple
    lengths: tuple
    insertion: int = 2

    def __post_init__(self):
        if not self.angles or not self.lengths:
            raise ValueError("competitor family must not be empty")
        if any(not -math.pi < a < math.pi for a in self.angles):
            raise ValueError("angles must lie in (-pi, pi)")
        if any(l <= 0 for l in self.lengths):
            raise ValueError("lengths must be positive")
        if self.insertion < 1:
            raise ValueError("insertion width must be at least one cell")


def default_insertion_cells(grid, params):
    """Band width max(2 cells, delta/2) expressed in cells."""
    h = max(grid.hx, grid.hy)
    return max(2, math.ceil(params.delta / (2.0 * h)))


# -- stress intensity factor ----------------------------------------------------

def extract_sif(u, tip, r_in, r_out, ahead=None):
    """Least-squares SIF of the sqrt(r) sin(theta/2) mode on an annulus.

    Fits u - u(tip) against the singular mode over all physical nodes with
    r_in <= r <= r_out (both crack-face copies included).  Returns
    (k_fit, relative RMS residual).  ``ahead`` is the unit direction
    continuing the crack past the tip; defaults to the grid slit's frame.
    """
    grid = u.grid
    try:
        it, jt = grid.locate_node(tip, "tip")
    except Exception as exc:
        raise TipOffLattice(str(exc)) from exc
    if grid.is_duplicated(it, jt):
        raise TipOffLattice("tip must be a single-valued node")
    if ahead is None:
        ahead = crack_frame(grid.slit)
    if not 0.0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")

    tip_xy = grid.node_point(it, jt)
    e1x, e1y = ahead
    dx = grid.node_x - tip_xy[0]
    dy = grid.node_y - tip_xy[1]
    xi = dx * e1x + dy * e1y
    up = -dx * e1y + dy * e1x
    r = np.hypot(xi, up)
    theta = np.arctan2(up, xi)
    tol = 1e-9 * max(grid.hx, grid.hy)
    on_ray = (np.abs(up) <= tol) & (xi < -tol)
    theta = np.where(on_ray, math.pi * grid.node_side, theta)

    sel = (r >= r_in) & (r <= r_out) & ~(on_ray & (grid.node_side == 0))
    if not np.any(sel):
        raise AnnulusEmpty(f"no nodes in annulus [{r_in}, {r_out}]")
    phi = np.sqrt(r[sel]) * np.sin(0.5 * theta[sel])
    rhs = u.values[sel] - u.values[grid.node_id(it, jt)]
    denom = float(phi @ phi)
    if denom == 0.0:
        raise AnnulusEmpty("annulus nodes carry no singular-mode content")
    k_fit = float(phi @ rhs) / denom
    norm = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(rhs - k_fit * phi)) / norm if norm > 0.0 else 0.0
    return k_fit, residual


def griffith_verdict(k_fit, g_c, tol_band=0.05):
    """Stable / Unstable / Marginal from (pi/4) K^2 against G_c."""
    if tol_band < 0.0:
        raise ValueError("tol_band must be nonnegative")
    err = 0.25 * math.pi * k_fit * k_fit
    if err > g_c * (1.0 + tol_band):
        return UNSTABLE
    if err < g_c * (1.0 - tol_band):
        return STABLE
    return MARGINAL


# -- blow-up diagnostics ---------------------------------------------------------

@dataclass
class BlowupDiagnostics:
    eps_list: list
    cauchy: list          # successive L2 distances on the coarser window
    finest: object        # RescaledPair at the smallest eps

    def observed_rate(self):
        """Least-squares slope of log2(distance) against log2(eps)."""
        d = np.asarray(self.cauchy)
        if d.size < 2 or np.any(d <= 0.0):
            return None
        x = np.log2(np.asarray(self.eps_list[:-1]))
        y = np.log2(d)
        x = x - x.mean()
        return float((x @ (y - y.mean())) / (x @ x))


def blowup_diagnose(u, x0, eps_list, r, v=None):
    """Rescale at each eps and report successive L2 distances.

    eps_list must be strictly decreasing dyadics; each consecutive pair is
    compared on the coarser of the two blow-up grids over B(0, r).  The
    finest-scale pair stands in for the blow-up limit.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 1:
        raise ValueError("eps_list must not be empty")
    for e in eps_list:
        dyadic_exponent(e)
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    pairs = [blowup_state(u, v, x0, e, r) for e in eps_list]
    cauchy = []
    for fine, coarse in zip(pairs[:-1], pairs[1:]):
        resampled = resample_to_coarser(fine, coarse)
        mask = ball_mask(coarse.grid, (0.0, 0.0), r)
        cauchy.append(l2_distance_on_ball(resampled, coarse.u, mask))
    return BlowupDiagnostics(eps_list, cauchy, pairs[-1])


# -- rescaling identities ---------------------------------------------------------

@dataclass
class ScalingCheck:
    eps: float
    alpha: float
    rows: list            # (term, lhs, rhs, rel_diff)
    eta_ok: bool
    matched: bool

    def max_rel_diff(self):
        return max(row[3] for row in self.rows)


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0.0 else 0.0


def check_scaling_identity(u, v, params, x0, eps, r, matched_quadrature=True):
    """Both sides of the dyadic rescaling identity with matched quadrature.

    Phase-field mode (v given): the window energy with regularization
    length alpha = delta/eps equals eps**-1 times the source energy over
    B(x0, eps*r), term by term.  Sharp mode (v None): elastic energy and
    slit length scale with eps**-1.  With matched_quadrature=False the
    source side integrates over an independently built ball mask, which
    breaks exactness (negative control).
    """
    from .fields import pushforward_mask
    pair = blowup_state(u, v, x0, eps, r)
    mask_w = ball_mask(pair.grid, (0.0, 0.0), r)
    if matched_quadrature:
        mask_s = pushforward_mask(pair, mask_w)
    else:
        # deliberate half-cell inflation of the source ball (negative control)
        mask_s = ball_mask(u.grid, x0, eps * r + 0.5 * max(u.grid.hx, u.grid.hy))
    inv = 1.0 / eps
    rows = []
    if v is not None:
        alpha = params.delta / eps
        params_w = params.with_delta(alpha)
        le = elastic_energy(pair.u, pair.v, params, mask=mask_w)
        re = inv * elastic_energy(u, v, params, mask=mask_s)
        rows.append(("elastic", le, re, _rel(le, re)))
        ls = surface_energy(pair.v, params_w, mask=mask_w)
        rs = inv * surface_energy(v, params, mask=mask_s)
        rows.append(("surface", ls, rs, _rel(ls, rs)))
        rows.append(("total", le + ls, re + rs, _rel(le + ls, re + rs)))
        eta_ok = params.eta_delta <= 0.01 * alpha
    else:
        alpha = float("nan")
        le = elastic_energy(pair.u, mask=mask_w)
        re = inv * elastic_energy(u, mask=mask_s)
        rows.append(("elastic", le, re, _rel(le, re)))
        if u.grid.slit is not None:
            lk = slit_length_in_ball(dilate_slit(u.grid.slit, x0, eps), (0.0, 0.0), r)
            rk = inv * slit_length_in_ball(u.grid.slit, x0, eps * r)
            rows.append(("slit_length", lk, rk, _rel(lk, rk)))
        eta_ok = True
    return ScalingCheck(eps, alpha, rows, eta_ok, matched_quadrature)


@dataclass
class LoadScalingCheck:
    eps: float
    lhs: float
    rhs: float
    rel_diff: float
    rescaled_coefficient: float   # eps**1.5 weight of the load term


def check_load_scaling(u, f, x0, eps, r, matched_quadrature=True):
    """Load-term identity: int f u_eps over B(0,r) = eps**-5/2 int f u.

    f enters the window side by dilation f(x0 + eps x); the source side
    integrates f times (u - u(x0)) since the rescaling subtracts the
    center value.  Also reports the eps**3/2 coefficient that multiplies
    the load term in the rescaled energy.
    """
    from .fields import pushforward_mask
    pair = blowup_rescale(u, x0, eps, r)
    win, src, cidx = pair.grid, pair.src_ids, pair.center_index
    if callable(f):
        f_src = np.asarray(f(u.grid.node_x, u.grid.node_y), dtype=float) \
            * np.ones(u.grid.n_nodes)
    else:
        f_src = np.asarray(f, dtype=float) * np.ones(u.grid.n_nodes)
    mask_w = ball_mask(win, (0.0, 0.0), r)
    if matched_quadrature:
        mask_s = pushforward_mask(pair, mask_w)
    else:
        mask_s = ball_mask(u.grid, x0, eps * r + 0.5 * max(u.grid.hx, u.grid.hy))
    integrand = f_src[src] * pair.u.values
    lhs = float(np.dot(mask_w.node_weights, integrand))
    u0 = u.values[u.grid.node_id(*cidx)]
    rhs = eps ** -2.5 * float(np.dot(mask_s.node_weights,
                                     f_src * (u.values - u0)))
    # the signed integral may cancel to zero (antisymmetric u); measure the
    # mismatch against the absolute-integrand magnitude in that case
    scale = max(abs(lhs), abs(rhs),
                float(np.dot(mask_w.node_weights, np.abs(integrand))))
    rel = abs(lhs - rhs) / scale if scale > 0.0 else 0.0
    return LoadScalingCheck(eps, lhs, rhs, rel, eps ** 1.5)


# -- ball bound -------------------------------------------------------------------

@dataclass
class BallBoundReport:
    entries: list         # (r, energy, bound, ok)
    slope: float          # LS fit of energy ~ slope * r through the origin
    all_ok: bool


def check_ball_bound(u_hat, g_c, r_list, center=(0.0, 0.0)):
    """Elastic energy in balls against the 2 pi G_c r competitor bound.

    The through-origin slope of energy against r doubles as an independent
    energy-release-rate estimate ((pi/4) K^2 for the singular field).
    """
    entries = []
    num = den = 0.0
    for r in r_list:
        mask = ball_mask(u_hat.grid, center, r)
        e = elastic_energy(u_hat, mask=mask)
        bound = 2.0 * math.pi * g_c * r
        entries.append((float(r), e, bound, bool(e <= bound * (1.0 + 1e-9))))
        num += e * r
        den += r * r
    slope = num / den if den > 0.0 else 0.0
    return BallBoundReport(entries, slope, all(ok for *_, ok in entries))


# -- competitor surrogate ---------------------------------------------------------

@dataclass
class CompetitorResult:
    margin: float
    verdict: str
    rows: list            # (angle, length, incumbent, competitor, margin)
    incumbent_energy: float

    CSV_HEADER = "angle,length,incumbent_energy,competitor_energy,margin"


def _band_upper(grid, tip, direction, length, width, base_upper):
    """Upper bound with v = 0 on nodes within width/2 of the extension."""
    ex, ey = direction
    px = grid.node_x - tip[0]
    py = grid.node_y - tip[1]
    t = np.clip(px * ex + py * ey, 0.0, length)
    d2 = (px - t * ex) ** 2 + (py - t * ey) ** 2
    upper = base_upper.copy()
    upper[d2 <= (0.5 * width) ** 2] = 0.0
    return upper


def competitor_test(u_hat, params, family, r, tip=None, v_hat=None,
                    settings=DEFAULT_SETTINGS, margin_tol=0.0, ahead=None):
    """Energy margins of straight crack extensions against the incumbent.

    For each (angle, length) a damage band of the configured width is
    forced to zero along the extension, relaxed against the surface energy
    alone (the competitor crack set is fixed), and the displacement is
    re-solved with u_hat held as Dirichlet data outside B(tip, r).  The
    margin is min over the family of competitor minus incumbent ball
    energy; a negative margin beyond margin_tol is Unstable, otherwise
    the state is stable within the tested family.
    """
    grid = u_hat.grid
    if tip is None:
        if grid.slit is None or grid.slit.tip is None:
            raise ValueError("competitor test needs a tip")
        tip = grid.slit.tip
    if ahead is None:
        ahead = crack_frame(grid.slit) if grid.slit is not None else (1.0, 0.0)
    if max(family.lengths) > 0.5 * r + 1e-12:
        raise ValueError("competitor lengths must not exceed r/2")
    h = max(grid.hx, grid.hy)
    if min(family.lengths) <= h:
        raise ValueError("competitor lengths must exceed the grid spacing")

    width = family.insertion * h
    dist = np.hypot(grid.node_x - tip[0], grid.node_y - tip[1])
    fixed_mask = dist >= r
    if not fixed_mask.any() or fixed_mask.all():
        raise ValueError("ball B(tip, r) must cut the window strictly")
    mask = ball_mask(grid, tip, r)
    slit_term = params.g_c * slit_length_in_ball(grid.slit, tip, r)
    b = np.zeros(grid.n_nodes)

    v_inc = v_hat if v_hat is not None else PhaseField.ones(grid)
    coeff_inc = stiffness_coefficients(grid, v_inc, params)
    u0 = ScalarField(grid, _solve_linear(grid, coeff_inc, fixed_mask,
                                         u_hat.values, b, settings))
    surf_inc = surface_energy(v_inc, params, mask=mask)
    incumbent = elastic_energy(u0, v_inc, params, mask=mask) + slit_term

    base_upper = v_inc.values
    e1x, e1y = ahead
    rows = []
    for angle in family.angles:
        ca, sa = math.cos(angle), math.sin(angle)
        direction = (ca * e1x - sa * e1y, sa * e1x + ca * e1y)
        for length in family.lengths:
            upper = _band_upper(grid, tip, direction, length, width, base_upper)
            v_comp = solve_phase(grid, None, params,
                                 PhaseField(grid, upper), settings)
            coeff = stiffness_coefficients(grid, v_comp, params)
            uc = _solve_linear(grid, coeff, fixed_mask, u_hat.values, b,
                               settings, x0=u0.values)
            e_comp = (elastic_energy(ScalarField(grid, uc), v_comp, params, mask=mask)
                      + slit_term
                      + surface_energy(v_comp, params, mask=mask) - surf_inc)
            rows.append((float(angle), float(length), incumbent, e_comp,
                         e_comp - incumbent))
    margin = min(row[4] for row in rows)
    verdict = UNSTABLE if margin < -margin_tol else STABLE_WITHIN_FAMILY
    return CompetitorResult(margin, verdict, rows, incumbent)
