"""Run configuration: flat-section key=value text with typed values.

Sections are fixed ([grid], [material], [loads], [solver], [stability],
[demo], [output], [sweep]); unknown sections or keys are errors that name
the offender, and the whole file parses before any computation starts.
Load expressions are restricted to polynomials and sin/cos of x, y, t.
"""

import ast
import configparser
import math

import numpy as np

from .energy import LoadSpec, MaterialParams
from .errors import ConfigError
from .grid import SIDES, SlitSpec, build_grid
from .solve import SolverSettings

_ALLOWED_CALLS = {"sin", "cos"}
_ALLOWED_NAMES = {"x", "y", "t", "pi"}


def compile_expr(src, key="expression"):
    """Compile a polynomial/sin/cos expression of x, y, t."""
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{key}: cannot parse {src!r}: {exc}") from exc

    def check(node):
        if isinstance(node, ast.BinOp) and isinstance(
                node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            check(node.operand)
            return
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name) and node.id in _ALLOWED_NAMES:
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _ALLOWED_CALLS and len(node.args) == 1 \
                and not node.keywords:
            check(node.args[0])
            return
        raise ConfigError(
            f"{key}: {src!r} is not a polynomial/sin/cos expression of x, y, t")

    check(tree.body)
    code = compile(tree, f"<{key}>", "eval")
    env = {"__builtins__": {}, "sin": np.sin, "cos": np.cos, "pi": math.pi}

    def fn(x, y, t=0.0):
        return eval(code, env, {"x": x, "y": y, "t": t})

    fn.source = src
    return fn


def _floats(n=None):
    def parse(s, key):
        vals = [float(v) for v in s.replace(",", " ").split()]
        if n is not None and len(vals) != n:
            raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
        return vals
    return parse


def _float(s, key):
    return float(s)


def _int(s, key):
    return int(s)


def _bool(s, key):
    if s.lower() in ("true", "yes", "1", "on"):
        return True
    if s.lower() in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {s!r}")


def _str(s, key):
    return s


def _expr(s, key):
    compile_expr(s, key)  # validate now, compile again on use
    return s


def _sides(s, key):
    sides = s.split()
    for side in sides:
        if side not in SIDES:
            raise ConfigError(f"{key}: unknown side {side!r}")
    return sides


def _times(s, key):
    parts = s.split()
    if parts and parts[0] == "linspace":
        if len(parts) != 4:
            raise ConfigError(f"{key}: linspace needs start stop count")
        return [float(v) for v in
                np.linspace(float(parts[1]), float(parts[2]), int(parts[3]))]
    return [float(v) for v in parts]


_SCHEMA = {
    "grid": {"rect": _floats(4), "resolution": _floats(), "slit": _floats(),
             "slit_tip": _floats(2)},
    "material": {"g_c": _float, "delta": _float, "eta_delta": _float,
                 "mu_eq": _float, "mu_neq": _float},
    "loads": {"dirichlet_sides": _sides, "dirichlet": _expr,
              "dirichlet_left": _expr, "dirichlet_right": _expr,
              "dirichlet_top": _expr, "dirichlet_bottom": _expr,
              "dirichlet_sif_k": _float,
              "f": _expr, "g_left": _expr, "g_right": _expr,
              "g_top": _expr, "g_bottom": _expr,
              "times": _times, "time": _float},
    "solver": {"cg_tol": _float, "cg_max_iter": _int, "altmin_tol": _float,
               "altmin_max_iter": _int, "active_set_max_sweeps": _int,
               "split": _str, "elastic": _bool},
    "stability": {"eps_list": _floats(), "r": _float, "annulus": _floats(2),
                  "tip": _floats(2), "angles": _floats(), "lengths": _floats(),
                  "insertion_cells": _int, "tol_band": _float,
                  "margin_tol": _float, "competitor_r": _float,
                  "ridge_threshold": _float, "input_u": _str, "input_v": _str},
    "demo": {"band_y": _float, "band_rows": _int, "amplitudes": _floats()},
    "output": {"directory": _str, "vtk": _bool, "workers": _int},
    "sweep": None,  # free-form: dotted config keys -> ';'-separated values
}


class RunConfig:
    """Parsed, validated configuration; equality compares typed values."""

    def __init__(self, text):
        self.text = text
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None, strict=True)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"config does not parse: {exc}") from exc
        self.sections = {}
        for sec in cp.sections():
            if sec not in _SCHEMA:
                raise ConfigError(f"unknown section [{sec}]")
            schema = _SCHEMA[sec]
            parsed = {}
            for key, raw in cp[sec].items():
                if schema is None:
                    parsed[key] = raw.strip()
                    continue
                if key not in schema:
                    raise ConfigError(f"unknown key [{sec}] {key}")
                parsed[key] = schema[key](raw.strip(), f"[{sec}] {key}")
            self.sections[sec] = parsed

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.sections == other.sections

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section, key):
        val = self.get(section, key)
        if val is None:
            raise ConfigError(f"command needs [{section}] {key}")
        return val

    def with_overrides(self, overrides):
        """New config with ``section.key=value`` strings applied to the text."""
        if not overrides:
            return self
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
        cp.optionxform = str
        cp.read_string(self.text)
        for item in overrides:
            try:
                target, value = item.split("=", 1)
                sec, key = target.strip().split(".", 1)
            except ValueError as exc:
                raise ConfigError(
                    f"override {item!r} is not section.key=value") from exc
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, key.strip(), value.strip())
        import io
        buf = io.StringIO()
        cp.write(buf)
        return RunConfig(buf.getvalue())

    # -- builders -------------------------------------------------------------

    def build_grid(self):
        rect = self.require("grid", "rect")
        res = self.require("grid", "resolution")
        res = [int(v) for v in res]
        if len(res) == 1:
            res = [res[0], res[0]]
        if len(res) != 2:
            raise ConfigError("[grid] resolution: expected one or two integers")
        slit = None
        pts = self.get("grid", "slit")
        if pts is not None:
            if len(pts) < 4 or len(pts) % 2:
                raise ConfigError("[grid] slit: expected an even list of >= 4 numbers")
            points = tuple((pts[i], pts[i + 1]) for i in range(0, len(pts), 2))
            tip = self.get("grid", "slit_tip")
            slit = SlitSpec(points, tuple(tip) if tip is not None else ())
        return build_grid(rect, res, slit=slit)

    def material(self):
        sec = self.sections.get("material", {})
        for key in ("g_c", "delta"):
            if key not in sec:
                raise ConfigError(f"command needs [material] {key}")
        kwargs = {k: sec[k] for k in
                  ("g_c", "delta", "eta_delta", "mu_eq", "mu_neq") if k in sec}
        return MaterialParams(**kwargs)

    def solver_settings(self):
        sec = self.sections.get("solver", {})
        kwargs = {k: sec[k] for k in
                  ("cg_tol", "cg_max_iter", "altmin_tol", "altmin_max_iter",
                   "active_set_max_sweeps") if k in sec}
        return SolverSettings(**kwargs)

    def split(self):
        split = self.get("solver", "split", "full")
        if split not in ("full", "eq_only"):
            raise ConfigError("[solver] split must be 'full' or 'eq_only'")
        return split

    def loads_at(self, t, grid=None):
        sec = self.sections.get("loads", {})
        dsides = sec.get("dirichlet_sides", list(SIDES))
        partition = {s: ("dirichlet" if s in dsides else "neumann") for s in SIDES}

        def bind(src):
            fn = compile_expr(src)
            return lambda x, y: fn(x, y, t)

        dirichlet = {}
        if "dirichlet_sif_k" in sec:
            # benchmark loading: the side-aware singular crack-tip field
            if grid is None:
                raise ConfigError("[loads] dirichlet_sif_k needs the grid at bind time")
            from .singular import mode_iii_displacement
            arr = mode_iii_displacement(grid, k=sec["dirichlet_sif_k"]).values
            dirichlet = {s: arr for s in dsides}
        for s in dsides:
            if s in dirichlet:
                continue
            key = f"dirichlet_{s}"
            if key in sec:
                dirichlet[s] = bind(sec[key])
            elif "dirichlet" in sec:
                dirichlet[s] = bind(sec["dirichlet"])
            else:
                dirichlet[s] = 0.0
        g = {}
        for s in SIDES:
            key = f"g_{s}"
            if key in sec:
                if partition[s] != "neumann":
                    raise ConfigError(f"[loads] {key}: side {s} is Dirichlet")
                g[s] = bind(sec[key])
        f = bind(sec["f"]) if "f" in sec else None
        return LoadSpec(partition=partition, dirichlet=dirichlet, f=f, g=g)

    def times(self):
        return self.get("loads", "times") or [self.get("loads", "time", 0.0)]

    def output_dir(self, default="run"):
        return self.get("output", "directory", default)
