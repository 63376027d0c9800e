"""On-disk formats: field CSV, legacy-VTK ASCII, energies CSV, manifests.

Field CSV: one header line ``# grid nx ny hx hy ox oy`` followed by
``x,y,value`` rows over physical nodes in storage order (logical row-major
lattice first, then the slit duplicates).  Values are written with repr so
a round trip is bit-identical.

Legacy VTK: STRUCTURED_POINTS with one SCALARS block per field over the
logical lattice; slit-duplicated nodes collapse to their geometric
position showing the plus-side copy, and an extra ``slit_side`` array
marks nodes that carry a second copy.
"""

import json
import os

import numpy as np

from .errors import FormatError, GridMismatch
from .fields import PhaseField, ScalarField


def write_field_csv(path, field):
    g = field.grid
    lines = [f"# grid {g.nx} {g.ny} {g.hx!r} {g.hy!r} {g.origin[0]!r} {g.origin[1]!r}"]
    for x, y, v in zip(g.node_x, g.node_y, field.values):
        lines.append(f"{float(x)!r},{float(y)!r},{float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_csv(path, grid, kind=ScalarField):
    """Read a field CSV back onto a known grid; validates the descriptor."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("# grid "):
        raise FormatError(f"{path}: missing '# grid' header")
    parts = lines[0].split()
    if len(parts) != 8:
        raise FormatError(f"{path}: malformed grid header")
    nx, ny = int(parts[2]), int(parts[3])
    hx, hy, ox, oy = (float(p) for p in parts[4:8])
    if (nx, ny) != (grid.nx, grid.ny) or abs(hx - grid.hx) > 1e-12 * grid.hx \
            or abs(hy - grid.hy) > 1e-12 * grid.hy \
            or abs(ox - grid.origin[0]) > 1e-12 or abs(oy - grid.origin[1]) > 1e-12:
        raise GridMismatch(f"{path}: header does not match the grid descriptor")
    rows = lines[1:]
    if len(rows) != grid.n_nodes:
        raise FormatError(
            f"{path}: {len(rows)} rows, grid has {grid.n_nodes} nodes "
            "(truncated file or wrong slit?)")
    vals = np.empty(grid.n_nodes)
    for k, row in enumerate(rows):
        cols = row.split(",")
        if len(cols) != 3:
            raise FormatError(f"{path}: row {k + 2} is not x,y,value")
        try:
            x, y, v = float(cols[0]), float(cols[1]), float(cols[2])
        except ValueError as exc:
            raise FormatError(f"{path}: row {k + 2}: {exc}") from exc
        if abs(x - grid.node_x[k]) > 1e-9 or abs(y - grid.node_y[k]) > 1e-9:
            raise GridMismatch(f"{path}: row {k + 2} coordinates off the grid")
        vals[k] = v
    return kind(grid, vals)


def write_fields_vtk(path, fields):
    """Legacy-VTK ASCII STRUCTURED_POINTS dump of named nodal fields."""
    if not fields:
        raise ValueError("no fields to write")
    grid = next(iter(fields.values())).grid
    lines = ["# vtk DataFile Version 2.0", "crackfield nodal fields", "ASCII",
             "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
             f"ORIGIN {grid.origin[0]!r} {grid.origin[1]!r} 0.0",
             f"SPACING {grid.hx!r} {grid.hy!r} 1.0",
             f"POINT_DATA {grid.n_logical}"]
    for name, field in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lattice = grid.logical_values(field.values, reduce="plus")
        lines.extend(repr(v) for v in lattice.ravel())
    lines.append("SCALARS slit_side int 1")
    lines.append("LOOKUP_TABLE default")
    tagged = np.zeros((grid.ny + 1, grid.nx + 1), dtype=int)
    for (i, j) in grid._dup_minus:
        tagged[j, i] = 1
    lines.extend(str(v) for v in tagged.ravel())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class EnergiesWriter:
    """Appends ledger rows to an energies.csv file."""

    def __init__(self, path):
        self.path = path
        if not os.path.exists(path):
            from .energy import EnergyLedger
            with open(path, "w") as fh:
                fh.write(EnergyLedger.CSV_HEADER + "\n")

    def append(self, step, time, ledger):
        with open(self.path, "a") as fh:
            fh.write(ledger.csv_row(step, time) + "\n")


def write_json_atomic(path, payload):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def import_snapshot(grid, u_path, v_path=None):
    """Read a (u, v) state from field CSVs onto a known grid."""
    u = read_field_csv(u_path, grid, ScalarField)
    v = read_field_csv(v_path, grid, PhaseField) if v_path else None
    return u, v
