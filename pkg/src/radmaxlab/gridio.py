"""GridFunction file formats.

CSV
    A first comment line ``# radmaxlab-gridfunction n=.. J=.. N=.. space=..``,
    then the header ``cell,component,coordinate,real,imag`` and one row per
    entry.  ``cell`` is the C-order flat index of the finest cell and
    ``coordinate`` the C-order flat index into the space shape (``i*m + j``
    for Schatten matrices).

Binary
    The magic bytes ``RMLGF1\\n``, a little-endian uint32 header length, a JSON
    header with keys ``n, J, N, space``, then every value as little-endian
    complex128 in C order of ``grid.shape``.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ._errors import InvalidInputError
from .banach import SpaceDescriptor
from .dyadic import Grid, GridFunction

MAGIC = b"RMLGF1\n"
CSV_COLUMNS = ["cell", "component", "coordinate", "real", "imag"]


def _grid_header(grid: Grid) -> dict:
    return {"n": grid.n, "J": grid.J, "N": grid.n_comp, "space": grid.space.spec()}


def _grid_from_header(h: dict) -> Grid:
    try:
        return Grid(int(h["n"]), int(h["J"]), int(h["N"]), SpaceDescriptor.parse(str(h["space"])))
    except KeyError as exc:
        raise InvalidInputError(f"grid header lacks {exc}") from exc


def write_csv(u: GridFunction, path) -> None:
    g = u.grid
    flat = u.values.reshape(g.cells, g.n_comp, -1)
    with open(path, "w", newline="") as fh:
        h = _grid_header(g)
        fh.write("# radmaxlab-gridfunction " + " ".join(f"{k}={v}" for k, v in h.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for cell in range(flat.shape[0]):
            for comp in range(flat.shape[1]):
                for coord in range(flat.shape[2]):
                    z = flat[cell, comp, coord]
                    w.writerow([cell, comp, coord, repr(float(z.real)), repr(float(z.imag))])


def read_csv(path) -> GridFunction:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# radmaxlab-gridfunction"):
            raise InvalidInputError("missing grid-function header line")
        header = dict(item.split("=", 1) for item in first.split()[2:])
        grid = _grid_from_header(header)
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise InvalidInputError(f"expected columns {CSV_COLUMNS}")
        flat = np.zeros((grid.cells, grid.n_comp, grid.space.size), dtype=complex)
        seen = np.zeros(flat.shape, dtype=bool)
        for row in reader:
            idx = (int(row["cell"]), int(row["component"]), int(row["coordinate"]))
            try:
                flat[idx] = complex(float(row["real"]), float(row["imag"]))
                seen[idx] = True
            except IndexError as exc:
                raise InvalidInputError(f"row index {idx} out of range") from exc
    if not seen.all():
        raise InvalidInputError("grid-function CSV is missing entries")
    return GridFunction(grid, flat.reshape(grid.shape))


def write_binary(u: GridFunction, path) -> None:
    header = json.dumps(_grid_header(u.grid), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(u.values, dtype="<c16").tobytes())


def read_binary(path) -> GridFunction:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise InvalidInputError("not a radmaxlab grid-function file")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    grid = _grid_from_header(json.loads(data[off:off + hlen]))
    off += hlen
    vals = np.frombuffer(data, dtype="<c16", offset=off)
    if vals.size != grid.size:
        raise InvalidInputError(f"expected {grid.size} values, found {vals.size}")
    return GridFunction(grid, vals.reshape(grid.shape).astype(complex))
