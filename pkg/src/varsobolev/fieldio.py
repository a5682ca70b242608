"""Field serialization: CSV and a flat little-endian binary layout.

CSV layout (one record per line)::

    dim,2
    origin,-1.0,-1.0
    extent,2.0,2.0
    resolution,64,64
    half_space_axis,          (empty when unset)
    components,1              (1 for scalar fields, dim for vector fields)
    values
    <v>                       one line per node, row-major, components comma-separated

Numbers are written with ``repr`` so every double round-trips exactly.

Binary layout, all little-endian::

    4 bytes   magic b"VSFD"
    u32       format version (1)
    u32       dim
    u32       components
    i32       half_space_axis (-1 when unset)
    f64[dim]  origin
    f64[dim]  extent
    u64[dim]  resolution
    f64[N*components]  values, row-major, components fastest
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidArgument
from .gridlab import Grid, ScalarField, VectorField, build_grid

MAGIC = b"VSFD"
VERSION = 1

Field = Union[ScalarField, VectorField]


def _components(f: Field) -> int:
    return 1 if isinstance(f, ScalarField) else f.grid.dim


def _flat_values(f: Field) -> np.ndarray:
    return f.values.reshape(f.grid.size, _components(f))


def _rebuild(grid: Grid, comps: int, values: np.ndarray) -> Field:
    if comps == 1:
        return ScalarField(grid, values.reshape(grid.shape))
    return VectorField(grid, values.reshape(grid.shape + (comps,)))


def write_csv(f: Field, path) -> None:
    g = f.grid
    lines = [
        f"dim,{g.dim}",
        "origin," + ",".join(repr(x) for x in g.origin),
        "extent," + ",".join(repr(x) for x in g.extent),
        "resolution," + ",".join(str(x) for x in g.resolution),
        "half_space_axis," + ("" if g.half_space_axis is None else str(g.half_space_axis)),
        f"components,{_components(f)}",
        "values",
    ]
    lines += [",".join(repr(float(x)) for x in row) for row in _flat_values(f)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> Field:
    lines = Path(path).read_text().splitlines()
    header = {}
    for i, line in enumerate(lines):
        if line == "values":
            body = lines[i + 1 :]
            break
        key, _, rest = line.partition(",")
        header[key] = rest
    else:
        raise InvalidArgument(f"{path}: missing 'values' marker")
    dim = int(header["dim"])
    grid = build_grid(
        dim,
        [float(x) for x in header["origin"].split(",")],
        [float(x) for x in header["extent"].split(",")],
        [int(x) for x in header["resolution"].split(",")],
        int(header["half_space_axis"]) if header.get("half_space_axis") else None,
    )
    comps = int(header["components"])
    values = np.array([[float(x) for x in row.split(",")] for row in body if row], dtype=float)
    return _rebuild(grid, comps, values)


def write_binary(f: Field, path) -> None:
    g = f.grid
    comps = _components(f)
    hsa = -1 if g.half_space_axis is None else g.half_space_axis
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIi", VERSION, g.dim, comps, hsa))
        fh.write(struct.pack(f"<{g.dim}d", *g.origin))
        fh.write(struct.pack(f"<{g.dim}d", *g.extent))
        fh.write(struct.pack(f"<{g.dim}Q", *g.resolution))
        fh.write(_flat_values(f).astype("<f8").tobytes())


def read_binary(path) -> Field:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise InvalidArgument(f"{path}: not a field file")
    version, dim, comps, hsa = struct.unpack_from("<IIIi", data, 4)
    if version != VERSION:
        raise InvalidArgument(f"{path}: unsupported version {version}")
    off = 20
    origin = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    extent = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    resolution = struct.unpack_from(f"<{dim}Q", data, off)
    off += 8 * dim
    grid = build_grid(dim, origin, extent, resolution, None if hsa < 0 else hsa)
    values = np.frombuffer(data, dtype="<f8", offset=off).astype(float)
    return _rebuild(grid, comps, values)
