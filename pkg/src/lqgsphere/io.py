"""Binary snapshots of fields and measures.

Layout (little-endian)::

    b"LQGF"  uint32 version  uint32 payload kind (0 field, 1 measure)
    uint32 grid kind (0 planar, 1 cylinder)
    planar:   uint32 resolution, float64 domain_radius
    cylinder: uint32 n_t, uint32 n_theta, float64 t_min, float64 t_max
    field:    uint32 len + utf-8 pinning label
    measure:  float64 gamma
    row-major float64 values (log cell masses for measures)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .chaos import Measure
from .errors import ConfigurationError
from .field_core import Field
from .grids import CylinderGrid, PlanarGrid

MAGIC = b"LQGF"
VERSION = 1
_FIELD, _MEASURE = 0, 1


def _grid_header(g) -> bytes:
    if isinstance(g, PlanarGrid):
        return struct.pack("<IId", 0, g.resolution, g.domain_radius)
    return struct.pack("<IIIdd", 1, g.n_t, g.n_theta, g.t_min, g.t_max)


def save_snapshot(obj: Field | Measure, path) -> Path:
    path = Path(path)
    if isinstance(obj, Field):
        label = obj.pinning.encode()
        head = struct.pack("<I", _FIELD) + _grid_header(obj.geometry) + struct.pack("<I", len(label)) + label
        data = obj.values
    elif isinstance(obj, Measure):
        head = struct.pack("<I", _MEASURE) + _grid_header(obj.geometry) + struct.pack("<d", obj.gamma)
        data = obj.log_mass
    else:
        raise ConfigurationError(f"cannot snapshot {type(obj).__name__}")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", VERSION) + head)
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return path


def load_snapshot(path) -> Field | Measure:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ConfigurationError(f"{path} is not a snapshot file")
    version, kind, gkind = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise ConfigurationError(f"unsupported snapshot version {version}")
    off = 16
    if gkind == 0:
        n, radius = struct.unpack_from("<Id", buf, off)
        off += 12
        grid = PlanarGrid(n, radius)
    elif gkind == 1:
        n_t, n_th, t0, t1 = struct.unpack_from("<IIdd", buf, off)
        off += 24
        grid = CylinderGrid(t0, t1, n_t, n_th)
    else:
        raise ConfigurationError(f"unknown grid kind {gkind}")
    if kind == _FIELD:
        (ln,) = struct.unpack_from("<I", buf, off)
        pinning = buf[off + 4:off + 4 + ln].decode()
        off += 4 + ln
    elif kind == _MEASURE:
        (gamma,) = struct.unpack_from("<d", buf, off)
        off += 8
    else:
        raise ConfigurationError(f"unknown payload kind {kind}")
    count = grid.shape[0] * grid.shape[1]
    if len(buf) - off != 8 * count:
        raise ConfigurationError("snapshot payload has the wrong length")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(grid.shape)
    if kind == _FIELD:
        return Field(grid, values, pinning)
    return Measure(grid, values, gamma)
