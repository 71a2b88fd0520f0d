"""On-disk formats for paths and Malliavin fields.

* path CSV: header ``t,x,u``, one row per full-grid node and time level;
* path binary: the noise dump (``STWN``) followed by a ``STPU`` section
  (u32 rows, u32 cols, row-major little-endian f64 values);
* field binary: ``STMD`` header with the four dimensions, then a zlib
  stream of little-endian f32 values in (y, s, x, t) order.
"""
from __future__ import annotations

import csv
import struct
import zlib
from pathlib import Path

import numpy as np

from .noise_field import NoiseField, dump_noise, load_noise, _HEADER

_PU = struct.Struct("<4sII")
_MD = struct.Struct("<4sHIIII")


def write_path_csv(path_state, fname) -> None:
    g = path_state.grid
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "u"])
        xs = [repr(float(x)) for x in g.x_full]
        for m, t in enumerate(g.t):
            ts = repr(float(t))
            for i, xr in enumerate(xs):
                w.writerow([ts, xr, repr(float(path_state.values[i, m]))])


def read_path_csv(fname, nx: int, nt: int) -> np.ndarray:
    """Values array of shape (nx + 2, nt + 1) from a path CSV."""
    data = np.loadtxt(fname, delimiter=",", skiprows=1)
    return data[:, 2].reshape(nt + 1, nx + 2).T


def dump_path(noise: NoiseField, path_state, fname) -> None:
    dump_noise(noise, fname)
    v = np.ascontiguousarray(path_state.values, dtype="<f8")
    with open(fname, "ab") as fh:
        fh.write(_PU.pack(b"STPU", *v.shape))
        fh.write(v.tobytes())


def load_path(fname):
    """(NoiseField, values array) from a combined dump."""
    noise = load_noise(fname)
    raw = Path(fname).read_bytes()
    off = _HEADER.size + noise.increments.size * 8
    magic, rows, cols = _PU.unpack_from(raw, off)
    if magic != b"STPU":
        raise ValueError(f"bad section magic {magic!r}")
    vals = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=off + _PU.size)
    return noise, vals.reshape(rows, cols).copy()


def dump_field(values: np.ndarray, fname, level: int = 6) -> None:
    """Compressed f32 dump of a (y, s, x, t) array; NaNs are kept."""
    a = np.ascontiguousarray(values, dtype="<f4")
    if a.ndim != 4:
        raise ValueError("field dump expects a 4-index array")
    with open(fname, "wb") as fh:
        fh.write(_MD.pack(b"STMD", 1, *a.shape))
        fh.write(zlib.compress(a.tobytes(), level))


def load_field(fname) -> np.ndarray:
    raw = Path(fname).read_bytes()
    magic, version, *dims = _MD.unpack_from(raw, 0)
    if magic != b"STMD":
        raise ValueError(f"bad magic {magic!r}")
    if version != 1:
        raise ValueError(f"unsupported field dump version {version}")
    body = zlib.decompress(raw[_MD.size:])
    return np.frombuffer(body, dtype="<f4").reshape(dims).copy()
