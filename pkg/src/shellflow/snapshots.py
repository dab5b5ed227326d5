"""Binary snapshot format and CSV emission.

Layout (little-endian): magic ``SHFL``, u32 format version, u32 grid dims
(N1, N2, N3), f64 time stamp, u32 field count; then per field a u16 name
length, the UTF-8 name, a u32 component count, and the row-major float64
payload.  Round trips are bit-exact.
"""

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptHeader, FormatVersionMismatch, ShapeMismatch

MAGIC = b"SHFL"
VERSION = 1


def write_snapshot(path, dims, time, fields):
    """Write named fields; each value must end with the grid dims."""
    dims = tuple(int(d) for d in dims)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<III", *dims))
        fh.write(struct.pack("<d", float(time)))
        fh.write(struct.pack("<I", len(fields)))
        for name, value in fields.items():
            value = np.ascontiguousarray(value, dtype="<f8")
            if value.shape[-3:] != dims:
                raise ShapeMismatch(f"field {name!r} shape {value.shape} vs dims {dims}")
            ncomp = int(np.prod(value.shape[:-3], dtype=int)) if value.ndim > 3 else 1
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", ncomp))
            fh.write(value.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptHeader(f"truncated while reading {what}")
    return buf


def read_snapshot(path):
    """Read a snapshot; returns (dims, time, {name: array})."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CorruptHeader("bad magic")
        version = struct.unpack("<I", _read_exact(fh, 4, "version"))[0]
        if version != VERSION:
            raise FormatVersionMismatch(
                f"snapshot version {version}, this build reads {VERSION}")
        dims = struct.unpack("<III", _read_exact(fh, 12, "dims"))
        time = struct.unpack("<d", _read_exact(fh, 8, "time"))[0]
        count = struct.unpack("<I", _read_exact(fh, 4, "field count"))[0]
        fields = {}
        npts = int(np.prod(dims))
        for _ in range(count):
            nlen = struct.unpack("<H", _read_exact(fh, 2, "name length"))[0]
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            ncomp = struct.unpack("<I", _read_exact(fh, 4, "component count"))[0]
            raw = _read_exact(fh, 8 * ncomp * npts, f"payload of {name!r}")
            arr = np.frombuffer(raw, dtype="<f8").copy()
            if ncomp == 1:
                fields[name] = arr.reshape(dims)
            elif ncomp == 3:
                fields[name] = arr.reshape((3,) + dims)
            elif ncomp == 9:
                fields[name] = arr.reshape((3, 3) + dims)
            else:
                fields[name] = arr.reshape((ncomp,) + dims)
    return dims, time, fields


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


# --- checkpointing ------------------------------------------------------------------


def save_checkpoint(directory, state, dims):
    """Persist the outer-iteration state bit-exactly (hex floats in the meta)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rho_list = state["rho_list"]
    for k, d in enumerate(rho_list):
        write_snapshot(directory / f"rho_{k:04d}.snap", dims, 0.0, {"rho": d.rho})
    meta = {
        "T": float(state["T"]).hex(),
        "iteration": int(state["iteration"]),
        "count": len(rho_list),
        "a": float(rho_list[0].a).hex(),
        "gamma": float(rho_list[0].gamma).hex(),
        "diffs": [float(x).hex() for x in state.get("diffs", [])],
        "ratios": [float(x).hex() for x in state.get("ratios", [])],
    }
    with open(directory / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)


def load_checkpoint(directory):
    from .transport import DensityField

    directory = Path(directory)
    with open(directory / "meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    a = float.fromhex(meta["a"])
    gamma = float.fromhex(meta["gamma"])
    rho_list = []
    for k in range(meta["count"]):
        _, _, fields = read_snapshot(directory / f"rho_{k:04d}.snap")
        rho_list.append(DensityField(fields["rho"], a, gamma))
    return {
        "T": float.fromhex(meta["T"]),
        "iteration": meta["iteration"],
        "rho_list": rho_list,
        "diffs": [float.fromhex(x) for x in meta["diffs"]],
        "ratios": [float.fromhex(x) for x in meta["ratios"]],
    }
