"""Sphere tensor files.

A .stf file is one line of JSON followed by raw float32 little-endian
payloads, concatenated in header declaration order.  The header carries
the array directory (names and shapes) plus free-form metadata such as
grid kind, variable names, and normalization stats.  Every array is
stored as float32 regardless of its in-memory dtype.
"""

import json
from datetime import datetime, timezone

import numpy as np

from .state import VolumetricState

FORMAT_TAG = "stf-1"


def write_stf(path, arrays: dict, meta: dict | None = None) -> None:
    header = {
        "format": FORMAT_TAG,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "meta": dict(meta or {}),
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
    }
    line = json.dumps(header, separators=(",", ":"))
    with open(path, "wb") as f:
        f.write(line.encode("utf-8"))
        f.write(b"\n")
        for v in arrays.values():
            f.write(np.asarray(v, dtype="<f4").tobytes())


def read_stf(path):
    """Return (arrays, header).  Arrays come back float32 in declared shapes."""
    with open(path, "rb") as f:
        line = f.readline()
        payload = f.read()
    header = json.loads(line.decode("utf-8"))
    if header.get("format") != FORMAT_TAG:
        raise ValueError(f"not a sphere tensor file: format {header.get('format')!r}")
    declared = sum(int(np.prod(a["shape"])) for a in header["arrays"])
    if len(payload) != 4 * declared:
        raise ValueError(
            f"payload is {len(payload)} bytes, header declares {4 * declared}"
        )
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arrays[entry["name"]] = (
            np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += 4 * count
    return arrays, header


def write_states(path, states, days, meta: dict | None = None) -> None:
    """Pack a state sequence with its day-of-year tags into one file."""
    states = list(states)
    days = np.asarray(days)
    if len(states) != days.shape[0]:
        raise ValueError("one day-of-year tag per state required")
    arrays = {
        "surface": np.stack([s.surface for s in states]),
        "upper": np.stack([s.upper for s in states]),
        "day_of_year": days.astype(np.float32),
    }
    full_meta = {"grid": "healpix", "n_side": int(np.sqrt(states[0].n_pix // 12))}
    full_meta.update(meta or {})
    write_stf(path, arrays, full_meta)


def read_states(path):
    """Inverse of write_states: (states, days, header)."""
    arrays, header = read_stf(path)
    for key in ("surface", "upper", "day_of_year"):
        if key not in arrays:
            raise ValueError(f"file lacks the '{key}' array")
    states = [
        VolumetricState(s, u) for s, u in zip(arrays["surface"], arrays["upper"])
    ]
    days = arrays["day_of_year"].astype(np.int64)
    return states, days, header
