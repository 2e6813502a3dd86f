"""JSON/CSV file formats.

Shapes:   {"kind": "polygon", "vertices": [[x, y], ...]}
          {"kind": "tension", "dim": n, "samples": [{"dir": [...], "value": v}, ...]}
Sets:     {"kind": "polygon", "loops": [[[x, y], ...], ...]}
          {"kind": "voxels", "dim": n, "h": h, "origin": [...], "dims": [...], "data": "..."}

Voxel ``data`` is the C-order occupancy bitstring packed big-endian within
bytes, run-length encoded as (count, byte) pairs with count in 1..255, and
base64 encoded.
"""

from __future__ import annotations

import base64
import json
import math

import numpy as np

from .anisotropy import TensionSpec, WulffShape, normalize_shape, polygon_shape, wulff_from_tension
from .errors import InvalidInput
from .geomset import GeomSet


# -- voxel bitstrings -----------------------------------------------------------

def encode_bits(mask) -> str:
    raw = np.packbits(np.asarray(mask, dtype=bool).ravel(), bitorder="big").tobytes()
    out = bytearray()
    i = 0
    while i < len(raw):
        j = i
        while j < len(raw) and raw[j] == raw[i] and j - i < 255:
            j += 1
        out += bytes((j - i, raw[i]))
        i = j
    return base64.b64encode(bytes(out)).decode("ascii")


def decode_bits(data: str, dims) -> np.ndarray:
    try:
        rle = base64.b64decode(data.encode("ascii"), validate=True)
    except (ValueError, UnicodeEncodeError) as exc:
        raise InvalidInput(f"voxel data is not base64: {exc}") from None
    if len(rle) % 2:
        raise InvalidInput("voxel data has an odd number of RLE bytes")
    pairs = np.frombuffer(rle, dtype=np.uint8).reshape(-1, 2)
    if np.any(pairs[:, 0] == 0):
        raise InvalidInput("voxel data has a zero-length run")
    raw = np.repeat(pairs[:, 1], pairs[:, 0])
    size = int(np.prod(dims))
    bits = np.unpackbits(raw, bitorder="big")
    if len(bits) < size or len(bits) - size >= 8:
        raise InvalidInput(f"voxel data holds {len(bits)} bits for {size} cells")
    return bits[:size].astype(bool).reshape(tuple(int(d) for d in dims))


# -- shapes and sets ------------------------------------------------------------------

def shape_to_json(K: WulffShape) -> dict:
    return {"kind": "polygon", "vertices": K.vertices.tolist()}


def tension_from_json(d: dict) -> TensionSpec:
    try:
        samples = d["samples"]
        dirs = [s["dir"] for s in samples]
        vals = [s["value"] for s in samples]
        return TensionSpec(np.array(dirs, dtype=float), np.array(vals, dtype=float), int(d["dim"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"malformed tension: {exc}") from None


def shape_from_json(d: dict, allow_offset: bool = False) -> WulffShape:
    """Polygon shapes are used as given; tensions become normalized Wulff shapes."""
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "polygon":
        try:
            return polygon_shape(np.array(d["vertices"], dtype=float), allow_offset)
        except (KeyError, ValueError) as exc:
            raise InvalidInput(f"malformed polygon shape: {exc}") from None
    if kind == "tension":
        return normalize_shape(wulff_from_tension(tension_from_json(d)))
    raise InvalidInput(f"unknown shape kind {kind!r}")


def geomset_to_json(E: GeomSet) -> dict:
    if E.is_polygon:
        return {"kind": "polygon", "loops": [lp.tolist() for lp in E.loops]}
    vx = E.voxels
    return {"kind": "voxels", "dim": E.dim, "h": vx.h, "origin": vx.origin.tolist(),
            "dims": list(vx.dims), "data": encode_bits(vx.mask)}


def geomset_from_json(d: dict) -> GeomSet:
    kind = d.get("kind") if isinstance(d, dict) else None
    try:
        if kind == "polygon":
            if "loops" in d:
                return GeomSet.polygon(*d["loops"])
            return GeomSet.polygon(d["vertices"])
        if kind == "voxels":
            mask = decode_bits(d["data"], d["dims"])
            if mask.ndim != int(d["dim"]):
                raise InvalidInput("voxel dims disagree with dim")
            return GeomSet.from_voxels(mask, float(d["h"]), d.get("origin"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise InvalidInput(f"malformed set: {exc}") from None
    raise InvalidInput(f"unknown set kind {kind!r}")


# -- json io -------------------------------------------------------------------------

def clean(obj):
    """Make obj strict-JSON: numpy to python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=1, allow_nan=False) + "\n"


def dump(obj, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc})") from None


def load_shape(path) -> WulffShape:
    return shape_from_json(load(path))


def load_geomset(path) -> GeomSet:
    return geomset_from_json(load(path))
