"""Binary checkpoints: a JSON header followed by little-endian float64 data.

Layout::

    b"SAVNCKPT" | uint32 LE header length | UTF-8 JSON header | <f8 values

The header records the config and, per parameter group (``theta``, ``phi``),
each named slice with its offset and shape inside that group.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import ParamVector

MAGIC = b"SAVNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(groups: dict, config: dict | None = None) -> bytes:
    header = {"format": "savn-checkpoint", "version": VERSION, "config": config or {}, "groups": []}
    chunks = []
    offset = 0
    for gname, pv in groups.items():
        header["groups"].append(
            {
                "name": gname,
                "offset": offset,
                "size": pv.size,
                "slices": [
                    {"name": n, "offset": o, "shape": list(s)} for n, (o, s) in pv.slices.items()
                ],
            }
        )
        chunks.append(pv.values.astype("<f8").tobytes())
        offset += pv.size
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(blob)) + blob + b"".join(chunks)


def loads(data: bytes) -> tuple[dict, dict]:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    (n,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    header = json.loads(data[start : start + n].decode("utf-8"))
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    values = np.frombuffer(data[start + n :], dtype="<f8").astype(np.float64)
    groups = {}
    for g in header["groups"]:
        shapes = {s["name"]: tuple(s["shape"]) for s in g["slices"]}
        chunk = values[g["offset"] : g["offset"] + g["size"]]
        if chunk.size != g["size"]:
            raise CheckpointError(f"group {g['name']} is truncated")
        pv = ParamVector(shapes, chunk)
        for s in g["slices"]:
            if pv.slices[s["name"]][0] != s["offset"]:
                raise CheckpointError(f"slice {s['name']} offset mismatch")
        groups[g["name"]] = pv
    return groups, header["config"]


def save(path, groups: dict, config: dict | None = None) -> None:
    Path(path).write_bytes(dumps(groups, config))


def load(path) -> tuple[dict, dict]:
    return loads(Path(path).read_bytes())
