"""MODK binary container: one bit-exact format for datasets and checkpoints.

Layout (all integers little-endian):

    magic "MODK" | version u32 | sections...
    section: name_len u32 | name UTF-8 | dtype u8 | rank u32 | extents u64[rank] | payload

dtype tags: 1 = float64, 2 = int64, 3 = uint8. Text is stored as uint8 UTF-8
payload. Files are written atomically (temp file + rename) so an interrupted
writer never leaves a parseable truncated container.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"MODK"
VERSION = 1

_TAG_TO_DTYPE = {1: "<f8", 2: "<i8", 3: "u1"}
_KIND_TO_TAG = {"f": 1, "i": 2, "u": 3}


class ModkError(ValueError):
    pass


def encode_text(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def decode_text(arr: np.ndarray) -> str:
    return arr.astype(np.uint8).tobytes().decode("utf-8")


def _section_bytes(name: str, arr: np.ndarray) -> bytes:
    tag = _KIND_TO_TAG.get(arr.dtype.kind)
    if tag is None:
        raise ModkError(f"unsupported dtype {arr.dtype} for section {name!r}")
    arr = np.ascontiguousarray(arr, dtype=_TAG_TO_DTYPE[tag])
    name_b = name.encode("utf-8")
    head = struct.pack("<I", len(name_b)) + name_b + struct.pack("<BI", tag, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b""
    return head + arr.tobytes()


def write_modk(path, sections: dict) -> None:
    """Write named arrays in insertion order; the write is atomic."""
    blob = MAGIC + struct.pack("<I", VERSION)
    blob += b"".join(_section_bytes(name, np.asarray(arr)) for name, arr in sections.items())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read_modk(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ModkError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ModkError(f"{path}: unsupported version {version}")
    out = {}
    offset = 8
    while offset < len(blob):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            tag, rank = struct.unpack_from("<BI", blob, offset)
            offset += 5
            shape = struct.unpack_from(f"<{rank}Q", blob, offset)
            offset += 8 * rank
            dtype = np.dtype(_TAG_TO_DTYPE[tag])
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if rank else dtype.itemsize
            payload = blob[offset : offset + nbytes]
            if len(payload) != nbytes:
                raise struct.error("truncated payload")
            offset += nbytes
        except (struct.error, KeyError, UnicodeDecodeError) as exc:
            raise ModkError(f"{path}: corrupt container at byte {offset}: {exc}") from exc
        out[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    return out
