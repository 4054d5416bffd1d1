"""Binary container used by all cache and model files.

Layout: an 8-byte magic tag, a little-endian uint64 header length, a UTF-8
JSON header, then the raw float64 payload arrays (little-endian, C order) in
the order announced by the header's ``arrays`` entry.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ParseError

_MAGIC_LEN = 8


def _pad_magic(magic: str) -> bytes:
    raw = magic.encode("ascii")
    if len(raw) >= _MAGIC_LEN:
        raise ValueError(f"magic tag too long: {magic!r}")
    return raw + b"\x00" * (_MAGIC_LEN - len(raw))


def write_container(path, magic: str, header: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a container file; ``arrays`` order is preserved in the header."""
    header = dict(header)
    header["arrays"] = [
        {"name": name, "shape": list(np.asarray(a).shape)} for name, a in arrays.items()
    ]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_pad_magic(magic))
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path, magic: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container written by :func:`write_container`.

    Raises ParseError when the magic tag does not match or the file is
    truncated.
    """
    with open(path, "rb") as fh:
        tag = fh.read(_MAGIC_LEN)
        if tag != _pad_magic(magic):
            raise ParseError(f"{path}: expected magic {magic!r}, found {tag!r}")
        size_bytes = fh.read(8)
        if len(size_bytes) != 8:
            raise ParseError(f"{path}: truncated header length")
        size = int(np.frombuffer(size_bytes, dtype="<u8")[0])
        blob = fh.read(size)
        if len(blob) != size:
            raise ParseError(f"{path}: truncated header")
        header = json.loads(blob.decode("utf-8"))
        arrays = {}
        for entry in header.pop("arrays", []):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(8 * count)
            if len(data) != 8 * count:
                raise ParseError(f"{path}: truncated payload for {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    return header, arrays
