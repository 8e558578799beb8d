"""SpectralField dump formats (pure functions, no file I/O).

JSON::

    {"d": 2, "kmax": 4, "coeffs": [[re, im], ...]}   # row-major lattice order

Binary::

    b"FLSF1" | u32 d | u32 kmax | (f64 re, f64 im) * (2*kmax+1)^d   # little-endian
"""

import json
import struct
from typing import Any

import numpy as np

from fluctlab._exceptions import ShapeError
from fluctlab.spectral import SpectralField, lattice_shape

MAGIC = b"FLSF1"
_HEADER = struct.Struct("<II")


def field_to_json(field: SpectralField) -> str:
    return json.dumps(field.to_dict(), separators=(",", ":"))


def field_from_dict(data: dict[str, Any]) -> SpectralField:
    d = int(data["d"])
    kmax = int(data["kmax"])
    pairs = np.asarray(data["coeffs"], dtype=np.float64)
    shape = lattice_shape(d, kmax)
    if pairs.shape != (int(np.prod(shape)), 2):
        raise ShapeError(f"dump holds {pairs.shape[0]} coefficients, lattice needs {np.prod(shape)}")
    coeffs = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(shape)
    return SpectralField(d, kmax, coeffs)


def field_from_json(content: str) -> SpectralField:
    return field_from_dict(json.loads(content))


def field_to_bytes(field: SpectralField) -> bytes:
    body = np.ascontiguousarray(field.coeffs.ravel(order="C"), dtype="<c16").tobytes()
    return MAGIC + _HEADER.pack(field.d, field.kmax) + body


def field_from_bytes(blob: bytes) -> SpectralField:
    if not blob.startswith(MAGIC):
        raise ShapeError("not a FLSF1 field dump")
    offset = len(MAGIC)
    d, kmax = _HEADER.unpack_from(blob, offset)
    body = np.frombuffer(blob, dtype="<c16", offset=offset + _HEADER.size)
    shape = lattice_shape(d, kmax)
    if body.size != int(np.prod(shape)):
        raise ShapeError(f"dump holds {body.size} coefficients, lattice needs {np.prod(shape)}")
    return SpectralField(d, kmax, body.reshape(shape).astype(np.complex128))
