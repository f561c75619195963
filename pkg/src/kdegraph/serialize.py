"""Canonical byte encoding for structure snapshots.

The encoder maps nested plain Python values (ints, floats, bytes, strings,
lists, tuples, dicts) to a unique byte string: containers are length-prefixed,
dict items are emitted in sorted key order, and floats are written as their
raw IEEE-754 bit patterns.  Equal values encode to equal bytes, and any
difference in value or float bits changes the encoding, which is what the
insert-versus-rebuild equality checks hinge on.
"""

from __future__ import annotations

import hashlib
import struct

__all__ = ["encode_canonical", "state_digest"]

_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")
_U32 = struct.Struct("<I")


def _encode(value, out: bytearray) -> None:
    if value is None:
        out += b"n"
    elif value is True or value is False:
        out += b"T" if value else b"F"
    elif isinstance(value, int):
        if -(2**63) <= value < 2**63:
            out += b"i"
            out += _I64.pack(value)
        else:
            raw = value.to_bytes((value.bit_length() + 8) // 8, "little", signed=True)
            out += b"I"
            out += _U32.pack(len(raw))
            out += raw
    elif isinstance(value, float):
        out += b"f"
        out += _F64.pack(value)
    elif isinstance(value, bytes):
        out += b"b"
        out += _U32.pack(len(value))
        out += value
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"s"
        out += _U32.pack(len(raw))
        out += raw
    elif isinstance(value, (list, tuple)):
        out += b"l"
        out += _U32.pack(len(value))
        for item in value:
            _encode(item, out)
    elif isinstance(value, dict):
        out += b"d"
        out += _U32.pack(len(value))
        for key in sorted(value):
            _encode(key, out)
            _encode(value[key], out)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def encode_canonical(value) -> bytes:
    """Unique byte serialization of a nested plain-type value."""
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def state_digest(value) -> str:
    """Hex digest of the canonical encoding; equal states, equal digests."""
    return hashlib.blake2b(encode_canonical(value), digest_size=16).hexdigest()
