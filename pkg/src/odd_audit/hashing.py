"""Deterministic hashing helpers: seed derivation and content fingerprints.

Every seed that feeds a random number generator anywhere in the package is
derived from content (never from scheduling order), so results are
reproducible regardless of worker count or submission order.
"""
from __future__ import annotations

import hashlib
import json

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _frame(part: int | str | bytes) -> bytes:
    # Length-prefixed framing so ("ab", "c") and ("a", "bc") hash differently.
    if isinstance(part, bool):
        raise TypeError("bool is not a valid seed part")
    if isinstance(part, int):
        raw = b"i" + str(part).encode("ascii")
    elif isinstance(part, str):
        raw = b"s" + part.encode("utf-8")
    elif isinstance(part, bytes):
        raw = b"b" + part
    else:
        raise TypeError(f"unsupported seed part type: {type(part).__name__}")
    return len(raw).to_bytes(8, "big") + raw


def derive_seed(*parts: int | str | bytes) -> int:
    """Fold an ordered tuple of parts into one unsigned 64-bit seed."""
    buf = b"".join(_frame(p) for p in parts)
    return fnv1a64(buf)


def canonical_json(obj) -> str:
    """Stable JSON text: sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def fingerprint(obj) -> str:
    """SHA-256 over the canonical JSON form of a plain-data object."""
    return sha256_hex(canonical_json(obj))
