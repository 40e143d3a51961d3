"""Stable hashing helpers.

Everything that needs a reproducible pseudo-random draw (sampling tie-breaks,
mock predictions, derived seeds) goes through these functions so results are
identical across processes, machines, and thread schedules.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

_SEP = "\x1f"  # unit separator, cannot appear in the ids we hash


def stable_u64(*parts: object) -> int:
    """64-bit digest of the given parts, independent of process state."""
    payload = _SEP.join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def unit_interval(*parts: object) -> float:
    """Deterministic draw in [0, 1) keyed by the given parts."""
    return stable_u64(*parts) / 2.0**64


def derive_seed(master: int, stream: str) -> int:
    """Per-stage seed derived from one master seed; independent streams."""
    return stable_u64(master, "seed", stream) % 2**63


def canonical_json(obj: object) -> str:
    """Key-sorted, whitespace-free JSON; the byte form used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
