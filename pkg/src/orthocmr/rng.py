"""Deterministic seed derivation.

Every random draw in the package flows from a single integer seed through
`derive_seed(seed, *labels)`.  The derivation hashes the seed together with a
sequence of string/int labels (e.g. ``("bench", method, n, rep)``), so
independent tasks get independent streams and execution order (serial or
parallel) cannot change any result.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *labels) -> int:
    """Derive a child seed from ``seed`` and a label path.

    Labels may be strings, ints, floats or tuples thereof; they are encoded
    into a canonical byte string and hashed with SHA-256.  Returns a 64-bit
    integer usable as a numpy/torch seed.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for lab in labels:
        h.update(b"\x1f")
        h.update(repr(lab).encode())
    return int.from_bytes(h.digest()[:8], "little") & _MASK64


def make_rng(seed: int, *labels) -> np.random.Generator:
    """A PCG64 generator seeded from the derived child seed."""
    return np.random.default_rng(derive_seed(seed, *labels))
