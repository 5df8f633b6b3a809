"""Deterministic derivation of independent sub-seeds.

Every stochastic component in the package draws from a
``numpy.random.Generator`` seeded through :func:`mix64`, a fixed 64-bit
mixing function built on the splitmix64 finalizer.  Mixing the same
parts always yields the same seed, and distinct part tuples yield
(statistically) independent streams, which is what makes datasets,
experiments, and CLI outputs bit-reproducible.

The mixing rule, spelled out so it can be re-implemented elsewhere:

* integer parts enter as their value modulo 2**64;
* string parts enter as the first 8 bytes (little endian) of their
  BLAKE2b digest;
* parts are folded left to right with
  ``acc = splitmix64(acc XOR (part + 0x9E3779B97F4A7C15))``
  starting from ``acc = splitmix64(len(parts))``.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _part_to_int(part: int | str) -> int:
    if isinstance(part, bool):  # bool is an int subclass; keep it explicit
        return int(part)
    if isinstance(part, int):
        return part & _MASK
    if isinstance(part, str):
        digest = hashlib.blake2b(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")


def mix64(*parts: int | str) -> int:
    """Fold ``parts`` into a single 64-bit seed (see module docstring)."""
    acc = _splitmix64(len(parts))
    for part in parts:
        acc = _splitmix64(acc ^ ((_part_to_int(part) + _GOLDEN) & _MASK))
    return acc


def rng_for(*parts: int | str) -> np.random.Generator:
    """A fresh ``Generator`` seeded from the mixed parts."""
    return np.random.default_rng(mix64(*parts))
