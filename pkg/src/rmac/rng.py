"""Deterministic random substreams.

Every piece of randomness in the package flows through :func:`substream`,
which derives an independent generator from a 64-bit base seed and a path of
integer/string keys (for example ``substream(seed, "select", player, t)``).
The stream is "blake2b-philox-v1": the key path is hashed with BLAKE2b into a
128-bit Philox key, so streams are platform independent, reproducible across
processes, and independent of evaluation order.

Consumers should draw only ``Generator.random()`` doubles and derive anything
else (categorical draws, tie breaks) from those, which keeps us off numpy
methods whose sampling algorithms have historically changed between releases.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

GENERATOR_NAME = "blake2b-philox-v1"

_MASK64 = (1 << 64) - 1


def _encode(part: int | str) -> bytes:
    if isinstance(part, str):
        raw = part.encode("utf-8")
        return b"s" + struct.pack("<Q", len(raw)) + raw
    if isinstance(part, (int, np.integer)):
        return b"i" + struct.pack("<Q", int(part) & _MASK64)
    raise TypeError(f"substream path parts must be int or str, got {type(part).__name__}")


def substream(seed: int, *path: int | str) -> np.random.Generator:
    """Return the independent generator keyed by ``(seed, *path)``."""
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", int(seed) & _MASK64))
    for part in path:
        h.update(_encode(part))
    k0, k1 = struct.unpack("<QQ", h.digest())
    key = np.array([k0, k1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def tie_u01(seed: int, *path: int | str) -> float:
    """One deterministic uniform in [0, 1) keyed by ``(seed, *path)``.

    Cheaper than building a full generator; used for single-draw tie breaks.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(seed) & _MASK64))
    for part in path:
        h.update(_encode(part))
    return struct.unpack("<Q", h.digest())[0] / 2.0**64


def derive_seed(seed: int, *path: int | str) -> int:
    """A stable 63-bit integer seed derived from ``(seed, *path)``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", int(seed) & _MASK64))
    for part in path:
        h.update(_encode(part))
    return struct.unpack("<Q", h.digest())[0] >> 1


def uniform_index(rng: np.random.Generator, n: int) -> int:
    """Uniform draw from range(n) using only raw doubles."""
    if n <= 0:
        raise ValueError("uniform_index needs n >= 1")
    idx = int(rng.random() * n)
    return min(idx, n - 1)


def categorical(rng: np.random.Generator, cdf: np.ndarray, size: int) -> np.ndarray:
    """Inverse-CDF draws of ``size`` indices given a cumulative weight vector."""
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)
