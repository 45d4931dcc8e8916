"""Counter-based deterministic random numbers.

Every draw is a pure function of (seed, *key parts), so simulation results
never depend on the order in which events happen to consume randomness.
"""

import hashlib
import math

_SCALE = float(2**64)


def counter_uniform(seed: int, *parts) -> float:
    """Uniform float in [0, 1) keyed by (seed, *parts).

    Parts may be ints or strings; the same key always yields the same value,
    on every platform.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big") / _SCALE


def counter_exponential(mean: float, seed: int, *parts) -> float:
    """Exponential variate with the given mean, counter-keyed like counter_uniform."""
    u = counter_uniform(seed, *parts)
    return -mean * math.log1p(-u)


def reflect_unit(x: float) -> float:
    """Reflect a value back into [0, 1] (single bounce, for small steps)."""
    if x < 0.0:
        x = -x
    if x > 1.0:
        x = 2.0 - x
    return min(1.0, max(0.0, x))
