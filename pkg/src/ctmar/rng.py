"""Counter-based random streams.

Every draw is a pure function of an integer key tuple, so results do not
depend on evaluation order or on how work is split across threads.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(h):
    # splitmix64 finalizer
    h = h ^ (h >> np.uint64(30))
    h = h * _M1
    h = h ^ (h >> np.uint64(27))
    h = h * _M2
    return h ^ (h >> np.uint64(31))


def hash_keys(*keys):
    """Hash broadcastable integer key arrays into uint64 words."""
    arrays = np.broadcast_arrays(*[np.asarray(k).astype(np.uint64) for k in keys])
    with np.errstate(over="ignore"):
        h = np.zeros(arrays[0].shape, dtype=np.uint64)
        for k in arrays:
            h = _mix(h + _GOLDEN + k)
    return h


def uniform(*keys):
    """Uniform deviates on the open interval (0, 1), one per key."""
    h = hash_keys(*keys)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normal(*keys):
    """Standard normal deviates via Box-Muller on two derived streams."""
    u1 = uniform(*keys, 0)
    u2 = uniform(*keys, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
