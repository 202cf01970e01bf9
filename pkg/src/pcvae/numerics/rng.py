"""Seeded random generation with an exactly specified algorithm.

The generator is counter-based so that it vectorizes and so that streams are
reproducible from ``(seed, counter)`` alone:

    u64(k) = mix64(key + (k + 1) * GAMMA)   (all arithmetic mod 2**64)

where ``mix64`` is the SplitMix64 finalizer (xor-shift/multiply avalanche) and
GAMMA is the 64-bit golden-ratio increment.  Gaussian variates come from the
Box-Muller transform applied to consecutive pairs of uniforms; an odd request
still consumes a whole pair, so the counter always advances by an even amount.

Child generators are derived by hashing the parent key together with a child
index under a second increment constant, which keeps parent and child streams
decoupled.  The integer pipeline is platform-independent by construction; the
float transform relies on IEEE-754 doubles and a faithfully rounded libm
(log/cos/sin), which is what every mainstream platform provides.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SPLIT_GAMMA = np.uint64(0xD1B54A32D192ED03)
_SPLIT_XOR = np.uint64(0xA3EC647659359ACD)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# (u >> 11) has 53 random bits; +1 shifts the range to (0, 1], which keeps
# log(u) finite in the Box-Muller transform.
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


def _mix64(x: np.ndarray) -> np.ndarray:
    # wraparound mod 2**64 is the point; silence the scalar-overflow warning
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


class Rng:
    """Deterministic stream of 64-bit words, uniforms, and normals."""

    def __init__(self, seed: int, *, _key: int | None = None, _counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = np.uint64(self.seed if _key is None else _key)
        self._counter = int(_counter)

    def next_u64(self, n: int) -> np.ndarray:
        """Next ``n`` words of the stream; advances the counter by ``n``."""
        if n < 0:
            raise DimensionError(f"cannot draw {n} words")
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(self._key + idx * _GAMMA)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on (0, 1]."""
        bits = self.next_u64(n)
        return ((bits >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _TO_UNIT

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws with the given shape (Box-Muller, row-major)."""
        shape = (shape,) if np.isscalar(shape) else tuple(int(s) for s in shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n].reshape(shape)

    def split(self, index: int) -> "Rng":
        """Independent child generator number ``index`` (deterministic)."""
        if index < 0:
            raise DimensionError(f"child index must be nonnegative, got {index}")
        with np.errstate(over="ignore"):
            child_key = _mix64(
                (self._key ^ _SPLIT_XOR) + (np.uint64(index) + np.uint64(1)) * _SPLIT_GAMMA
            )
        return Rng(self.seed, _key=int(child_key), _counter=0)


def gaussian_matrix(rows: int, cols: int, rng: Rng) -> np.ndarray:
    """rows x cols matrix of i.i.d. standard normal draws from ``rng``."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"matrix extents must be positive, got {rows}x{cols}")
    return rng.normal((rows, cols))
