"""Counter-based deterministic random number generation.

The generator is SplitMix64. Output ``k`` (1-based) of a stream with seed
``s`` is::

    mix64((s + k * 0x9E3779B97F4A7C15) mod 2**64)

where ``mix64`` is the finalizer::

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Because each output depends only on (seed, counter), whole blocks are
produced in one vectorized pass, and the exact sequence can be reproduced
from the rules above in any language. Derived quantities are pinned down
too, so data splits and synthetic datasets are portable across
implementations:

* uniform double: ``u_k = (x_k >> 11) * 2**-53`` in [0, 1)
* normals: Box-Muller pairs ``sqrt(-2 ln(1-u_a)) * (cos, sin)(2 pi u_b)``
  where (u_a, u_b) are consecutive uniform blocks (see ``normal``)
* ``permutation(n)``: stable argsort of the next n raw outputs
* ``split()``: child stream seeded with the next raw output
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """A stateless-core SplitMix64 stream (only a counter advances)."""

    def __init__(self, seed: int):
        self._seed = np.uint64(int(seed) & _MASK64)
        self._count = 0

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs as a uint64 array."""
        ks = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        return _mix64(self._seed + ks * _GOLDEN)

    def next_u64(self) -> int:
        return int(self.raw(1)[0])

    def split(self) -> "SplitMix64":
        """Independent child stream, seeded with the next raw output."""
        return SplitMix64(self.next_u64())

    def random(self, shape=None):
        """Uniform float64 in [0, 1), scalar or array of ``shape``."""
        if shape is None:
            return float(self.raw(1)[0] >> np.uint64(11)) * 2.0**-53
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def normal(self, shape=None):
        """Standard normals via Box-Muller, scalar or array of ``shape``."""
        scalar = shape is None
        shape = (1,) if scalar else ((shape,) if isinstance(shape, int) else tuple(shape))
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u = self.random((2, m))
        r = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1-u in (0,1], no log(0)
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return float(z[0]) if scalar else z.reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform permutation of range(n): stable argsort of n raw keys."""
        return np.argsort(self.raw(n), kind="stable")

    def choice(self, pool: np.ndarray, k: int) -> np.ndarray:
        """``k`` elements of ``pool`` drawn uniformly without replacement."""
        pool = np.asarray(pool)
        if k > pool.shape[0]:
            raise ValueError(f"cannot draw {k} from pool of {pool.shape[0]}")
        return pool[self.permutation(pool.shape[0])[:k]]
