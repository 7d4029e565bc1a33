"""Seeded Brownian path ensembles on uniform time grids.

Normals come from a counter-based Philox stream keyed by the seed, with the
path index, step count and dimension in the counter words.  Path ``m`` is
therefore reproducible on its own, independent of generation order and of
the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import parallel
from .errors import DimensionError, RangeError

_MASK64 = (1 << 64) - 1


def _path_normals(seed: int, m: int, n_steps: int, d: int) -> np.ndarray:
    gen = np.random.Philox(key=seed & _MASK64, counter=[0, m, n_steps, d])
    raw = gen.random_raw(n_steps * d)
    # top 53 bits, shifted to the open interval (0, 1)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(n_steps, d)


@dataclass(frozen=True, eq=False)
class BrownianEnsemble:
    """``M`` Brownian paths of ``N`` steps on ``[0, T]``.

    ``increments`` has shape ``(M, N)`` in 1-D and ``(M, N, 2)`` in 2-D.
    ``seed`` is ``None`` for a deterministic (zero-noise) ensemble.
    """

    M: int
    N: int
    T: float
    seed: int | None
    d: int
    increments: np.ndarray

    def __post_init__(self):
        self.increments.flags.writeable = False

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.N + 1)

    @property
    def B(self) -> np.ndarray:
        """Partial sums, ``B[:, 0] == 0``; shape ``(M, N + 1[, 2])``."""
        zero = np.zeros((self.M, 1) + self.increments.shape[2:])
        return np.concatenate([zero, np.cumsum(self.increments, axis=1)], axis=1)

    def time_index(self, t: float) -> int:
        """Step index of time ``t``; ``t`` must sit on the grid."""
        n = int(round(t / self.dt))
        if not 0 <= n <= self.N or abs(n * self.dt - t) > 1e-9 * max(1.0, self.T):
            raise RangeError(f"t={t:g} is not a grid time of dt={self.dt:g}, T={self.T:g}")
        return n

    def take(self, paths) -> "BrownianEnsemble":
        """Sub-ensemble of the selected path indices (same noise)."""
        inc = self.increments[np.atleast_1d(paths)]
        return BrownianEnsemble(len(inc), self.N, self.T, self.seed, self.d, np.array(inc))

    def coarsen(self, factor: int) -> "BrownianEnsemble":
        """Ensemble on a grid ``factor`` times coarser; increments are exact sums."""
        if factor < 1 or self.N % factor:
            raise RangeError(f"cannot coarsen N={self.N} by {factor}")
        shape = (self.M, self.N // factor, factor) + self.increments.shape[2:]
        inc = self.increments.reshape(shape).sum(axis=2)
        return BrownianEnsemble(self.M, self.N // factor, self.T, self.seed, self.d, inc)

    @classmethod
    def deterministic(cls, M: int, N: int, T: float, d: int = 1) -> "BrownianEnsemble":
        """All-zero increments: isolates the drift part of a flow."""
        shape = (M, N) if d == 1 else (M, N, d)
        return cls(M, N, T, None, d, np.zeros(shape))


def sample_brownian(M: int, N: int, T: float, seed: int, d: int = 1) -> BrownianEnsemble:
    """Gaussian increments with variance ``T/N`` per coordinate."""
    if d not in (1, 2):
        raise DimensionError(f"unsupported dimension d={d}")
    if M < 1 or N < 1 or not T > 0:
        raise RangeError("need M >= 1, N >= 1, T > 0")
    sd = np.sqrt(T / N)
    inc = np.empty((M, N, d))

    def fill(lo, hi):
        for m in range(lo, hi):
            inc[m] = sd * _path_normals(seed, m, N, d)

    parallel.map_chunks(fill, M)
    return BrownianEnsemble(M, N, T, seed, d, np.ascontiguousarray(inc[..., 0]) if d == 1 else inc)
