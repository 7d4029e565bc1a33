"""Uniform-grid samples of scalar fields in one or two dimensions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def uniform_axis(lo: float, hi: float, h: float) -> np.ndarray:
    """Nodes ``lo + i*h`` up to ``hi`` (rounded to a whole number of cells)."""
    if h <= 0 or hi <= lo:
        raise ValueError("need h > 0 and hi > lo")
    n = int(round((hi - lo) / h))
    return lo + h * np.arange(n + 1)


def trapezoid(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Trapezoid rule on a uniform grid; exact for affine integrands."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    return h * (v.sum(axis=-1) - 0.5 * (v[..., 0] + v[..., -1]))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples ``values`` of a field on a tensor grid built from uniform ``axes``.

    1-D: ``axes = (x,)`` and ``values.shape == (n,)``.
    2-D: ``axes = (x, y)`` and ``values.shape == (nx, ny)`` (``ij`` indexing).
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        if len(axes) not in (1, 2):
            raise ValueError("GridFunction supports 1 or 2 dimensions")
        if values.shape != tuple(len(a) for a in axes):
            raise ValueError(f"values shape {values.shape} does not match axes")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"non-finite values in grid function {self.tag!r}")
        for a in axes:
            if len(a) < 2:
                raise ValueError("each axis needs at least two nodes")
            d = np.diff(a)
            if not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise ValueError("axes must be uniform")
        for arr in (*axes, values):
            arr.flags.writeable = False
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, lo, hi, h, func: Callable, tag: str = "") -> "GridFunction":
        """Sample ``func`` on a uniform grid. For 2-D pass ``lo``/``hi`` as pairs."""
        if np.ndim(lo) == 0:
            x = uniform_axis(lo, hi, h)
            return cls((x,), func(x), tag)
        x = uniform_axis(lo[0], hi[0], h)
        y = uniform_axis(lo[1], hi[1], h)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return cls((x, y), func(X, Y), tag)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def x(self) -> np.ndarray:
        return self.axes[0]

    @property
    def h(self) -> float:
        return float(self.axes[0][1] - self.axes[0][0])

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def with_values(self, values, tag: str | None = None, **meta) -> "GridFunction":
        return GridFunction(self.axes, values, self.tag if tag is None else tag,
                            {**self.meta, **meta})

    def integral(self) -> float:
        v = self.values
        for a in reversed(self.axes):
            v = trapezoid(v, float(a[1] - a[0]))
        return float(v)

    def interp(self, pts: np.ndarray) -> np.ndarray:
        """Linear interpolation with constant continuation of the edge values (1-D)."""
        if self.dim != 1:
            raise ValueError("interp is 1-D only")
        return np.interp(pts, self.x, self.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "GridFunction":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

