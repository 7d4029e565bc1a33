"""Mollification commutators and their decay as the kernel width shrinks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, SpdeCharError, SweepError
from .field import MollifierKernel, mollify
from .grid import GridFunction, trapezoid


def _grad(g: GridFunction, axis: int) -> np.ndarray:
    """Central differences, one-sided second order at the edges.

    The edge stencils are written in differences so a constant gives exactly 0.
    """
    h = float(g.axes[axis][1] - g.axes[axis][0])
    v = np.moveaxis(g.values, axis, 0)
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    d[0] = (4 * (v[1] - v[0]) - (v[2] - v[0])) / (2 * h)
    d[-1] = ((v[-3] - v[-1]) - 4 * (v[-2] - v[-1])) / (2 * h)
    return np.moveaxis(d, 0, axis)


def _components(f) -> tuple[GridFunction, ...]:
    return (f,) if isinstance(f, GridFunction) else tuple(f)


def commutator_lebris_lions(f, g: GridFunction, kernel: MollifierKernel,
                            dg=None) -> GridFunction:
    """``R_eps(f, g) = (f . grad)(rho_eps * g) - rho_eps * (f . grad g)``.

    ``f`` is a GridFunction in 1-D or a pair of component GridFunctions in
    2-D.  Gradients are central differences unless ``dg`` (the gradient of
    ``g``, one GridFunction per coordinate) is supplied; then
    ``grad(rho * g)`` is taken as ``rho * dg``.
    """
    fs = _components(f)
    if len(fs) != g.dim:
        raise ValueError(f"field has {len(fs)} components for a {g.dim}-D function")
    dgs = [g.with_values(_grad(g, i)) for i in range(g.dim)] if dg is None else _components(dg)
    if dg is None:
        ge = mollify(g, kernel)
        dge = [_grad(ge, i) for i in range(g.dim)]
    else:
        dge = [mollify(d, kernel).values for d in dgs]
    first = sum(fi.values * d for fi, d in zip(fs, dge))
    inner = sum(fi.values * d.values for fi, d in zip(fs, dgs))
    second = mollify(g.with_values(inner), kernel).values
    return g.with_values(first - second, tag="R")


def commutator_primitive(b: GridFunction, V: GridFunction, kernel: MollifierKernel,
                         dV: GridFunction | None = None) -> GridFunction:
    """``R_eps(V, b) = b_eps dV_eps - rho_eps * (b dV)`` (1-D): both ``b`` and
    ``V`` are mollified in the first term."""
    if b.dim != 1 or V.dim != 1:
        raise ValueError("commutator_primitive is 1-D only")
    be = mollify(b, kernel).values
    if dV is None:
        dV = V.with_values(_grad(V, 0))
        dVe = _grad(mollify(V, kernel), 0)
    else:
        dVe = mollify(dV, kernel).values
    second = mollify(V.with_values(b.values * dV.values), kernel).values
    return V.with_values(be * dVe - second, tag="R")


def window_norm(r: GridFunction, window=(-2.0, 2.0), kind: str = "L2") -> float:
    """``L1`` or ``L2`` norm of a 1-D grid function restricted to ``window``."""
    if r.dim != 1:
        raise ValueError("window norms are 1-D")
    x = r.x
    sel = (x >= window[0] - 1e-12) & (x <= window[1] + 1e-12)
    v = r.values[sel]
    if kind == "L1":
        return float(trapezoid(np.abs(v), r.h))
    if kind == "L2":
        return float(np.sqrt(trapezoid(v * v, r.h)))
    raise ValueError(f"unknown norm kind {kind!r}; valid: L1, L2")


def _slope(eps, norms) -> float:
    e, n = np.asarray(eps, float), np.asarray(norms, float)
    if len(e) < 2 or np.any(n <= 0):
        return float("nan")
    return float(np.polyfit(np.log(e), np.log(n), 1)[0])


@dataclass(frozen=True)
class DecayCurve:
    """Window norms of a commutator over a decreasing sweep of ``eps``."""

    eps: tuple[float, ...]
    norms: tuple[float, ...]
    norm_kind: str = "L2"
    window: tuple[float, float] = (-2.0, 2.0)

    def __post_init__(self):
        if len(self.eps) != len(self.norms):
            raise ValueError("eps and norms differ in length")
        if np.any(np.diff(self.eps) >= 0):
            raise ValueError("eps must be strictly decreasing")
        if np.any(np.asarray(self.norms) < 0):
            raise ValueError("norms must be nonnegative")

    @property
    def slope(self) -> float:
        """Least-squares slope of ``log norm`` against ``log eps``."""
        return _slope(self.eps, self.norms)

    def rows(self) -> list[tuple[float, float, float]]:
        """``(epsilon, norm, slope_so_far)`` per sweep entry."""
        return [(e, n, _slope(self.eps[:i + 1], self.norms[:i + 1]))
                for i, (e, n) in enumerate(zip(self.eps, self.norms))]

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.norms) < 0))


def decay_curve(pair_builder: Callable[[float], Sequence], eps_list: Sequence[float],
                norm_kind: str = "L2", window=(-2.0, 2.0), *,
                variant: str = "lebris_lions", shape: str = "poly") -> DecayCurve:
    """Evaluate a commutator for each ``eps`` and collect window norms.

    ``pair_builder(eps)`` returns ``(f, g)`` or ``(f, g, dg)``: the field and
    the function for ``variant="lebris_lions"``, or ``(b, V[, dV])`` for
    ``variant="primitive"``.  The window must stay ``2 eps`` away from the
    grid edge.
    """
    if variant not in ("lebris_lions", "primitive"):
        raise ValueError("variant must be 'lebris_lions' or 'primitive'")
    eps_list = [float(e) for e in eps_list]
    if np.any(np.diff(eps_list) >= 0):
        raise ValueError("eps_list must be strictly decreasing")
    norms = []
    for eps in eps_list:
        try:
            parts = tuple(pair_builder(eps))
            g = parts[1]
            if g.x[0] > window[0] - 2 * eps or g.x[-1] < window[1] + 2 * eps:
                raise DomainError(f"window {window} closer than 2 eps to the grid edge")
            kernel = MollifierKernel(eps, shape)
            op = commutator_lebris_lions if variant == "lebris_lions" else commutator_primitive
            r = op(parts[0], g, kernel, parts[2] if len(parts) > 2 else None)
            norms.append(window_norm(r, window, norm_kind))
        except (SpdeCharError, ValueError) as exc:
            raise SweepError(eps, exc) from exc
    return DecayCurve(tuple(eps_list), tuple(norms), norm_kind, tuple(window))
