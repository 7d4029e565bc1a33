"""Velocity fields, mollifiers, cut-offs and the structural hypotheses on drifts."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import convolve1d
from scipy.special import expit

from .errors import DomainError, EvaluationError, RangeError, ResolutionError
from .grid import GridFunction, uniform_axis


@dataclass(frozen=True, eq=False)
class DriftField:
    """Time-independent velocity field ``b``.

    ``func`` maps positions to velocities: in 1-D any array shape to the same
    shape, in 2-D ``(..., 2) -> (..., 2)``.  ``deriv`` is ``b'`` in 1-D and
    the Jacobian ``Db`` with shape ``(..., 2, 2)`` in 2-D; when it is missing,
    central differences with step ``fd_step`` are used.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    deriv: Callable[[np.ndarray], np.ndarray] | None = None
    k: float | None = None
    divergence_free: bool = False
    lipschitz: float | None = None
    name: str = ""
    fd_step: float = 1e-5

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.deriv is not None:
            return self.deriv(x)
        s = self.fd_step
        if self.dim == 1:
            return (self.func(x + s) - self.func(x - s)) / (2 * s)
        cols = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = s
            cols.append((self.func(x + e) - self.func(x - e)) / (2 * s))
        return np.stack(cols, axis=-1)

    def divergence(self, x):
        d = self.derivative(x)
        return d if self.dim == 1 else d[..., 0, 0] + d[..., 1, 1]

    @classmethod
    def from_grid(cls, g: GridFunction, *, k: float | None = None, name: str = "") -> "DriftField":
        """1-D field given by samples; linear interpolation, constant continuation."""
        if g.dim != 1:
            raise ValueError("grid-sampled drifts are 1-D only")
        xs, vs = g.x, g.values
        dv = np.gradient(vs, g.h)
        lip = float(np.max(np.abs(dv)))
        return cls(
            func=lambda x: np.interp(x, xs, vs),
            deriv=lambda x: np.interp(x, xs, dv),
            k=k,
            lipschitz=lip,
            name=name or g.tag,
        )


def zero(dim: int = 1) -> DriftField:
    if dim == 1:
        return DriftField(np.zeros_like, deriv=np.zeros_like, k=0.0, lipschitz=0.0, name="zero")
    return DriftField(np.zeros_like, dim=2, deriv=lambda x: np.zeros(x.shape + (2,)),
                      k=0.0, divergence_free=True, lipschitz=0.0, name="zero2")


def linear(a: float) -> DriftField:
    return DriftField(lambda x: a * x, deriv=lambda x: np.full_like(x, a),
                      k=abs(a), lipschitz=abs(a), name=f"linear({a:g})")


def ou() -> DriftField:
    f = linear(-1.0)
    return DriftField(f.func, deriv=f.deriv, k=1.0, lipschitz=1.0, name="ou")


def constant(c: float) -> DriftField:
    return DriftField(lambda x: np.full_like(x, c), deriv=np.zeros_like,
                      k=abs(c), lipschitz=0.0, name=f"constant({c:g})")


def tanh(k: float) -> DriftField:
    return DriftField(lambda x: k * np.tanh(x), deriv=lambda x: k / np.cosh(x) ** 2,
                      k=abs(k), lipschitz=abs(k), name=f"tanh({k:g})")


def rotation() -> DriftField:
    jac = np.array([[0.0, -1.0], [1.0, 0.0]])

    def func(x):
        return np.stack([-x[..., 1], x[..., 0]], axis=-1)

    return DriftField(func, dim=2, deriv=lambda x: np.broadcast_to(jac, x.shape + (2,)).copy(),
                      k=1.0, divergence_free=True, lipschitz=1.0, name="rotation")


def holder(alpha: float, scale: float = 1.0) -> DriftField:
    """``scale * |x|**alpha * sign(x)``; Hölder-continuous, not Lipschitz at 0."""
    if not 0 < alpha < 1:
        raise RangeError("holder exponent must lie in (0, 1)")
    return DriftField(lambda x: scale * np.abs(x) ** alpha * np.sign(x),
                      k=abs(scale), name=f"holder({alpha:g},{scale:g})")


_DRIFTS = {
    "zero": (zero, 0),
    "linear": (linear, 1),
    "ou": (ou, 0),
    "constant": (constant, 1),
    "tanh": (tanh, 1),
    "rotation": (rotation, 0),
    "holder": (holder, (1, 2)),
}

_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(([^)]*)\))?\s*$")


def parse_spec(text: str) -> tuple[str, list[float]]:
    """Split ``name(a, b)`` into ``("name", [a, b])``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"malformed spec {text!r}")
    args = [float(a) for a in m.group(2).split(",")] if m.group(2) else []
    return m.group(1), args


def drift_from_spec(text: str) -> DriftField:
    """Named drift family, e.g. ``zero``, ``linear(2)``, ``tanh(0.01)``, ``holder(0.5,0.01)``."""
    name, args = parse_spec(text)
    if name not in _DRIFTS:
        raise ValueError(f"unknown drift {name!r}; valid: {', '.join(_DRIFTS)}")
    fn, arity = _DRIFTS[name]
    allowed = arity if isinstance(arity, tuple) else (arity,)
    if len(args) not in allowed:
        raise ValueError(f"drift {name!r} takes {arity} argument(s), got {len(args)}")
    return fn(*args)


# --- structural hypotheses -------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    holds: bool
    worst_ratio: float
    argmax: np.ndarray | float


def verify_linear_growth(b: DriftField, sample_points, k: float) -> GrowthReport:
    """Check ``|b(x)| <= k (1 + |x|)`` on the given positions."""
    pts = np.asarray(sample_points, dtype=float)
    if pts.size == 0:
        raise ValueError("sample_points must be non-empty")
    if b.dim == 2:
        pts = pts.reshape(-1, 2)
        vals = b(pts)
        bad = ~np.all(np.isfinite(vals), axis=-1)
        mag, r = np.linalg.norm(vals, axis=-1), np.linalg.norm(pts, axis=-1)
    else:
        pts = pts.ravel()
        vals = b(pts)
        bad = ~np.isfinite(vals)
        mag, r = np.abs(vals), np.abs(pts)
    if bad.any():
        raise EvaluationError(f"non-finite drift value at x={pts[np.argmax(bad)]}")
    ratio = mag / (1.0 + r)
    i = int(np.argmax(ratio))
    worst = float(ratio[i])
    return GrowthReport(worst <= k, worst, pts[i] if b.dim == 2 else float(pts[i]))


@dataclass(frozen=True)
class LpsQuery:
    p: float
    q: float
    d: int = 1


@dataclass(frozen=True)
class LpsResult:
    value: float
    satisfied: bool


def lps_exponent(qry: LpsQuery) -> LpsResult:
    """Integrability exponent ``d/p + 2/q``; the condition holds when it is < 1."""
    if qry.p < 2 or qry.q < 2:
        raise RangeError("p and q must lie in [2, inf)")
    v = qry.d / qry.p + 2.0 / qry.q
    return LpsResult(v, v < 1.0)


# --- mollifiers -------------------------------------------------------------

_SHAPES = {
    # normalized profile on [-1, 1] and its second moment
    "poly": (lambda z: 315.0 / 256.0 * (1 - z * z) ** 4, 1.0 / 11.0),
    "cosine": (lambda z: 0.5 * (1 + np.cos(np.pi * z)), 1.0 / 3.0 - 2.0 / np.pi**2),
}


@dataclass(frozen=True)
class MollifierKernel:
    """Symmetric compactly supported probability kernel of half-width ``eps``.

    The default ``poly`` profile is ``(315/256) (1 - z^2)^4``, whose second
    moment on ``[-1, 1]`` is exactly ``1/11``.
    """

    eps: float
    shape: str = "poly"

    def __post_init__(self):
        if self.eps <= 0:
            raise RangeError("mollifier width must be positive")
        if self.shape not in _SHAPES:
            raise ValueError(f"unknown kernel shape {self.shape!r}")

    def profile(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(np.abs(z) < 1, _SHAPES[self.shape][0](np.clip(z, -1, 1)), 0.0)

    def __call__(self, x):
        return self.profile(np.asarray(x) / self.eps) / self.eps

    @property
    def m2(self) -> float:
        """Second moment of the unit-width profile."""
        return _SHAPES[self.shape][1]

    def weights(self, h: float) -> np.ndarray:
        """Sampled kernel on a grid of spacing ``h``, renormalized to unit sum."""
        if h > self.eps / 4:
            raise ResolutionError(
                f"grid spacing {h:g} exceeds eps/4 = {self.eps / 4:g}; kernel unresolved")
        r = int(np.floor(self.eps / h))
        w = self.profile(np.arange(-r, r + 1) * h / self.eps)
        return w / w.sum()


def mollify(f: GridFunction, kernel: MollifierKernel) -> GridFunction:
    """Discrete convolution ``rho_eps * f`` with edge-value continuation.

    In 2-D the tensor-product kernel ``rho(z1) rho(z2)`` is used.
    """
    w = kernel.weights(f.h)
    v = f.values
    for ax in range(f.dim):
        v = convolve1d(v, w, axis=ax, mode="nearest")
    return f.with_values(v, tag=f"{f.tag}_eps" if f.tag else "")


# --- cut-offs ---------------------------------------------------------------

def _eta_parts(r):
    """Base cut-off ``eta`` of the radius with its first two radial derivatives."""
    r = np.asarray(r, dtype=float)
    inner, outer = r <= 1, r >= 2
    mid = ~(inner | outer)
    rm = np.where(mid, r, 1.5)
    a, c = 2.0 - rm, rm - 1.0
    q = 1 / a - 1 / c
    q1 = 1 / a**2 + 1 / c**2
    q2 = 2 / a**3 - 2 / c**3
    e = expit(-q)
    e1 = -e * (1 - e) * q1
    e2 = -(e1 * (1 - 2 * e) * q1 + e * (1 - e) * q2)
    eta = np.where(inner, 1.0, np.where(outer, 0.0, e))
    d1 = np.where(mid, e1, 0.0)
    d2 = np.where(mid, e2, 0.0)
    return eta, d1, d2


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cut-off ``eta_R(x) = eta(|x| / R)``: 1 on ``|x| <= R``, 0 on ``|x| >= 2R``."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise RangeError("cut-off radius must be positive")

    def __call__(self, x, *more):
        r = np.abs(x) if not more else np.sqrt(np.square(x) + sum(np.square(m) for m in more))
        return _eta_parts(r / self.radius)[0]

    def derivatives(self, x):
        """1-D values, first and second derivatives of ``eta_R`` at ``x``."""
        x = np.asarray(x, dtype=float)
        R = self.radius
        e, d1, d2 = _eta_parts(np.abs(x) / R)
        s = np.sign(x)
        return e, s * d1 / R, d2 / R**2


def compose_cutoff(f: GridFunction, cut: CutoffSpec) -> GridFunction:
    """Pointwise product ``eta_R * f``; the grid must cover ``[-2R, 2R]``."""
    for a in f.axes:
        if a[0] > -2 * cut.radius or a[-1] < 2 * cut.radius:
            raise DomainError(
                f"grid [{a[0]:g}, {a[-1]:g}] does not cover [-{2 * cut.radius:g}, {2 * cut.radius:g}]")
    return f.with_values(f.values * cut(*f.mesh()))


def mollify_drift(b: DriftField, kernel: MollifierKernel, *, lo: float, hi: float,
                  h: float | None = None, cutoff: CutoffSpec | None = None) -> DriftField:
    """Regularized drift ``eta * (b * rho_eps)`` tabulated on ``[lo, hi]``.

    The table spacing defaults to ``eps / 16``; evaluation interpolates
    linearly and continues constantly beyond the table.
    """
    if b.dim != 1:
        raise ValueError("mollify_drift is 1-D only")
    h = kernel.eps / 16 if h is None else h
    x = uniform_axis(lo - kernel.eps, hi + kernel.eps, h)
    raw = b(x)
    if not np.all(np.isfinite(raw)):
        raise EvaluationError(f"non-finite drift value at x={x[np.argmax(~np.isfinite(raw))]}")
    g = mollify(GridFunction((x,), raw, "b"), kernel)
    if cutoff is not None:
        g = g.with_values(g.values * cutoff(x))
    k = None if b.k is None else b.k * (1 + kernel.eps)
    return DriftField.from_grid(g, k=k, name=f"{b.name}*rho[{kernel.eps:g}]")
