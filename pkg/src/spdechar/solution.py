"""Representation-formula solutions of the stochastic transport and continuity
equations, plus primitives, weights, norms and test functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.special import erf

from .errors import ConditioningError, DimensionError, GuardError, MonotonicityError
from .field import CutoffSpec, DriftField, parse_spec
from .flow import FlowEnsemble, InverseFlow, inverse_flow, inverse_flow_2d
from .grid import GridFunction
from .paths import BrownianEnsemble

if TYPE_CHECKING:
    from .bounds import BoundConstants

__all__ = [
    "GridFunction", "WeightSpec", "WeightedNormSq", "TestFunction", "TestFunction2D",
    "CutTestFunction", "bump", "initial_condition", "transport_solution",
    "continuity_solution", "transport_all", "continuity_all", "continuity_from_state",
    "transport_solution_2d",
    "primitive", "weighted_norm_sq", "mass", "l2_sq",
]

_GL_Z, _GL_W = np.polynomial.legendre.leggauss(256)


def _bump0(z):
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1
    zi = np.where(inside, z, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - zi * zi)), 0.0)


_BUMP_MASS = float(np.dot(_GL_W, _bump0(_GL_Z)))


def bump(z):
    """C-infinity bump on ``(-1, 1)`` normalized to unit integral."""
    return _bump0(z) / _BUMP_MASS


# --- initial conditions -----------------------------------------------------

def _gauss(c, s):
    return lambda x: np.exp(-0.5 * ((x - c) / s) ** 2) / (s * np.sqrt(2 * np.pi))


def _bump_ic(c, s):
    return lambda x: bump((x - c) / s) / s


def _step_smoothed(c, s):
    # indicator of [c - s, c + s] with erf edges of width s/50
    d = s / 50.0
    return lambda x: 0.5 * (erf((x - c + s) / d) - erf((x - c - s) / d))


_ICS = {"gauss": _gauss, "bump": _bump_ic, "step_smoothed": _step_smoothed}


def initial_condition(text: str):
    """Named initial datum: ``gauss(c,s)``, ``bump(c,s)`` or ``step_smoothed(c,s)``."""
    name, args = parse_spec(text)
    if name not in _ICS:
        raise ValueError(f"unknown initial condition {name!r}; valid: {', '.join(_ICS)}")
    if len(args) != 2 or args[1] <= 0:
        raise ValueError(f"{name} takes (center, positive scale)")
    return _ICS[name](*args)


# --- weights ----------------------------------------------------------------

@dataclass(frozen=True)
class WeightSpec:
    """``mu(x) = (1 + |x|)^2`` or ``w(x) = exp(2 k2 x^2)``."""

    kind: str
    k2: float | None = None

    def __post_init__(self):
        if self.kind not in ("mu", "w"):
            raise ValueError("weight kind must be 'mu' or 'w'")
        if self.kind == "w" and (self.k2 is None or not np.isfinite(self.k2)):
            raise GuardError("w-weight needs a finite k2 (bound constants diverge)")

    @classmethod
    def mu(cls) -> "WeightSpec":
        return cls("mu")

    @classmethod
    def w(cls, constants: BoundConstants) -> "WeightSpec":
        if not constants.converges:
            raise GuardError(
                f"bound constants diverge for k={constants.k:g}, T={constants.T:g}")
        return cls("w", constants.k2)

    def __call__(self, *coords):
        r2 = sum(np.square(c) for c in coords)
        if self.kind == "mu":
            return (1.0 + np.sqrt(r2)) ** 2
        return np.exp(2.0 * self.k2 * r2)


@dataclass(frozen=True)
class WeightedNormSq:
    value: float
    truncated: bool = False

    def __float__(self):
        return self.value


def weighted_norm_sq(u: GridFunction, w: WeightSpec) -> WeightedNormSq:
    """Trapezoid value of ``int u^2 w``; flags data whose weighted tail reaches the grid edge."""
    dens = u.values**2 * w(*u.mesh())
    peak = float(np.max(dens))
    edge = [dens[0], dens[-1]] if u.dim == 1 else [dens[0], dens[-1], dens[:, 0], dens[:, -1]]
    edge_max = max(float(np.max(e)) for e in edge)
    truncated = peak > 0 and edge_max > 1e-8 * peak
    return WeightedNormSq(u.with_values(dens).integral(), truncated)


def mass(u: GridFunction) -> float:
    return u.integral()


def primitive(u: GridFunction) -> GridFunction:
    """``V(x) = int_{x_min}^x u`` by cumulative trapezoid."""
    if u.dim != 1:
        raise DimensionError("primitive is 1-D only")
    return u.with_values(cumulative_trapezoid(u.values, u.x, initial=0.0), tag="V")


# --- test functions ---------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """Scaled, translated bump ``phi(x) = a * bump((x - c)/s)`` with exact derivatives."""

    center: float = 0.0
    scale: float = 1.0
    amplitude: float = 1.0

    __test__ = False  # not a pytest class

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.scale, self.center + self.scale

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def phi(self, x):
        return self.amplitude * bump(self._z(x))

    def dphi(self, x):
        z = self._z(x)
        inside = np.abs(z) < 1
        zi = np.where(inside, z, 0.0)
        f = np.where(inside, -2 * zi / (1 - zi * zi) ** 2, 0.0)
        return self.amplitude * bump(z) * f / self.scale

    def d2phi(self, x):
        z = self._z(x)
        inside = np.abs(z) < 1
        zi = np.where(inside, z, 0.0)
        f = np.where(inside, (6 * zi**4 - 2) / (1 - zi * zi) ** 4, 0.0)
        return self.amplitude * bump(z) * f / self.scale**2

    @property
    def integral(self) -> float:
        return self.amplitude * self.scale

    def theta(self, x):
        """Primitive ``int_{-inf}^x phi`` (256-point Gauss-Legendre per point)."""
        z = np.clip(self._z(x), -1.0, 1.0)
        half = 0.5 * (z + 1.0)
        nodes = -1.0 + half[..., None] * (_GL_Z + 1.0)
        return self.amplitude * self.scale * half * (bump(nodes) @ _GL_W)

    def localized(self, cut: CutoffSpec) -> "CutTestFunction":
        return CutTestFunction(self, cut)


@dataclass(frozen=True)
class CutTestFunction:
    """Product ``phi * eta_R`` with product-rule derivatives."""

    base: TestFunction
    cut: CutoffSpec

    def phi(self, x):
        return self.base.phi(x) * self.cut(x)

    def dphi(self, x):
        e, e1, _ = self.cut.derivatives(x)
        return self.base.dphi(x) * e + self.base.phi(x) * e1

    def d2phi(self, x):
        e, e1, e2 = self.cut.derivatives(x)
        b = self.base
        return b.d2phi(x) * e + 2 * b.dphi(x) * e1 + b.phi(x) * e2


@dataclass(frozen=True)
class TestFunction2D:
    """Tensor product ``phi(x, y) = fx(x) fy(y)``."""

    fx: TestFunction
    fy: TestFunction

    __test__ = False

    def phi(self, X, Y):
        return self.fx.phi(X) * self.fy.phi(Y)

    def grad(self, X, Y):
        return self.fx.dphi(X) * self.fy.phi(Y), self.fx.phi(X) * self.fy.dphi(Y)

    def laplacian(self, X, Y):
        return self.fx.d2phi(X) * self.fy.phi(Y) + self.fx.phi(X) * self.fy.d2phi(Y)


# --- representation formulas ------------------------------------------------

def _inverse(flow: FlowEnsemble, t_index: int, inv: InverseFlow | None) -> InverseFlow:
    return inv if inv is not None and inv.n == t_index else inverse_flow(flow, t_index)


def transport_all(u0: GridFunction, flow: FlowEnsemble, t_index: int,
                  inv: InverseFlow | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``u(t, x_j) = u0(psi_t(x_j))`` for every path; returns ``(values (M, n), out_of_range)``."""
    psi, out = _inverse(flow, t_index, inv).all_paths(u0.x)
    return u0.interp(psi), out


def continuity_all(u0: GridFunction, flow: FlowEnsemble, t_index: int,
                   inv: InverseFlow | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``u(t, x_j) = u0(psi) / J(t, psi)`` for every path (1-D)."""
    if flow.logJ is None:
        raise ValueError("continuity solution needs Jacobians; use forward_flow(jacobian=True)")
    inv = _inverse(flow, t_index, inv)
    return _continuity(u0, inv, flow.logJ[:, flow.k(t_index)])


def continuity_from_state(u0: GridFunction, x0: np.ndarray, X: np.ndarray,
                          logJ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Continuity solution from flow images ``X (M, J)`` and ``logJ (M, J)`` at one time."""
    if np.any(np.diff(X, axis=1) <= 0):
        raise MonotonicityError("flow map not increasing; reduce dt")
    return _continuity(u0, InverseFlow(X, np.asarray(x0, dtype=float), -1), logJ)


def _continuity(u0, inv: InverseFlow, logJ):
    psi, out = inv.all_paths(u0.x)
    Jk = np.exp(logJ)
    Jpsi = np.stack([np.interp(p, inv.x0, j) for p, j in zip(psi, Jk)])
    if np.any(Jpsi < 1e-12):
        raise ConditioningError("Jacobian below 1e-12 at an interpolated point")
    return u0.interp(psi) / Jpsi, out


def transport_solution(u0: GridFunction, flow: FlowEnsemble, m: int, t_index: int,
                       inv: InverseFlow | None = None) -> GridFunction:
    """Transport solution on path ``m`` at step ``t_index``, on ``u0``'s grid."""
    psi, out = _inverse(flow, t_index, inv)(u0.x, m)
    return u0.with_values(u0.interp(psi), tag="u", out_of_range=int(out.sum()))


def continuity_solution(u0: GridFunction, flow: FlowEnsemble, m: int, t_index: int,
                        inv: InverseFlow | None = None) -> GridFunction:
    """Continuity solution ``u0(psi) exp(-int div b)`` on path ``m``.

    The exponential factor is ``1/J`` evaluated at the pre-image, using the
    1-D identity ``J = exp(int b'(X_s) ds)``.
    """
    if flow.logJ is None:
        raise ValueError("continuity solution needs Jacobians; use forward_flow(jacobian=True)")
    inv = _inverse(flow, t_index, inv)
    psi, out = inv(u0.x, m)
    Jpsi = np.interp(psi, flow.x0, np.exp(flow.logJ[m, flow.k(t_index)]))
    if np.any(Jpsi < 1e-12):
        raise ConditioningError("Jacobian below 1e-12 at an interpolated point")
    return u0.with_values(u0.interp(psi) / Jpsi, tag="u", out_of_range=int(out.sum()))


def transport_solution_2d(u0: GridFunction, b: DriftField, W: BrownianEnsemble, m: int,
                          t_index: int) -> GridFunction:
    """2-D transport solution ``u0(psi_t(x))`` with ``psi_t`` the exact inverse of
    the discrete forward flow; ``u0`` is interpolated bilinearly and clamped
    to its grid."""
    if u0.dim != 2:
        raise DimensionError("transport_solution_2d needs a 2-D initial datum")
    X, Y = u0.mesh()
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    psi = inverse_flow_2d(b, W, m, t_index, pts)
    lo = np.array([u0.axes[0][0], u0.axes[1][0]])
    hi = np.array([u0.axes[0][-1], u0.axes[1][-1]])
    out = np.any((psi < lo) | (psi > hi), axis=-1)
    interp = RegularGridInterpolator(u0.axes, u0.values, method="linear")
    vals = interp(np.clip(psi, lo, hi)).reshape(X.shape)
    return u0.with_values(vals, tag="u", out_of_range=int(out.sum()))


def l2_sq(u: GridFunction) -> float:
    return u.with_values(u.values**2).integral()
