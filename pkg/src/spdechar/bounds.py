"""Explicit constants of the inverse-Jacobian moment bound and Monte Carlo
checks of the flow moment estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field import CutoffSpec, DriftField, MollifierKernel, mollify, mollify_drift
from .flow import forward_flow
from .grid import GridFunction, trapezoid
from .paths import BrownianEnsemble
from .solution import WeightSpec, continuity_all, weighted_norm_sq

Z99 = 2.576  # two-sided 99% normal quantile

_GL_Z, _GL_W = np.polynomial.legendre.leggauss(20)


# --- constants --------------------------------------------------------------

def _composite_gl(f, Z: float, panels: int) -> float:
    edges = np.linspace(0.0, Z, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = mid[:, None] + half[:, None] * _GL_Z[None, :]
    return float(np.sum(half[:, None] * _GL_W[None, :] * f(nodes)))


def _half_line(beta: float, a: float, z_scale: float = 1.0, panels: int | None = None):
    """``int_0^inf exp(beta z - a z^2) dz`` for ``a > 0``.

    The cut point ``Z`` grows until the Gaussian tail bound
    ``exp(beta Z - a Z^2) / (2 a Z - beta)`` is below 1e-13 of the value on
    ``[0, Z]``; panels of 20-point Gauss-Legendre double until two successive
    values agree to 1e-15.  Returns ``(value, Z, panels)``.
    """
    def f(z):
        return np.exp(beta * z - a * z * z)

    Z = max(beta / (2 * a), 0.0) + 1.0 / math.sqrt(a)
    while True:
        val = _composite_gl(f, Z, 64)
        slope = 2 * a * Z - beta
        if slope > 0 and math.exp(beta * Z - a * Z * Z) / slope <= 1e-13 * val:
            break
        Z *= 1.25
    Z *= z_scale
    if panels is not None:
        return _composite_gl(f, Z, panels), Z, panels
    n = 4
    prev = _composite_gl(f, Z, n)
    while n < 1 << 14:
        n *= 2
        cur = _composite_gl(f, Z, n)
        if abs(cur - prev) <= 1e-15 * abs(cur):
            return cur, Z, n
        prev = cur
    return cur, Z, n


@dataclass(frozen=True)
class BoundConstants:
    """Constants of ``E|dX_t/dx|^{-2} <= k1 t^{-3/8} exp(k2 x^2)``.

    ``c1`` and ``c2`` are Gaussian-type integrals that converge only when
    ``16 k T < 1`` and ``1584 T^2 k^2 < 1``; otherwise they (and ``k1``,
    ``k2``) are reported as ``inf``.
    """

    k: float
    T: float
    c1: float
    c2: float
    k1: float
    k2: float
    c1_converges: bool
    c2_converges: bool
    z_max: tuple[float, float] = (math.nan, math.nan)
    panels: tuple[int, int] = (0, 0)

    @property
    def converges(self) -> bool:
        return self.c1_converges and self.c2_converges

    def bound(self, x, t):
        return self.k1 * np.power(t, -3.0 / 8.0) * np.exp(self.k2 * np.square(x))


def compute_constants(k: float, T: float, *, z_scale: float = 1.0,
                      panels: int | None = None) -> BoundConstants:
    """Evaluate ``c1, c2`` by quadrature and ``k1 = sqrt(c1) c2^{1/4} e^{99 T k^2}``,
    ``k2 = 2 (k + 99 T k^2)``.

    ``z_scale`` and ``panels`` override the automatic truncation point and
    panel count (used for refinement checks).
    """
    k, T = float(k), float(T)
    if k < 0 or not T > 0:
        raise ValueError("need k >= 0 and T > 0")
    g1 = 16 * k * T < 1
    g2 = 1584 * T**2 * k**2 < 1
    inv_sqrt_2pi = 1.0 / math.sqrt(2 * math.pi)
    c1 = c2 = math.inf
    zs, ps = [math.nan, math.nan], [0, 0]
    if g1:
        # exp(8k(|z| + z^2) - z^2/(2T)) is even
        v, zs[0], ps[0] = _half_line(8 * k, 1 / (2 * T) - 8 * k, z_scale, panels)
        c1 = inv_sqrt_2pi * 2 * v
    if g2:
        v, zs[1], ps[1] = _half_line(0.0, 1 / (2 * T) - 792 * T * k * k, z_scale, panels)
        c2 = 4 * inv_sqrt_2pi * 2 * v
    if g1 and g2:
        k1 = math.sqrt(c1) * c2**0.25 * math.exp(99 * T * k * k)
        k2 = 2 * (k + 99 * T * k * k)
    else:
        k1 = k2 = math.inf
    return BoundConstants(k, T, c1, c2, k1, k2, g1, g2, tuple(zs), tuple(ps))


# --- Monte Carlo moments ----------------------------------------------------

@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean with standard error and 99% confidence interval."""

    x: float
    t: float
    M: int
    estimate: float
    stderr: float
    n_bad: int = 0
    bound: float | None = None

    @property
    def half_width(self) -> float:
        return Z99 * self.stderr

    @property
    def ci(self) -> tuple[float, float]:
        return self.estimate - self.half_width, self.estimate + self.half_width

    @property
    def tainted(self) -> bool:
        return self.n_bad > 0

    @property
    def passed(self) -> bool | None:
        """Upper CI edge below the bound (``None`` when no bound applies)."""
        if self.bound is None:
            return None
        return bool(self.ci[1] <= self.bound)


def _estimate(samples: np.ndarray, x: float, t: float, bound=None) -> MomentEstimate:
    ok = np.isfinite(samples)
    s = samples[ok]
    n = s.size
    mean = float(np.sum(s) / n) if n else math.nan
    se = float(np.std(s, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return MomentEstimate(float(x), float(t), n, mean, se, int((~ok).sum()), bound)


def _probe_flow(b: DriftField, xs, ts, W: BrownianEnsemble, jacobian=True):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ns = [W.time_index(t) for t in np.atleast_1d(ts)]
    return forward_flow(b, W, xs, keep=ns, jacobian=jacobian, on_blowup="abort"), xs, ns


def inverse_jacobian_moments(b: DriftField, xs, ts, W: BrownianEnsemble,
                             constants: BoundConstants | None = None) -> list[MomentEstimate]:
    """``E[J_t(x)^{-2}]`` at every ``(x, t)`` probe from a single flow."""
    flow, xs, ns = _probe_flow(b, xs, ts, W)
    out = []
    for n in ns:
        lj = flow.logJ[:, flow.k(n)]
        t = n * W.dt
        for j, x in enumerate(xs):
            bound = None
            if constants is not None and constants.converges and t > 0:
                bound = float(constants.bound(x, t))
            out.append(_estimate(np.exp(-2.0 * lj[:, j]), x, t, bound))
    return out


def mc_inverse_jacobian_moment(b: DriftField, x: float, t: float, W: BrownianEnsemble,
                               constants: BoundConstants | None = None) -> MomentEstimate:
    """Monte Carlo ``E[|dX_t/dx|^{-2}]``, compared with ``k1 t^{-3/8} e^{k2 x^2}``."""
    return inverse_jacobian_moments(b, [x], [t], W, constants)[0]


def mc_jacobian_moment_p(b: DriftField, x: float, t: float, p: float,
                         W: BrownianEnsemble) -> MomentEstimate:
    if p < 1:
        raise ValueError("p must be >= 1")
    flow, _, ns = _probe_flow(b, [x], [t], W)
    return _estimate(np.exp(p * flow.logJ[:, flow.k(ns[0]), 0]), x, t)


@dataclass(frozen=True)
class ShapeFit:
    """Affine fit of ``log E|J|^p`` against ``x^2``."""

    slope: float
    intercept: float
    residual: float
    estimates: list[MomentEstimate]


def jacobian_moment_shape(b: DriftField, t: float, p: float, W: BrownianEnsemble,
                          xs=(0.0, 0.5, 1.0, 1.5)) -> ShapeFit:
    flow, xs, ns = _probe_flow(b, xs, [t], W)
    lj = flow.logJ[:, flow.k(ns[0])]
    ests = [_estimate(np.exp(p * lj[:, j]), x, t) for j, x in enumerate(xs)]
    y = np.log([e.estimate for e in ests])
    A = np.stack([xs**2, np.ones_like(xs)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ coef - y)))
    return ShapeFit(float(coef[0]), float(coef[1]), resid, ests)


@dataclass(frozen=True)
class FourthMoment:
    estimates: list[MomentEstimate]
    fitted_c: float
    horizon: float


def mc_flow_fourth_moment(b: DriftField, x, t: float, W: BrownianEnsemble,
                          horizon: float | None = None) -> FourthMoment:
    """``E|X_t(x)|^4`` per probe and ``C = max E|X_t(x)|^4 / (|x|^4 + T^4)``."""
    T = W.T if horizon is None else horizon
    flow, xs, ns = _probe_flow(b, x, [t], W, jacobian=False)
    Xt = flow.X[:, flow.k(ns[0])]
    ests = [_estimate(Xt[:, j] ** 4, xv, t) for j, xv in enumerate(xs)]
    c = max(e.estimate / (abs(e.x) ** 4 + T**4) for e in ests)
    return FourthMoment(ests, float(c), T)


# --- weighted a-priori estimate --------------------------------------------

@dataclass(frozen=True)
class AprioriResult:
    eps: float
    lhs: float
    lhs_stderr: float
    rhs_scale: float
    n_bad: int = 0
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_norm: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs_scale if self.rhs_scale > 0 else 0.0


def regularize(u0: GridFunction, b: DriftField, kernel: MollifierKernel,
               table: tuple[float, float]) -> tuple[GridFunction, DriftField]:
    """``u0^eps = eta_eps (u0 * rho_eps)`` and ``b^eps = eta_eps (b * rho_eps)``
    with ``eta_eps(x) = eta(eps x)``; ``table`` is the drift lookup range."""
    cut = CutoffSpec(1.0 / kernel.eps)
    ue = mollify(u0, kernel)
    ue = ue.with_values(ue.values * cut(u0.x), tag="u0_eps")
    be = mollify_drift(b, kernel, lo=table[0], hi=table[1], cutoff=cut)
    return ue, be


def weighted_apriori_check(u0: GridFunction, b: DriftField, kernel: MollifierKernel,
                           W: BrownianEnsemble, constants: BoundConstants, *,
                           t_stride: int | None = None) -> AprioriResult:
    """MC value of ``int_0^T E||u^eps(t)||^2_{L^2(mu)} dt`` against ``||u0||^2_{L^2(w)}``.

    Raises ``GuardError`` when the w-weight does not exist.
    """
    w = WeightSpec.w(constants)
    rhs = weighted_norm_sq(u0, w).value
    stride = t_stride or max(1, W.N // 10)
    if W.N % stride:
        raise ValueError("t_stride must divide the number of steps")
    steps = np.arange(0, W.N + 1, stride)
    pad = 5.0 * math.sqrt(W.T) + 1.0
    ue, be = regularize(u0, b, kernel, (u0.x[0] - pad, u0.x[-1] + pad))
    if not np.any(ue.values):
        return AprioriResult(kernel.eps, 0.0, 0.0, rhs, 0, steps * W.dt, np.zeros(len(steps)))
    flow = forward_flow(be, W, u0.x, keep=steps, jacobian=True, on_blowup="abort")
    mu = WeightSpec.mu()(u0.x)
    live = ~flow.aborted
    norms = np.empty((int(live.sum()), len(steps)))
    for i, n in enumerate(steps):
        u, _ = continuity_all(ue, flow.surviving(), n)
        norms[:, i] = trapezoid(u**2 * mu, u0.h)
    per_path = trapezoid(norms, stride * W.dt)
    est = _estimate(per_path, 0.0, W.T)
    return AprioriResult(kernel.eps, est.estimate, est.stderr, rhs, flow.n_aborted,
                         steps * W.dt, norms.mean(axis=0))

