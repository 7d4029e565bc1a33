"""Pathwise Itô weak formulation, the composition identity along mollified
characteristics, and the shared-noise uniqueness experiment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .bounds import Z99, regularize
from .commutator import commutator_primitive
from .errors import AlignmentError, DimensionError, ResolutionError, WindowError
from .field import DriftField, MollifierKernel, mollify
from .flow import euler_step_inverse, forward_flow, iterate_flow
from .grid import GridFunction, trapezoid
from .paths import BrownianEnsemble
from .solution import (WeightSpec, continuity_all, continuity_from_state, continuity_solution,
                       primitive)


# --- solution series --------------------------------------------------------

def continuity_series(u0: GridFunction, b: DriftField, W: BrownianEnsemble, m: int,
                      n_last: int | None = None) -> list[GridFunction]:
    """Continuity solution on path ``m`` at every step ``0..n_last`` (1-D)."""
    n_last = W.N if n_last is None else n_last
    Wm = W.take([m])
    flow = forward_flow(b, Wm, u0.x, keep=np.arange(n_last + 1), jacobian=True)
    return [continuity_solution(u0, flow, 0, n) for n in range(n_last + 1)]


def transport_series_2d(u0, b: DriftField, W: BrownianEnsemble, m: int,
                        axes: tuple[np.ndarray, np.ndarray],
                        n_last: int | None = None) -> list[GridFunction]:
    """2-D transport solution ``u0(psi_n)`` on path ``m`` at every step.

    The inverse map is built step by step, ``psi_n = psi_{n-1} o Phi_n^{-1}``,
    with ``Phi_n`` the Euler step and ``psi_{n-1}`` interpolated linearly
    (exact when the drift is linear).  ``u0`` is either a callable
    ``u0(X, Y)``, evaluated exactly at ``psi``, or a 2-D GridFunction
    interpolated bilinearly.
    """
    if b.dim != 2:
        raise DimensionError("transport_series_2d needs a 2-D drift")
    n_last = W.N if n_last is None else n_last
    X, Y = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    if callable(u0):
        evaluate = lambda p: u0(p[..., 0], p[..., 1])  # noqa: E731
    else:
        interp = RegularGridInterpolator(u0.axes, u0.values, bounds_error=False, fill_value=0.0)

        def evaluate(p):
            return interp(p.reshape(-1, 2)).reshape(p.shape[:-1])
    inc = W.increments[m]
    psi = pts.copy()
    out = [GridFunction(axes, evaluate(psi), "u")]
    for n in range(n_last):
        z = euler_step_inverse(b, pts, inc[n], W.dt)
        psi = _bilinear(axes, psi, z)
        out.append(GridFunction(axes, evaluate(psi), "u"))
    return out


def _bilinear(axes, values, pts):
    """Bilinear interpolation on a uniform grid, extrapolating from the edge cells.

    ``values`` may carry trailing component axes.
    """
    idx, frac = [], []
    for a, p in zip(axes, (pts[..., 0], pts[..., 1])):
        s = (p - a[0]) / (a[1] - a[0])
        i = np.clip(np.floor(s).astype(np.intp), 0, len(a) - 2)
        idx.append(i)
        frac.append(s - i)
    (i, j), (fx, fy) = idx, frac
    ny = len(axes[1])
    k = i * ny + j
    w00, w10 = (1 - fx) * (1 - fy), fx * (1 - fy)
    w01, w11 = (1 - fx) * fy, fx * fy

    def one(v):
        v = v.ravel()
        return (w00 * v.take(k) + w10 * v.take(k + ny)
                + w01 * v.take(k + 1) + w11 * v.take(k + ny + 1))

    if values.ndim == 2:
        return one(values)
    return np.stack([one(values[..., c]) for c in range(values.shape[-1])], axis=-1)


# --- residuals --------------------------------------------------------------

@dataclass(frozen=True)
class ResidualSeries:
    """``r(t_n)`` with its signed components; ``r = I_n - initial - drift - martingale - laplacian``
    where ``I_n = int u(t_n) phi``."""

    times: np.ndarray
    residual: np.ndarray
    components: dict
    dt: float
    h: float
    eps: float | None = None

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.residual)))


def _check_series(u_series: Sequence[GridFunction], W: BrownianEnsemble, dim: int) -> int:
    K = len(u_series)
    if K < 2 or K > W.N + 1:
        raise AlignmentError(f"{K} solution snapshots for a path of {W.N} steps")
    axes = u_series[0].axes
    for u in u_series:
        if u.dim != dim:
            raise DimensionError(f"expected {dim}-D snapshots")
        if any(a.shape != b.shape or not np.array_equal(a, b) for a, b in zip(u.axes, axes)):
            raise AlignmentError("solution snapshots live on different grids")
    return K


def _left_sums(rate):
    """``[0, rate_0, rate_0 + rate_1, ...]`` along the last axis."""
    z = np.zeros(rate.shape[:-1] + (1,))
    return np.concatenate([z, np.cumsum(rate[..., :-1], axis=-1)], axis=-1)


def _assemble(I, drift_rate, mart_incr, lap_rate, dt, h, eps) -> ResidualSeries:
    K = len(I)
    drift = _left_sums(drift_rate * dt)
    mart = _left_sums(mart_incr)
    lap = 0.5 * _left_sums(lap_rate * dt)
    r = I - I[0] - drift - mart - lap
    comps = {"initial": np.full(K, I[0]), "drift": drift, "martingale": mart, "laplacian": lap}
    return ResidualSeries(dt * np.arange(K), r, comps, dt, h, eps)


def ito_residual_continuity(u_series: Sequence[GridFunction], b: DriftField, phi, m: int,
                            W: BrownianEnsemble, *, eps: float | None = None) -> ResidualSeries:
    """Itô residual of the 1-D continuity equation against the test function ``phi``.

    ``r(t_n) = int u_n phi - int u_0 phi - sum_j [int u_j b phi'] dt
    - sum_j [int u_j phi'] dB_j - 1/2 sum_j [int u_j phi''] dt``, left-point sums.
    ``phi`` needs ``phi``, ``dphi`` and ``d2phi`` methods.
    """
    K = _check_series(u_series, W, 1)
    x, h = u_series[0].x, u_series[0].h
    U = np.stack([u.values for u in u_series])
    p, dp, d2p = phi.phi(x), phi.dphi(x), phi.d2phi(x)
    I = trapezoid(U * p, h)
    D = trapezoid(U * (b(x) * dp), h)
    S = trapezoid(U * dp, h)
    L = trapezoid(U * d2p, h)
    dB = np.r_[W.increments[m][:K - 1], 0.0]
    return _assemble(I, D, S * dB, L, W.dt, h, eps)


def continuity_residuals(u0: GridFunction, b: DriftField, phi,
                         W: BrownianEnsemble) -> np.ndarray:
    """Continuity residuals ``r[m, n]`` of every path at once.

    Same quantity as ``ito_residual_continuity`` applied to
    ``continuity_series`` path by path, but the flow is advanced in place
    and no solution history is stored.
    """
    x, h = u0.x, u0.h
    p, dp, d2p = phi.phi(x), phi.dphi(x), phi.d2phi(x)
    bdp = b(x) * dp
    I, D, S, L = (np.empty((W.M, W.N + 1)) for _ in range(4))
    for n, X, logJ in iterate_flow(b, W, x, jacobian=True):
        U, _ = continuity_from_state(u0, x, X, logJ)
        I[:, n] = trapezoid(U * p, h)
        D[:, n] = trapezoid(U * bdp, h)
        S[:, n] = trapezoid(U * dp, h)
        L[:, n] = trapezoid(U * d2p, h)
    dB = np.concatenate([W.increments, np.zeros((W.M, 1))], axis=1)
    dt = W.dt
    return I - I[:, :1] - _left_sums(D * dt) - _left_sums(S * dB) - 0.5 * _left_sums(L * dt)


def ito_residual_transport(u_series: Sequence[GridFunction], b: DriftField, phi, m: int,
                           W: BrownianEnsemble, *, eps: float | None = None) -> ResidualSeries:
    """Itô residual of the 2-D transport equation (non-divergence form).

    Drift rate ``-int phi b . grad u`` with central-difference gradients;
    noise rate ``int u d_i phi`` per coordinate; Laplacian ``int u Lap(phi)``.
    ``phi`` needs ``phi``, ``grad`` and ``laplacian`` methods.
    """
    K = _check_series(u_series, W, 2)
    g0 = u_series[0]
    hx = g0.h
    hy = float(g0.axes[1][1] - g0.axes[1][0])
    X, Y = g0.mesh()
    p = phi.phi(X, Y)
    px, py = phi.grad(X, Y)
    lap = phi.laplacian(X, Y)
    bv = b(np.stack([X, Y], axis=-1))

    def integ(v):
        return trapezoid(trapezoid(v, hy, axis=-1), hx, axis=-1)

    I, D, Sx, Sy, L = (np.empty(K) for _ in range(5))
    for n, u in enumerate(u_series):
        U = u.values
        Ux = np.gradient(U, hx, axis=0, edge_order=2)
        Uy = np.gradient(U, hy, axis=1, edge_order=2)
        I[n] = integ(U * p)
        D[n] = -integ(p * (bv[..., 0] * Ux + bv[..., 1] * Uy))
        Sx[n], Sy[n] = integ(U * px), integ(U * py)
        L[n] = integ(U * lap)
    inc = W.increments[m][:K - 1]
    mart = np.r_[Sx[:-1] * inc[:, 0] + Sy[:-1] * inc[:, 1], 0.0]
    return _assemble(I, D, mart, L, W.dt, hx, eps)


# --- refinement studies -----------------------------------------------------

@dataclass(frozen=True)
class RefinementStudy:
    """Error measure per level, coarsest first; ``ratios[i] = values[i] / values[i+1]``."""

    steps: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        v = self.values
        return tuple(v[i] / v[i + 1] if v[i + 1] > 0 else math.inf for i in range(len(v) - 1))

    @property
    def min_ratio(self) -> float:
        return min(self.ratios)


def refinement_study(measure: Callable[[BrownianEnsemble, int], float],
                     W_fine: BrownianEnsemble, levels: int = 3) -> RefinementStudy:
    """Evaluate ``measure(W_level, level)`` on ensembles coarsened from one fine
    ensemble by factors ``2^(levels-1), ..., 2, 1`` (coupled noise)."""
    vals, steps = [], []
    for lev in range(levels):
        W = W_fine.coarsen(2 ** (levels - 1 - lev))
        vals.append(float(measure(W, lev)))
        steps.append(W.N)
    return RefinementStudy(tuple(steps), tuple(vals))


def mean_sup_residual_continuity(u0: GridFunction, b: DriftField, phi,
                                 W: BrownianEnsemble) -> float:
    """Mean over all paths of ``sup_t |r(t)|`` for the continuity residual."""
    return float(np.mean(np.max(np.abs(continuity_residuals(u0, b, phi, W)), axis=1)))


def mean_sup_residual_transport(u0, b: DriftField, phi, W: BrownianEnsemble, axes,
                                paths: Sequence[int]) -> float:
    sups = [ito_residual_transport(transport_series_2d(u0, b, W, m, axes), b, phi, m, W).sup
            for m in paths]
    return float(np.mean(sups))


# --- composition identity ---------------------------------------------------

@dataclass(frozen=True)
class CompositionResult:
    x: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def defect(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def max_defect(self) -> float:
        return float(np.max(self.defect))


def composition_identity_check(u0: GridFunction, b: DriftField, kernel: MollifierKernel,
                               m: int, W: BrownianEnsemble, t: float,
                               x_starts=(-1.0, -0.5, 0.0, 0.5, 1.0)) -> CompositionResult:
    """Check ``V_eps(t, X^eps_t(x)) = V_eps(0, x) + int_0^t R_eps(V, b)(s, X^eps_s) ds``.

    ``V`` is the primitive of the continuity solution with initial datum
    ``u0`` on path ``m`` (so ``dV = u`` is supplied exactly to the
    commutator), ``X^eps`` the Euler flow of ``rho_eps * b`` on the same
    path, and the time integral a left-point sum.
    """
    n_t = W.time_index(t)
    Wm = W.take([m])
    x = u0.x
    xs = np.atleast_1d(np.asarray(x_starts, dtype=float))
    flow = forward_flow(b, Wm, x, keep=np.arange(n_t + 1), jacobian=True)
    bgrid = u0.with_values(b(x), tag="b")
    be = DriftField.from_grid(mollify(bgrid, kernel), k=b.k, name="b_eps")
    Xe = forward_flow(be, Wm, xs, keep=np.arange(n_t + 1)).X[0]
    lo, hi = x[0] + 2 * kernel.eps, x[-1] - 2 * kernel.eps
    if np.any((Xe < lo) | (Xe > hi)):
        raise WindowError(f"mollified characteristic left [{lo:g}, {hi:g}]")
    acc = np.zeros_like(xs)
    rhs = lhs = None
    for n in range(n_t + 1):
        u_n = continuity_solution(u0, flow, 0, n)
        V_n = primitive(u_n)
        if n == 0:
            rhs = mollify(V_n, kernel).interp(xs)
        if n == n_t:
            lhs = mollify(V_n, kernel).interp(Xe[n])
            break
        R = commutator_primitive(bgrid, V_n, kernel, dV=u_n)
        acc += R.interp(Xe[n]) * W.dt
    return CompositionResult(xs, lhs, rhs + acc)


# --- uniqueness -------------------------------------------------------------

@dataclass(frozen=True)
class UniquenessResult:
    """``distance[i, k] = E ||u^{eps_i}(t_k) - u^{eps_i/2}(t_k)||^2_{L^2(mu)}``."""

    eps: tuple[float, ...]
    times: np.ndarray
    distance: np.ndarray
    stderr: np.ndarray
    n_aborted: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def trend(self) -> float:
        """Largest ratio of successive distances over all times (``< 1``: Cauchy)."""
        d = self.distance
        with np.errstate(divide="ignore", invalid="ignore"):
            r = d[1:] / d[:-1]
        r = np.where(d[:-1] == 0, np.where(d[1:] == 0, 0.0, np.inf), r)
        return float(np.max(r)) if r.size else math.nan

    @property
    def final(self) -> np.ndarray:
        return self.distance[:, -1]

    @property
    def strictly_decreasing_at_T(self) -> bool:
        return bool(np.all(np.diff(self.final) < 0))

    @property
    def tainted(self) -> bool:
        return self.n_aborted > 0


def uniqueness_experiment(b: DriftField, u0: GridFunction, eps_list: Sequence[float],
                          W: BrownianEnsemble, *, times: Sequence[float] | None = None,
                          weight: WeightSpec | None = None) -> UniquenessResult:
    """Shared-noise distances between regularized problems at ``eps`` and ``eps/2``.

    Each problem uses ``b^eps = eta_{1/eps} (rho_eps * b)`` and
    ``u0^eps = eta_{1/eps} (rho_eps * u0)`` and is solved by characteristics
    on ``u0``'s grid, all driven by the same ensemble ``W``.
    """
    eps_list = [float(e) for e in eps_list]
    if np.any(np.diff(eps_list) >= 0):
        raise ValueError("eps_list must be strictly decreasing")
    sweep = eps_list + [eps_list[-1] / 2]
    if u0.h > sweep[-1] / 4:
        raise ResolutionError(f"grid spacing {u0.h:g} cannot resolve eps={sweep[-1]:g}")
    weight = WeightSpec.mu() if weight is None else weight
    times = [W.T] if times is None else list(times)
    steps = [W.time_index(t) for t in times]
    x = u0.x
    w = weight(x)
    pad = 5.0 * math.sqrt(W.T) + 1.0
    table = (x[0] - pad, x[-1] + pad)

    def solve(eps):
        ue, be = regularize(u0, b, MollifierKernel(eps), table)
        if not np.any(ue.values):
            return np.zeros((len(steps), W.M, len(x))), np.zeros(W.M, bool)
        flow = forward_flow(be, W, x, keep=steps, jacobian=True, on_blowup="abort")
        sols = np.empty((len(steps), W.M, len(x)))
        live = ~flow.aborted
        for i, n in enumerate(steps):
            sols[i] = 0.0
            sols[i, live] = continuity_all(ue, flow.surviving(), n)[0]
        return sols, flow.aborted

    dist = np.empty((len(eps_list), len(steps)))
    se = np.empty_like(dist)
    dead = np.zeros(W.M, bool)
    prev, prev_dead = solve(sweep[0])
    dead |= prev_dead
    for i, eps in enumerate(sweep[1:]):
        cur, cur_dead = solve(eps)
        dead |= cur_dead
        ok = ~(prev_dead | cur_dead)
        d = trapezoid((prev - cur) ** 2 * w, u0.h)  # (K, M)
        d = d[:, ok]
        dist[i] = d.mean(axis=1)
        se[i] = d.std(axis=1, ddof=1) / math.sqrt(d.shape[1]) if d.shape[1] > 1 else np.nan
        prev, prev_dead = cur, cur_dead
    return UniquenessResult(tuple(eps_list), np.asarray(times, float), dist, se,
                            int(dead.sum()), {"ci_factor": Z99})
