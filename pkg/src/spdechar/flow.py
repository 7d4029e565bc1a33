"""Characteristic flows of ``dX = b(X) dt + dB``, their Jacobians and inverses."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from . import parallel
from .errors import BlowUpError, DimensionError, IntegratorError, MonotonicityError, RangeError
from .field import DriftField
from .paths import BrownianEnsemble


@dataclass(frozen=True, eq=False)
class FlowEnsemble:
    """Trajectories ``X[m, k, j]`` of the flow started at ``x0[j]``, stored at
    the step indices ``steps[k]``.

    1-D Jacobians are kept in log form (``logJ``); 2-D ones as ``DX`` with
    shape ``(M, K, J, 2, 2)``.  Paths listed in ``aborted`` hit the guard box
    and hold NaN from then on.
    """

    drift: DriftField
    brownian: BrownianEnsemble
    x0: np.ndarray
    steps: np.ndarray
    X: np.ndarray
    logJ: np.ndarray | None = None
    DX: np.ndarray | None = None
    aborted: np.ndarray | None = None
    guard_box: float = np.inf

    @property
    def dim(self) -> int:
        return self.drift.dim

    @property
    def J(self) -> np.ndarray:
        if self.dim == 1:
            if self.logJ is None:
                raise ValueError("Jacobians not computed; call jacobian(flow)")
            return np.exp(self.logJ)
        if self.DX is None:
            raise ValueError("Jacobians not computed; call jacobian(flow)")
        return self.DX

    def k(self, n: int) -> int:
        """Storage slot of step ``n``."""
        pos = int(np.searchsorted(self.steps, n))
        if pos >= len(self.steps) or self.steps[pos] != n:
            raise RangeError(f"step {n} was not stored (kept steps: {self.steps[:8]}...)")
        return pos

    def at(self, n: int) -> np.ndarray:
        return self.X[:, self.k(n)]

    @property
    def n_aborted(self) -> int:
        return 0 if self.aborted is None else int(self.aborted.sum())

    def surviving(self) -> "FlowEnsemble":
        """Sub-ensemble of the paths that never left the guard box."""
        if not self.n_aborted:
            return self
        live = ~self.aborted
        pick = lambda a: None if a is None else a[live]  # noqa: E731
        return dataclasses.replace(self, brownian=self.brownian.take(np.flatnonzero(live)),
                                   X=self.X[live], logJ=pick(self.logJ), DX=pick(self.DX),
                                   aborted=self.aborted[live])


def default_guard_box(b: DriftField, x0: np.ndarray, T: float) -> float:
    k = b.k if b.k is not None else (b.lipschitz if b.lipschitz is not None else 1.0)
    return 10.0 * (1.0 + float(np.max(np.abs(x0)))) * float(np.exp(k * T))


def _accumulate_jacobian(b: DriftField, Xn, dt, logJ, DX):
    if b.dim == 1:
        logJ += b.derivative(Xn) * dt
        return DX
    DX = DX + (b.derivative(Xn) @ DX) * dt
    det = DX[..., 0, 0] * DX[..., 1, 1] - DX[..., 0, 1] * DX[..., 1, 0]
    if np.any(det <= 0):
        raise IntegratorError("det(DX) <= 0; time step too coarse for the Jacobian")
    return DX


def forward_flow(b: DriftField, W: BrownianEnsemble, x_grid, *, keep=None,
                 jacobian: bool = False, guard_box: float | None = None,
                 on_blowup: str = "raise") -> FlowEnsemble:
    """Euler-Maruyama flow ``X_{n+1} = X_n + b(X_n) dt + dB_n`` from every point of ``x_grid``.

    The drift displacement is accumulated separately from the noise, so with
    ``b == 0`` the result is ``x + B`` bit for bit.  ``keep`` selects the step
    indices to store (default: all; step 0 is always kept).  With
    ``on_blowup="abort"`` paths leaving the guard box are marked and filled
    with NaN instead of raising.
    """
    if b.dim != W.d:
        raise DimensionError(f"drift dimension {b.dim} != noise dimension {W.d}")
    x0 = np.asarray(x_grid, dtype=float)
    if b.dim == 1:
        x0 = x0.ravel()
    elif x0.ndim != 2 or x0.shape[1] != 2:
        raise DimensionError("2-D flows need points of shape (J, 2)")
    if on_blowup not in ("raise", "abort"):
        raise ValueError("on_blowup must be 'raise' or 'abort'")
    dt, N = W.dt, W.N
    if b.lipschitz is not None and b.lipschitz * dt >= 0.5:
        warnings.warn(f"dt * Lipschitz = {b.lipschitz * dt:g} >= 0.5; flow may be inaccurate",
                      stacklevel=2)
    steps = np.arange(N + 1) if keep is None else np.unique(np.r_[0, np.asarray(keep, int)])
    if steps[-1] > N or steps[0] < 0:
        raise RangeError("kept steps outside [0, N]")
    L = default_guard_box(b, x0, W.T) if guard_box is None else float(guard_box)
    store = np.zeros(N + 1, dtype=int) - 1
    store[steps] = np.arange(len(steps))

    J = len(x0)
    X_out = np.empty((W.M, len(steps)) + x0.shape)
    logJ_out = np.empty((W.M, len(steps), J)) if (jacobian and b.dim == 1) else None
    DX_out = np.empty((W.M, len(steps), J, 2, 2)) if (jacobian and b.dim == 2) else None
    aborted = np.zeros(W.M, dtype=bool)

    def run(lo, hi):
        mc = hi - lo
        inc = W.increments[lo:hi]
        Bsum = np.zeros((mc,) + x0.shape[1:])
        A = np.zeros((mc,) + x0.shape)
        X = np.broadcast_to(x0, (mc,) + x0.shape).copy()
        logJ = np.zeros((mc, J)) if logJ_out is not None else None
        DX = np.broadcast_to(np.eye(2), (mc, J, 2, 2)).copy() if DX_out is not None else None
        alive = np.ones(mc, dtype=bool)
        for n in range(N + 1):
            s = store[n]
            if s >= 0:
                X_out[lo:hi, s] = X
                if logJ is not None:
                    logJ_out[lo:hi, s] = logJ
                if DX is not None:
                    DX_out[lo:hi, s] = DX
            if n >= steps[-1]:
                break
            if jacobian:
                DX = _accumulate_jacobian(b, X, dt, logJ, DX)
            A += b(X) * dt
            Bsum = Bsum + inc[:, n]
            X = x0 + A + (Bsum[:, None] if b.dim == 1 else Bsum[:, None, :])
            out = np.abs(X) > L
            if b.dim == 2:
                out = out.any(axis=-1)
            out &= alive[:, None]
            if out.any():
                mi, ji = np.argwhere(out)[0]
                if on_blowup == "raise":
                    bad = X[mi, ji]
                    raise BlowUpError(lo + int(mi), n + 1, int(ji),
                                      float(np.max(np.abs(bad))), L)
                hit = out.any(axis=1)
                alive &= ~hit
                aborted[lo:hi] |= hit
            if not alive.all():
                X[~alive] = np.nan
                A[~alive] = np.nan
                if logJ is not None:
                    logJ[~alive] = np.nan
                if DX is not None:
                    DX[~alive] = np.nan
        return None

    parallel.map_chunks(run, W.M)
    X_out.flags.writeable = False
    return FlowEnsemble(b, W, x0, steps, X_out, logJ_out, DX_out, aborted, L)


def iterate_flow(b: DriftField, W: BrownianEnsemble, x_grid, *, jacobian: bool = False,
                 guard_box: float | None = None):
    """Yield ``(n, X_n, logJ_n)`` for ``n = 0..N`` over all paths without storing history.

    Same arithmetic as ``forward_flow`` (1-D only); ``logJ_n`` is ``None``
    unless ``jacobian``.  Leaving the guard box raises ``BlowUpError``.
    """
    if b.dim != 1 or W.d != 1:
        raise DimensionError("iterate_flow is 1-D only")
    x0 = np.asarray(x_grid, dtype=float).ravel()
    L = default_guard_box(b, x0, W.T) if guard_box is None else float(guard_box)
    A = np.zeros((W.M, len(x0)))
    Bsum = np.zeros(W.M)
    X = np.broadcast_to(x0, A.shape).copy()
    logJ = np.zeros_like(A) if jacobian else None
    for n in range(W.N + 1):
        yield n, X, logJ
        if n == W.N:
            return
        if jacobian:
            logJ = logJ + b.derivative(X) * W.dt
        A += b(X) * W.dt
        Bsum = Bsum + W.increments[:, n]
        X = x0 + A + Bsum[:, None]
        out = np.abs(X) > L
        if out.any():
            mi, ji = np.argwhere(out)[0]
            raise BlowUpError(int(mi), n + 1, int(ji), float(abs(X[mi, ji])), L)


def jacobian(flow: FlowEnsemble) -> FlowEnsemble:
    """Fill the Jacobians of a flow whose every step was stored.

    1-D: ``log J_n = sum_{i<n} b'(X_i) dt`` (so ``J > 0`` always).
    2-D: Euler on ``d(DX) = Db(X) DX dt``, failing if ``det DX <= 0``.
    """
    W, b = flow.brownian, flow.drift
    if len(flow.steps) != W.N + 1:
        raise RangeError("jacobian() needs every time step stored; use forward_flow(jacobian=True)")
    dt = W.dt
    M, K = flow.X.shape[:2]
    J = len(flow.x0)
    if b.dim == 1:
        logJ = np.zeros((M, K, J))
        acc = np.zeros((M, J))
        for n in range(K - 1):
            acc += b.derivative(flow.X[:, n]) * dt
            logJ[:, n + 1] = acc
        return dataclasses.replace(flow, logJ=logJ)
    DX = np.empty((M, K, J, 2, 2))
    cur = np.broadcast_to(np.eye(2), (M, J, 2, 2)).copy()
    DX[:, 0] = cur
    for n in range(K - 1):
        cur = _accumulate_jacobian(b, flow.X[:, n], dt, None, cur)
        DX[:, n + 1] = cur
    return dataclasses.replace(flow, DX=DX)


@dataclass(frozen=True, eq=False)
class InverseFlow:
    """Inverse map ``psi`` of a 1-D flow at one time, by monotone linear
    interpolation of the graph ``{(X(x_j), x_j)}``."""

    knots: np.ndarray   # (M, J) images X_t(x_j)
    x0: np.ndarray      # (J,)
    n: int

    def __call__(self, x, m: int):
        """``(psi_t(x), out_of_range)`` on path ``m``; outside the image, ``psi`` is clamped."""
        x = np.asarray(x, dtype=float)
        kn = self.knots[m]
        out = (x < kn[0]) | (x > kn[-1])
        return np.interp(x, kn, self.x0), out

    def all_paths(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        psi = np.stack([np.interp(x, kn, self.x0) for kn in self.knots])
        out = (x[None, :] < self.knots[:, :1]) | (x[None, :] > self.knots[:, -1:])
        return psi, out


def inverse_flow(flow: FlowEnsemble, t_index: int) -> InverseFlow:
    """Realize ``Y_{0,t} = X_{0,t}^{-1}`` without a second SDE solve."""
    if flow.dim != 1:
        raise DimensionError("inverse_flow is 1-D only; use inverse_flow_2d")
    if np.any(np.diff(flow.x0) <= 0):
        raise ValueError("initial grid must be strictly increasing")
    knots = flow.at(t_index)
    live = np.isfinite(knots).all(axis=1)
    if np.any(np.diff(knots[live], axis=1) <= 0):
        m = int(np.argmax((np.diff(knots, axis=1) <= 0).any(axis=1) & live))
        raise MonotonicityError(
            f"flow map not increasing on path {m} at step {t_index}; reduce dt")
    return InverseFlow(knots, flow.x0, t_index)


def inverse_flow_2d(b: DriftField, W: BrownianEnsemble, m: int, t_index: int, points,
                    *, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
    """Pre-image of ``points`` under the 2-D Euler flow of path ``m`` up to ``t_index``.

    Each Euler step ``y -> y + b(y) dt + dB`` is undone by fixed-point
    iteration, which contracts when ``dt * Lip(b) < 1``; the result is the
    exact inverse of the discrete forward map up to ``tol``.
    """
    if b.dim != 2:
        raise DimensionError("inverse_flow_2d needs a 2-D drift")
    z = np.array(points, dtype=float)
    inc = W.increments[m]
    for n in range(t_index - 1, -1, -1):
        z = euler_step_inverse(b, z, inc[n], W.dt, tol=tol, max_iter=max_iter)
    return z


def euler_step_inverse(b: DriftField, z, dB, dt: float, *, tol: float = 1e-14,
                       max_iter: int = 100) -> np.ndarray:
    """Solve ``y + b(y) dt + dB = z`` for ``y`` by fixed-point iteration."""
    target = z - dB
    y = target - b(z) * dt
    for _ in range(max_iter):
        y_new = target - b(y) * dt
        err = np.max(np.abs(y_new - y))
        y = y_new
        if err <= tol * (1.0 + np.max(np.abs(y))):
            return y
    raise IntegratorError("backward step did not converge; reduce dt")


def cofactor_transpose(A) -> np.ndarray:
    """Transposed cofactor (adjugate) of 2x2 matrices: ``A @ C == det(A) I``."""
    A = np.asarray(A, dtype=float)
    C = np.empty_like(A)
    C[..., 0, 0] = A[..., 1, 1]
    C[..., 1, 1] = A[..., 0, 0]
    C[..., 0, 1] = -A[..., 0, 1]
    C[..., 1, 0] = -A[..., 1, 0]
    return C
