"""Named experiment suites: each runs a set of numerical checks and writes CSV
tables into the output directory."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .bounds import compute_constants, inverse_jacobian_moments, mc_flow_fourth_moment
from .commutator import decay_curve, window_norm
from .errors import ConfigError, UsageError
from .field import MollifierKernel, drift_from_spec, zero
from .flow import forward_flow
from .grid import GridFunction
from .paths import BrownianEnsemble, sample_brownian
from .solution import (TestFunction, continuity_all, initial_condition, l2_sq,
                       transport_all, transport_solution_2d)
from .weakform import (composition_identity_check, mean_sup_residual_continuity,
                       refinement_study, uniqueness_experiment)


# --- configuration ----------------------------------------------------------

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every field has a desk-scale default."""

    experiment: str = "all"
    seed: int | None = None
    output: str = "spdechar-out"
    drift: str = "tanh(0.01)"
    initial: str = "bump(0,1)"
    # moment bounds
    T: float = 1.0
    M: int = 10000
    N: int = 1000
    x_probes: tuple[float, ...] = (0.0, 1.0)
    t_probes: tuple[float, ...] = (0.25, 1.0)
    fourth_x: tuple[float, ...] = (0.0, 1.0, 2.0, 10.0)
    # commutators
    eps: tuple[float, ...] = (0.1, 0.05, 0.025)
    window: tuple[float, ...] = (-2.0, 2.0)
    commutator_h: float = 1.0 / 1024
    rough_drift: str = "holder(0.5)"
    # weak form
    h: float = 1.0 / 256
    residual_T: float = 0.25
    residual_N: int = 400
    residual_paths: int = 384
    composition_eps: float = 0.1
    composition_T: float = 0.5
    composition_N: int = 200
    composition_paths: int = 4
    # uniqueness
    uniqueness_drift: str = "holder(0.5,0.01)"
    uniqueness_eps: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    uniqueness_M: int = 200
    uniqueness_N: int = 100
    uniqueness_h: float = 1.0 / 320
    # flows
    flow_M: int = 16
    ou_dt: float = 1e-4
    ou_T: float = 0.02
    rotation_dt: float = 1e-3
    rotation_T: float = 0.25
    rotation_h: float = 1.0 / 64
    rotation_paths: int = 2

    _LISTS = ("x_probes", "t_probes", "fourth_x", "eps", "window", "uniqueness_eps")
    _DECREASING = ("eps", "uniqueness_eps")

    @classmethod
    def parse(cls, text: str, *, env_seed: str | None = None) -> "ExperimentConfig":
        """Parse ``key = value`` lines (``#`` starts a comment).

        ``dt`` is accepted as an alternative to ``N`` (``N = T / dt``).
        """
        kinds = {f.name: f.type for f in fields(cls)}
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in kinds and key != "dt":
                raise ConfigError(key, "unknown key")
            raw[key] = value
        if env_seed is not None:
            raw["seed"] = env_seed
        vals: dict = {}
        for key, value in raw.items():
            if key == "dt":
                continue
            kind = kinds[key]
            try:
                if key in cls._LISTS:
                    vals[key] = _floats(value)
                elif "int" in kind:
                    vals[key] = int(value)
                elif "float" in kind:
                    vals[key] = float(value)
                else:
                    vals[key] = value
            except ValueError:
                raise ConfigError(key, f"cannot parse {value!r}") from None
        if "dt" in raw:
            try:
                dt = float(raw["dt"])
            except ValueError:
                raise ConfigError("dt", f"cannot parse {raw['dt']!r}") from None
            if not dt > 0:
                raise ConfigError("dt", "must be positive")
            T = vals.get("T", cls.T)
            n = round(T / dt)
            if n < 1 or abs(n * dt - T) > 1e-9 * T:
                raise ConfigError("dt", f"T={T:g} is not a multiple of dt={dt:g}")
            vals["N"] = n
        cfg = cls(**vals)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("seed", "a seed is required (or set SPDECHAR_SEED)")
        if self.experiment not in NAMES:
            raise ConfigError("experiment",
                              f"unknown suite {self.experiment!r}; valid: {', '.join(NAMES)}")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "window") or isinstance(v, str):
                continue
            items = v if isinstance(v, tuple) else (v,)
            if f.name in ("x_probes", "fourth_x"):
                if not all(math.isfinite(x) for x in items):
                    raise ConfigError(f.name, "probes must be finite")
                continue
            if not all(x > 0 for x in items):
                raise ConfigError(f.name, "must be positive")
        for name in self._DECREASING:
            if np.any(np.diff(getattr(self, name)) >= 0):
                raise ConfigError(name, "must be strictly decreasing")
        if len(self.window) != 2 or self.window[0] >= self.window[1]:
            raise ConfigError("window", "need lo, hi with lo < hi")
        for key in ("drift", "rough_drift", "uniqueness_drift"):
            try:
                drift_from_spec(getattr(self, key))
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
        try:
            initial_condition(self.initial)
        except ValueError as exc:
            raise ConfigError("initial", str(exc)) from None


# --- reporting --------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    measured: float
    threshold: float
    relation: str  # "<=", ">=", "==", "<"
    passed: bool


@dataclass
class SuiteReport:
    checks: list[Check] = field(default_factory=list)
    stamp: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


class _Ctx:
    def __init__(self, cfg: ExperimentConfig, out: Path, suite: str):
        self.cfg, self.out, self.suite = cfg, out, suite
        self.checks: list[Check] = []

    def check(self, name, measured, threshold, relation="<="):
        m, t = float(measured), float(threshold)
        ok = {"<=": m <= t, ">=": m >= t, "==": m == t, "<": m < t}[relation]
        self.checks.append(Check(self.suite, name, m, t, relation, bool(ok)))

    def csv(self, name, header, rows):
        write_csv(self.out / f"{self.suite}_{name}.csv", header, rows)


# --- suites -----------------------------------------------------------------

def _ou_exact(x0, W: BrownianEnsemble, n: int):
    """OU solution ``x e^{-t} + B_t - int_0^t e^{-(t-s)} B_s ds`` (trapezoid in s)."""
    t = n * W.dt
    B = W.B[:, :n + 1]
    s = W.times[:n + 1]
    kern = np.exp(-(t - s))
    integ = W.dt * (B @ kern - 0.5 * (B[:, 0] * kern[0] + B[:, -1] * kern[-1]))
    Z = B[:, -1] - integ
    return x0[None, :] * math.exp(-t) + Z[:, None], Z


def suite_flows(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    rows = []
    # zero drift
    W = sample_brownian(cfg.flow_M, 100, 1.0, cfg.seed)
    u0 = GridFunction.sample(-8, 8, cfg.h, initial_condition(cfg.initial))
    flow = forward_flow(zero(), W, u0.x, jacobian=True)
    err_x = float(np.max(np.abs(flow.X - (u0.x[None, None, :] + W.B[:, :, None]))))
    err_u = 0.0
    for n in (25, 50, 100):
        shift = u0.x[None, :] - W.B[:, n, None]
        oracle = np.stack([u0.interp(s) for s in shift])
        ut, _ = transport_all(u0, flow, n)
        uc, _ = continuity_all(u0, flow, n)
        err_u = max(err_u, float(np.max(np.abs(ut - oracle))), float(np.max(np.abs(uc - oracle))))
    err_j = float(np.max(np.abs(flow.J - 1.0)))
    ctx.check("zero_flow_equals_x_plus_B", err_x, 0.0, "==")
    ctx.check("zero_solution_shift_error", err_u, 1e-10)
    ctx.check("zero_jacobian_minus_one", err_j, 0.0, "==")
    rows += [("zero", "flow_error", err_x), ("zero", "solution_error", err_u),
             ("zero", "jacobian_error", err_j)]
    # Ornstein-Uhlenbeck
    N = round(cfg.ou_T / cfg.ou_dt)
    W = sample_brownian(cfg.flow_M, N, cfg.ou_T, cfg.seed)
    u0 = GridFunction.sample(-3, 3, cfg.h, initial_condition(cfg.initial))
    flow = forward_flow(drift_from_spec("ou"), W, u0.x, keep=[N], jacobian=True)
    exact, Z = _ou_exact(u0.x, W, N)
    path_err = float(np.max(np.abs(flow.at(N) - exact) / (1 + np.abs(u0.x))))
    j_err = float(np.max(np.abs(flow.J[:, -1] / math.exp(-cfg.ou_T) - 1)))
    uc, _ = continuity_all(u0, flow, N)
    f0 = initial_condition(cfg.initial)
    et = math.exp(cfg.ou_T)
    oracle = f0((u0.x[None, :] - Z[:, None]) * et) * et
    supp = oracle > 0
    u_err = float(np.max(np.abs(uc - oracle)[supp]))
    ctx.check("ou_pathwise_error_over_1_plus_x", path_err, 1e-3)
    ctx.check("ou_jacobian_relative_error", j_err, 1e-5)
    ctx.check("ou_continuity_sup_error", u_err, 5e-3)
    rows += [("ou", "pathwise_error", path_err), ("ou", "jacobian_error", j_err),
             ("ou", "continuity_error", u_err)]
    # rotation
    rot = drift_from_spec("rotation")
    T = cfg.rotation_T
    N = round(T / cfg.rotation_dt)
    W2 = sample_brownian(cfg.rotation_paths, N, T, cfg.seed, d=2)
    g = GridFunction.sample((-4, -4), (4, 4), cfg.rotation_h,
                            lambda X, Y: np.exp(-((X - 0.5) ** 2 + Y**2) / 0.32))
    n0 = l2_sq(g)
    worst = 0.0
    for m in range(W2.M):
        u = transport_solution_2d(g, rot, W2, m, N)
        worst = max(worst, abs(l2_sq(u) - n0) / n0)
    ctx.check("rotation_energy_relative_change", worst, 1e-2)
    dets = []
    for NN in (N, 2 * N):
        Wd = sample_brownian(1, NN, T, cfg.seed, d=2)
        fl = forward_flow(rot, Wd, np.array([[0.5, 0.0]]), keep=[NN], jacobian=True)
        dets.append(float(np.linalg.det(fl.DX[0, -1, 0]) - 1))
    ratio = dets[0] / dets[1]
    ctx.check("rotation_det_halving_ratio_low", ratio, 1.9, ">=")
    ctx.check("rotation_det_halving_ratio_high", ratio, 2.1)
    rows += [("rotation", "energy_change", worst), ("rotation", "det_minus_one_dt", dets[0]),
             ("rotation", "det_minus_one_dt_half", dets[1])]
    ctx.csv("errors", ("case", "quantity", "value"), rows)


def suite_bounds(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    rows = []
    for k, T in ((0.0, 1.0), (0.01, cfg.T)):
        c = compute_constants(k, T)
        rows.append((k, T, c.c1, c.c2, c.k1, c.k2, c.c1_converges, c.c2_converges))
    ctx.csv("constants", ("k", "T", "c1", "c2", "k1", "k2", "c1_converges", "c2_converges"), rows)
    c0 = compute_constants(0.0, 1.0)
    err0 = max(abs(c0.c1 - 1), abs(c0.c2 - 4), abs(c0.k1 - math.sqrt(2)), abs(c0.k2))
    ctx.check("constants_k0_closed_form_error", err0, 1e-12)
    c = compute_constants(0.01, 1.0)
    ctx.check("constants_k001_guards", float(c.converges), 1.0, "==")
    ref = [compute_constants(0.01, 1.0, z_scale=2.0),
           compute_constants(0.01, 1.0, panels=2 * max(c.panels))]
    drift = max(abs(r.c1 / c.c1 - 1) for r in ref) + max(abs(r.c2 / c.c2 - 1) for r in ref)
    ctx.check("constants_refinement_change", drift, 1e-10)
    ctx.check("constants_k2_value_error", abs(c.k2 - 0.0398), 1e-15)

    moments = []
    # zero drift: J == 1 against sqrt(2) t^{-3/8}
    Wz = BrownianEnsemble.deterministic(2, 100, 1.0)
    zt = [n / 100 for n in range(1, 101)]
    ests = inverse_jacobian_moments(zero(), [0.0], zt, Wz, c0)
    ctx.check("eq0_zero_drift_failures", sum(not e.passed for e in ests), 0, "==")
    b = drift_from_spec(cfg.drift)
    W = sample_brownian(cfg.M, cfg.N, cfg.T, cfg.seed)
    cd = compute_constants(b.k if b.k is not None else 0.0, cfg.T)
    for e in inverse_jacobian_moments(b, cfg.x_probes, cfg.t_probes, W, cd):
        moments.append(("inverse_jacobian", e.x, e.t, e.M, e.estimate, e.stderr,
                        e.bound, e.passed))
        gap = math.inf if e.bound is None else e.ci[1] - e.bound
        ctx.check(f"eq0_upper_ci_minus_bound_x{e.x:g}_t{e.t:g}", gap, 0.0)
    # fourth moments with zero drift
    fm = mc_flow_fourth_moment(zero(), cfg.fourth_x, cfg.T, W, horizon=cfg.T)
    for e in fm.estimates:
        exact = e.x**4 + 6 * e.x**2 * e.t + 3 * e.t**2
        moments.append(("fourth_moment", e.x, e.t, e.M, e.estimate, e.stderr, exact,
                        abs(e.estimate - exact) <= e.half_width))
        ctx.check(f"fourth_moment_error_over_ci_x{e.x:g}", abs(e.estimate - exact) / e.half_width,
                  1.0)
    ctx.check("fourth_moment_fitted_C", fm.fitted_c, 1.5)
    ctx.csv("moments", ("kind", "x", "t", "M", "estimate", "stderr", "bound", "pass"), moments)


def suite_commutators(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    h, win = cfg.commutator_h, tuple(cfg.window)
    lo, hi = win[0] - 1.0, win[1] + 1.0

    def smooth(eps):
        return (GridFunction.sample(lo, hi, h, lambda x: x),
                GridFunction.sample(lo, hi, h, np.sin))

    rough_b = drift_from_spec(cfg.rough_drift)

    def rough(eps):
        return GridFunction.sample(lo, hi, h, rough_b), GridFunction.sample(lo, hi, h, np.sin)

    sm = decay_curve(smooth, cfg.eps, "L2", win)
    rg = decay_curve(rough, cfg.eps, "L2", win)
    g2 = window_norm(GridFunction.sample(lo, hi, h, np.sin), win, "L2")  # ||g''|| = ||sin||
    m2 = MollifierKernel(1.0).m2
    rows = []
    worst = 0.0
    for e, n, s in sm.rows():
        pred = m2 * e * e * g2
        worst = max(worst, abs(n / pred - 1))
        rows.append(("smooth", e, n, s, pred))
    rows += [("holder", e, n, s, math.nan) for e, n, s in rg.rows()]
    ctx.check("smooth_relative_deviation_from_taylor", worst, 0.2)
    ctx.check("smooth_slope_low", sm.slope, 1.7, ">=")
    ctx.check("smooth_slope_high", sm.slope, 2.3)
    ctx.check("holder_strictly_decreasing", float(rg.strictly_decreasing), 1.0, "==")
    ctx.csv("decay", ("series", "epsilon", "norm", "slope_so_far", "taylor_prediction"), rows)


def suite_weakform(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    f0 = initial_condition("gauss(0,0.5)")
    rows = []
    # composition identity under simultaneous (dt, h) refinement
    b = drift_from_spec(cfg.drift)
    kernel = MollifierKernel(cfg.composition_eps)
    Wc = sample_brownian(cfg.composition_paths, 4 * cfg.composition_N, cfg.composition_T,
                         cfg.seed)
    hs = (4 * cfg.h, 2 * cfg.h, cfg.h)

    def comp(W, lev):
        u0 = GridFunction.sample(-6, 6, hs[lev], f0)
        return np.mean([composition_identity_check(u0, b, kernel, m, W, cfg.composition_T)
                        .max_defect for m in range(W.M)])

    st = refinement_study(comp, Wc)
    rows += [("composition", lev, n, v) for lev, (n, v) in enumerate(zip(st.steps, st.values))]
    ctx.check("composition_min_refinement_ratio", st.min_ratio, 1.5, ">=")
    # Itô residuals, h fixed
    u0 = GridFunction.sample(-5, 5, cfg.h, f0)
    phi = TestFunction(0.3, 1.5)
    Wr = sample_brownian(cfg.residual_paths, cfg.residual_N, cfg.residual_T, cfg.seed)
    for name in ("zero", "ou"):
        bb = drift_from_spec(name)
        st = refinement_study(
            lambda W, lev: mean_sup_residual_continuity(u0, bb, phi, W), Wr)
        rows += [(f"residual_{name}", lev, n, v)
                 for lev, (n, v) in enumerate(zip(st.steps, st.values))]
        ctx.check(f"residual_{name}_min_refinement_ratio", st.min_ratio, 1.3, ">=")
    ctx.csv("refinement", ("study", "level", "steps", "value"), rows)


def suite_uniqueness(ctx: _Ctx) -> None:
    cfg = ctx.cfg
    b = drift_from_spec(cfg.uniqueness_drift)
    u0 = GridFunction.sample(-5, 5, cfg.uniqueness_h, initial_condition(cfg.initial))
    W = sample_brownian(cfg.uniqueness_M, cfg.uniqueness_N, cfg.T, cfg.seed)
    times = [cfg.T / 4, cfg.T / 2, 3 * cfg.T / 4, cfg.T]
    res = uniqueness_experiment(b, u0, cfg.uniqueness_eps, W, times=times)
    rows = [(e, t, res.distance[i, k], res.stderr[i, k])
            for i, e in enumerate(res.eps) for k, t in enumerate(res.times)]
    ctx.csv("distance", ("epsilon", "t", "distance", "stderr"), rows)
    ctx.check("distance_at_T_strictly_decreasing", float(res.strictly_decreasing_at_T), 1.0, "==")
    ctx.check("distance_trend", res.trend, 1.0, "<")
    ctx.check("aborted_paths", res.n_aborted, 0, "==")
    z = uniqueness_experiment(b, u0.with_values(np.zeros_like(u0.x)), cfg.uniqueness_eps[:2],
                              W.take(range(min(W.M, 8))), times=[cfg.T])
    ctx.check("zero_datum_distance", float(np.max(z.distance)), 0.0, "==")


SUITES: dict[str, Callable[[_Ctx], None]] = {
    "flows": suite_flows,
    "bounds": suite_bounds,
    "commutators": suite_commutators,
    "weakform": suite_weakform,
    "uniqueness": suite_uniqueness,
}
NAMES = (*SUITES, "all")

DESCRIPTIONS = {
    "flows": (
        "Characteristic flows checked against exact solutions. Zero drift: solutions equal u0(x - B_t) and J == 1. "
        "Ornstein-Uhlenbeck drift b = -x: pathwise flow, Jacobian e^{-t} and the continuity "
        "solution against closed forms. Rotation field: conservation of the L2 norm of the "
        "transport solution (divergence-free energy identity) and det(DX) - 1 = O(dt).",
        ("h", "flow_M", "ou_dt", "ou_T", "rotation_dt", "rotation_T", "rotation_h",
         "rotation_paths", "initial")),
    "bounds": (
        "Explicit constants c1, c2, k1, k2 of the inverse-Jacobian moment lemma and Monte "
        "Carlo checks of E|dX_t/dx|^{-2} <= k1 t^{-3/8} exp(k2 x^2) (upper 99% CI edge), "
        "plus the flow fourth-moment bound E|X_t(x)|^4 <= C (|x|^4 + T^4).",
        ("drift", "T", "M", "N", "x_probes", "t_probes", "fourth_x")),
    "commutators": (
        "Mollification commutator (f d/dx)(rho_eps * g) - rho_eps * (f g'): Taylor value "
        "m2 eps^2 ||g''|| and slope 2 for smooth inputs, strict decay for a Holder field "
        "(the commutator lemma gives convergence only).",
        ("eps", "window", "commutator_h", "rough_drift")),
    "weakform": (
        "Ito weak formulation residual of the continuity equation (zero and OU drift) under "
        "coupled dt-halving, and the composition identity V_eps(t, X_t) = V_eps(0, x) + "
        "int R_eps(V, b) ds from the uniqueness argument under (dt, h) refinement.",
        ("drift", "h", "residual_T", "residual_N", "residual_paths", "composition_eps",
         "composition_T", "composition_N", "composition_paths")),
    "uniqueness": (
        "Shadow of the L2 uniqueness theorem: shared-noise distances "
        "E||u^eps - u^{eps/2}||^2 in L2((1+|x|)^2 dx) must decrease along an eps sweep; "
        "zero initial datum gives distance 0.",
        ("uniqueness_drift", "initial", "T", "uniqueness_eps", "uniqueness_M", "uniqueness_N",
         "uniqueness_h")),
}


def describe(name: str) -> str:
    if name == "all":
        lines = ["all: runs every suite in order:"]
        lines += [f"  {n}: {DESCRIPTIONS[n][0].split('.')[0]}." for n in SUITES]
        return "\n".join(lines)
    if name not in DESCRIPTIONS:
        raise UsageError(f"unknown suite {name!r}; valid: {', '.join(NAMES)}")
    text, keys = DESCRIPTIONS[name]
    defaults = ExperimentConfig()
    lines = [f"{name}: {text}", "defaults:"]
    lines += [f"  {k} = {_show(getattr(defaults, k))}" for k in keys]
    return "\n".join(lines)


def _show(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(f"{x:g}" for x in v)
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


def run_suites(cfg: ExperimentConfig, out: Path) -> SuiteReport:
    names = list(SUITES) if cfg.experiment == "all" else [cfg.experiment]
    out.mkdir(parents=True, exist_ok=True)
    report = SuiteReport()
    for name in names:
        ctx = _Ctx(cfg, out, name)
        SUITES[name](ctx)
        report.checks += ctx.checks
    write_csv(out / "checks.csv", ("suite", "check", "measured", "relation", "threshold", "pass"),
              [(c.suite, c.name, c.measured, c.relation, c.threshold, c.passed)
               for c in report.checks])
    return report
