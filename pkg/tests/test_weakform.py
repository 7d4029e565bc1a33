from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdechar.errors import AlignmentError, ResolutionError, WindowError
from spdechar.field import CutoffSpec, MollifierKernel, constant, ou, rotation, tanh, zero
from spdechar.grid import GridFunction
from spdechar.paths import sample_brownian
from spdechar.solution import TestFunction, TestFunction2D, initial_condition
from spdechar.weakform import (RefinementStudy, composition_identity_check,
                               continuity_residuals, continuity_series,
                               ito_residual_continuity, ito_residual_transport,
                               mean_sup_residual_continuity, mean_sup_residual_transport,
                               refinement_study,
                               transport_series_2d, uniqueness_experiment)

H = 1 / 64
GAUSS = initial_condition("gauss(0,0.5)")


def _u0(f=GAUSS, lo=-5.0, hi=5.0, h=H):
    return GridFunction.sample(lo, hi, h, f)


def test_zero_solution_has_zero_residual():
    W = sample_brownian(1, 20, 0.2, 1)
    u0 = _u0(np.zeros_like)
    r = ito_residual_continuity(continuity_series(u0, tanh(0.5), W, 0), tanh(0.5),
                                TestFunction(0, 1), 0, W)
    assert np.all(r.residual == 0)
    assert all(np.all(np.isfinite(c)) for c in r.components.values())


def test_residual_starts_at_zero():
    W = sample_brownian(1, 20, 0.2, 2)
    u0 = _u0()
    r = ito_residual_continuity(continuity_series(u0, ou(), W, 0), ou(), TestFunction(0, 1), 0, W)
    assert r.residual[0] == 0.0
    assert r.times[-1] == pytest.approx(0.2)


def test_disjoint_test_function_gives_zero_residual():
    W = sample_brownian(1, 50, 0.05, 3)
    u0 = _u0(initial_condition("bump(-2.5,0.5)"))
    r = ito_residual_continuity(continuity_series(u0, zero(), W, 0), zero(),
                                TestFunction(2.5, 0.5), 0, W)
    assert np.max(np.abs(r.residual)) <= 1e-10


def test_brownian_shift_residual_is_small():
    W = sample_brownian(1, 400, 0.25, 4)
    u0 = _u0(h=1 / 256)
    r = ito_residual_continuity(continuity_series(u0, zero(), W, 0), zero(),
                                TestFunction(0.3, 1.5), 0, W)
    assert r.sup < 0.05
    assert r.sup < 0.2 * np.max(np.abs(r.components["martingale"]))


def test_alignment_errors():
    W = sample_brownian(1, 5, 0.1, 5)
    u0 = _u0()
    series = continuity_series(u0, zero(), W, 0)
    W_short = sample_brownian(1, 3, 0.1, 5)
    with pytest.raises(AlignmentError):
        ito_residual_continuity(series, zero(), TestFunction(), 0, W_short)
    other = series[:2] + [_u0(h=H / 2)]
    with pytest.raises(AlignmentError):
        ito_residual_continuity(other, zero(), TestFunction(), 0, W)


def test_vectorized_residuals_match_per_path():
    W = sample_brownian(3, 40, 0.2, 6)
    u0, phi, b = _u0(), TestFunction(0.2, 1.2), tanh(0.7)
    R = continuity_residuals(u0, b, phi, W)
    for m in range(3):
        r = ito_residual_continuity(continuity_series(u0, b, W, m), b, phi, m, W)
        np.testing.assert_allclose(R[m], r.residual, rtol=0, atol=1e-15)
    assert mean_sup_residual_continuity(u0, b, phi, W) == pytest.approx(
        np.mean(np.max(np.abs(R), axis=1)))


@settings(max_examples=15, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4))
def test_residual_is_linear_in_solution(a, c):
    W = sample_brownian(1, 20, 0.1, 7)
    b, phi = tanh(0.5), TestFunction(0, 1.5)
    su = continuity_series(_u0(), b, W, 0)
    sv = continuity_series(_u0(initial_condition("bump(0.5,1)")), b, W, 0)
    mix = [a * u + c * v for u, v in zip(su, sv)]
    rm = ito_residual_continuity(mix, b, phi, 0, W).residual
    ru = ito_residual_continuity(su, b, phi, 0, W).residual
    rv = ito_residual_continuity(sv, b, phi, 0, W).residual
    scale = abs(a) * np.max(np.abs(ru)) + abs(c) * np.max(np.abs(rv)) + 1e-300
    assert np.max(np.abs(rm - (a * ru + c * rv))) <= 1e-12 * max(scale, 1e-3)


def test_translation_invariance_zero_drift():
    W = sample_brownian(4, 40, 0.2, 8)
    s = 64 * H  # whole number of cells
    base = mean_sup_residual_continuity(_u0(), zero(), TestFunction(0.2, 1.2), W)
    moved = mean_sup_residual_continuity(_u0(lambda x: GAUSS(x - s)), zero(),
                                         TestFunction(0.2 + s, 1.2), W)
    assert abs(base - moved) <= 1e-10


def test_localization_leaves_residual_unchanged():
    W = sample_brownian(1, 40, 0.2, 9)
    b = tanh(0.5)
    series = continuity_series(_u0(), b, W, 0)
    phi = TestFunction(0.2, 1.2)
    r = ito_residual_continuity(series, b, phi, 0, W).residual
    rl = ito_residual_continuity(series, b, phi.localized(CutoffSpec(2.0)), 0, W).residual
    assert np.max(np.abs(r - rl)) <= 1e-10
    # a cut-off inside the support does change it
    rs = ito_residual_continuity(series, b, phi.localized(CutoffSpec(0.5)), 0, W).residual
    assert np.max(np.abs(r - rs)) > 1e-4


def test_refinement_study_couples_noise():
    W = sample_brownian(2, 8, 1.0, 10)
    seen = []

    def measure(Wl, lev):
        seen.append(Wl.B[:, -1].copy())
        return 8.0 / Wl.N

    st_ = refinement_study(measure, W)
    assert st_.steps == (2, 4, 8)
    assert st_.ratios == (2.0, 2.0) and st_.min_ratio == 2.0
    np.testing.assert_allclose(seen[0], seen[2], atol=1e-14)
    assert RefinementStudy((1, 2), (1.0, 0.0)).ratios == (float("inf"),)


# --- 2-D transport ----------------------------------------------------------

AX = (np.linspace(-3, 3, 97), np.linspace(-3, 3, 97))
PHI2 = TestFunction2D(TestFunction(0.2, 1.5), TestFunction(-0.1, 1.5))


def test_transport_residual_of_zero():
    W = sample_brownian(1, 5, 0.05, 11, d=2)
    series = transport_series_2d(lambda X, Y: 0 * X, rotation(), W, 0, AX)
    r = ito_residual_transport(series, rotation(), PHI2, 0, W)
    assert np.all(r.residual == 0)


def test_transport_constant_solution_drift_vanishes():
    W = sample_brownian(1, 10, 0.05, 12, d=2)
    series = transport_series_2d(lambda X, Y: 1.0 + 0 * X, rotation(), W, 0, AX)
    r = ito_residual_transport(series, rotation(), PHI2, 0, W)
    assert np.max(np.abs(r.components["drift"])) <= 1e-12
    assert r.sup < (AX[0][1] - AX[0][0]) ** 2


def test_transport_series_from_grid_matches_callable():
    W = sample_brownian(1, 10, 0.05, 13, d=2)
    f = lambda X, Y: np.exp(-(X**2 + Y**2))  # noqa: E731
    g = GridFunction(AX, f(*np.meshgrid(*AX, indexing="ij")))
    a = transport_series_2d(f, rotation(), W, 0, AX)[-1].values
    b = transport_series_2d(g, rotation(), W, 0, AX)[-1].values
    assert np.max(np.abs(a - b)) < 5e-3


def test_transport_bump_residual_small():
    W = sample_brownian(1, 100, 0.1, 14, d=2)
    f = lambda X, Y: np.exp(-((X - 0.5) ** 2 + Y**2) / 0.32)  # noqa: E731
    r = ito_residual_transport(transport_series_2d(f, rotation(), W, 0, AX), rotation(),
                               PHI2, 0, W)
    assert r.sup < 0.1 * np.max(np.abs(r.components["martingale"]))


# --- composition identity ---------------------------------------------------

def test_composition_zero_datum():
    W = sample_brownian(1, 50, 0.25, 15)
    r = composition_identity_check(_u0(np.zeros_like, h=1 / 128), tanh(0.01),
                                   MollifierKernel(0.1), 0, W, 0.25)
    assert np.all(r.lhs == 0) and np.all(r.rhs == 0)


def test_composition_constant_drift_is_transport_identity():
    W = sample_brownian(1, 200, 0.5, 16)
    r = composition_identity_check(_u0(h=1 / 256, lo=-6, hi=6), constant(0.3),
                                   MollifierKernel(0.1), 0, W, 0.5)
    assert r.max_defect <= (1 / 256) ** 2 * 10 + 0.5 / 200


def test_composition_window_error():
    W = sample_brownian(1, 10, 0.5, 17)
    with pytest.raises(WindowError):
        composition_identity_check(_u0(lo=-1.2, hi=1.2), constant(3.0), MollifierKernel(0.1), 0,
                                   W, 0.5)


# --- uniqueness -------------------------------------------------------------

def test_uniqueness_zero_datum_distance_zero():
    W = sample_brownian(8, 20, 1.0, 18)
    u0 = _u0(np.zeros_like, h=1 / 128)
    r = uniqueness_experiment(tanh(0.01), u0, [0.2, 0.1], W)
    assert np.all(r.distance == 0)
    assert r.trend == 0.0


def test_uniqueness_smooth_drift_distances_shrink():
    W = sample_brownian(40, 50, 1.0, 19)
    u0 = _u0(initial_condition("bump(0,1)"), h=1 / 160)
    r = uniqueness_experiment(tanh(0.01), u0, [0.2, 0.1, 0.05], W, times=[0.5, 1.0])
    assert r.strictly_decreasing_at_T and r.trend < 1
    assert r.distance.shape == (3, 2) and not r.tainted


def test_uniqueness_validation():
    W = sample_brownian(2, 10, 1.0, 20)
    with pytest.raises(ValueError):
        uniqueness_experiment(tanh(0.01), _u0(h=1 / 128), [0.1, 0.2], W)
    with pytest.raises(ResolutionError):
        uniqueness_experiment(tanh(0.01), _u0(h=1 / 16), [0.2, 0.1], W)


def test_transport_residual_refines_under_dt_halving():
    axes = (np.linspace(-3, 3, 193),) * 2
    f = lambda X, Y: np.exp(-((X - 0.5) ** 2 + Y**2) / 0.32)  # noqa: E731
    W = sample_brownian(32, 160, 0.1, 42, d=2)
    st_ = refinement_study(
        lambda Wl, lev: mean_sup_residual_transport(f, rotation(), PHI2, Wl, axes, range(32)), W)
    assert st_.min_ratio >= 1.3
