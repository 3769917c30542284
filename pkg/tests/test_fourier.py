import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ellipe

from ellipdist.convex_bodies import ConvexBody
from ellipdist.errors import ConvergenceError, DegenerateBodyError
from ellipdist.fourier import (
    AverageSeries,
    ExponentFit,
    arc_measure_ft,
    decay_envelope,
    decay_envelope_check,
    fit_exponent,
    measure_ft,
    stationary_phase_approx,
    stationary_phase_residual,
    upper_envelope,
)
from ellipdist.measures import DiscreteMeasure, cantor_dust, point_mass, subsample
from ellipdist.mattila import spherical_average

CIRCLE = ConvexBody.circle()
ELLIPSE = ConvexBody.ellipse(2.0, 1.0)
DIRECTIONS = np.linspace(0.0, math.pi, 16, endpoint=False)


def symmetric_pair() -> DiscreteMeasure:
    # the pair +-(1/2, 0) shifted into the unit square; the shift is a phase
    return DiscreteMeasure([(0.0, 0.5), (1.0, 0.5)], [0.5, 0.5], 0.0, 0.01)


def bessel_oracle(r: float) -> float:
    return float(2 * mpmath.pi * mpmath.besselj(0, 2 * mpmath.pi * r))


# --------------------------------------------------------------------------
# measure_ft


def test_point_mass_at_origin_is_one():
    mu = point_mass()
    for xi in [(0, 0), (3.2, -1.0), (100, 7)]:
        assert measure_ft(mu, xi) == pytest.approx(1.0)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 2.5, 7.0])
def test_two_point_interference(t):
    assert abs(measure_ft(symmetric_pair(), (t, 0.0))) == pytest.approx(abs(math.cos(math.pi * t)), abs=1e-14)


def test_cantor_transform_matches_direct_sum():
    mu = cantor_dust(1 / 3, 2)
    direct = sum(w * complex(math.cos(-2 * math.pi * (x + y)), math.sin(-2 * math.pi * (x + y)))
                 for (x, y), w in zip(mu.points, mu.weights))
    assert abs(measure_ft(mu, (1.0, 1.0)) - direct) < 1e-14


def test_transform_shapes():
    mu = cantor_dust(1 / 3, 2)
    assert isinstance(measure_ft(mu, (1, 2)), complex)
    assert measure_ft(mu, np.zeros((4, 3, 2))).shape == (4, 3)


def test_transform_bounded_and_hermitian_on_random_frequencies():
    mu = cantor_dust(1 / 3, 3)
    xi = np.random.default_rng(0).normal(scale=20, size=(1000, 2))
    vals = measure_ft(mu, xi)
    assert np.abs(vals).max() <= 1 + 1e-12
    assert np.abs(measure_ft(mu, -xi) - np.conj(vals)).max() < 1e-14
    assert measure_ft(mu, (0, 0)) == pytest.approx(1.0, abs=1e-15)


# --------------------------------------------------------------------------
# arc_measure_ft


def test_circle_total_mass():
    assert arc_measure_ft(CIRCLE, 1.0, (0, 0)) == pytest.approx(2 * math.pi, rel=1e-14)


@pytest.mark.parametrize("r", [0.1, 1.0, 4.7, 12.3, 20.0])
def test_circle_matches_bessel(r):
    got = arc_measure_ft(CIRCLE, 1.0, (r * 0.6, r * 0.8), 4096)
    want = bessel_oracle(r)
    # J0 zeros aside, relative error; near a zero use the absolute scale 2 pi
    assert abs(got - want) <= 1e-8 * max(abs(want), 1e-3)


def test_ellipse_perimeter_matches_elliptic_integral():
    # perimeter = 4 b1 E(1 - b2^2 / b1^2)
    assert arc_measure_ft(ELLIPSE, 1.0, (0, 0)) == pytest.approx(8 * ellipe(0.75), rel=1e-13)
    assert arc_measure_ft(ELLIPSE, 1.0, (0, 0)) == pytest.approx(9.68845, abs=1e-5)


def test_arc_transform_rejects_nonpositive_t():
    with pytest.raises(ValueError):
        arc_measure_ft(CIRCLE, 0.0, (1, 0))


def test_node_count_must_be_power_of_two():
    with pytest.raises(ValueError):
        arc_measure_ft(CIRCLE, 1.0, (1, 0), nodes=1000)
    with pytest.raises(ValueError):
        arc_measure_ft(CIRCLE, 1.0, (1, 0), nodes=128)


def test_convergence_check_raises_when_underresolved():
    with pytest.raises(ConvergenceError):
        arc_measure_ft(CIRCLE, 100.0, (1, 0), nodes=256, check=True)


@pytest.mark.parametrize("body", [CIRCLE, ELLIPSE], ids=["circle", "ellipse"])
def test_node_doubling_stable(body):
    t = np.linspace(1, 100, 200)
    x = np.broadcast_to(np.array([0.6, 0.8]), (200, 2))
    a = arc_measure_ft(body, t, x, 4096)
    b = arc_measure_ft(body, t, x, 8192)
    assert np.abs(a - b).max() < 1e-8


def test_sampled_body_uses_its_own_samples():
    th = 2 * math.pi * np.arange(4096) / 4096
    S = ConvexBody.sampled(np.column_stack([2 * np.cos(th), np.sin(th)]))
    assert arc_measure_ft(S, 3.0, (0.3, 0.2)) == pytest.approx(arc_measure_ft(ELLIPSE, 3.0, (0.3, 0.2)), abs=1e-5)


# --------------------------------------------------------------------------
# Stationary phase


def test_leading_term_close_to_bessel_at_trho_10():
    approx = stationary_phase_approx(CIRCLE, 10.0, (1.0, 0.0))
    assert approx == pytest.approx(2 / math.sqrt(10) * math.cos(2 * math.pi * 9.875))
    assert abs(approx - bessel_oracle(10.0)) < 0.01


@pytest.mark.parametrize("m", [20, 41, 77])
def test_cosine_zero_leaves_only_remainder(m):
    trho = 0.125 + 0.25 + m / 2
    assert abs(stationary_phase_approx(CIRCLE, trho, (1, 0))) < 1e-12
    assert abs(arc_measure_ft(CIRCLE, trho, (1, 0))) <= 1.0 * trho**-1.5


def test_ellipse_leading_term_within_fitted_constant():
    rep = stationary_phase_residual(ELLIPSE, (1, 0), (10.0, 100.0), points=1000)
    t = 20.0
    err = abs(arc_measure_ft(ELLIPSE, t, (1, 0), 8192) - stationary_phase_approx(ELLIPSE, t, (1, 0)))
    assert err <= rep.constant * (t * 2) ** -1.5 * (1 + 1e-9)


def test_stationary_phase_rejects_small_argument():
    with pytest.raises(ValueError):
        stationary_phase_approx(CIRCLE, 0.5, (1, 0))


def test_amplitude_variants_agree_on_circle():
    t = np.geomspace(2, 50, 20)
    x = np.broadcast_to([0.0, 1.0], (20, 2))
    a = stationary_phase_approx(CIRCLE, t, x, "support")
    b = stationary_phase_approx(CIRCLE, t, x, "curvature")
    assert np.allclose(a, b, rtol=1e-12)
    with pytest.raises(ValueError):
        stationary_phase_approx(CIRCLE, 5.0, (1, 0), "bogus")


def test_circle_residual_constant_and_slope():
    rep = stationary_phase_residual(CIRCLE, (1, 0))
    assert rep.constant < 1
    assert rep.envelope_fit.slope <= -1.4


# --------------------------------------------------------------------------
# Decay envelope


def test_circle_decay_slope_near_half():
    fit = decay_envelope_check(CIRCLE, DIRECTIONS, (4, 256))
    assert fit.slope == pytest.approx(-0.5, abs=0.03)


def test_ellipse_decay_slope():
    assert decay_envelope_check(ELLIPSE, DIRECTIONS, (4, 256)).slope <= -0.45


def test_decay_envelope_accepts_unit_vectors():
    dirs = np.column_stack([np.cos(DIRECTIONS), np.sin(DIRECTIONS)])
    a = decay_envelope(CIRCLE, dirs, (4, 32), points=64)
    b = decay_envelope(CIRCLE, DIRECTIONS, (4, 32), points=64)
    assert np.allclose(a.values, b.values, rtol=1e-12)


def test_degenerate_body_has_no_fit():
    th = 2 * math.pi * np.arange(1024) / 1024
    # a rounded square: curvature almost vanishes along the flat sides
    r = (np.abs(np.cos(th)) ** 8 + np.abs(np.sin(th)) ** 8) ** -0.125
    flat = ConvexBody.sampled(np.column_stack([r * np.cos(th), r * np.sin(th)]), validate=False)
    with pytest.raises(DegenerateBodyError):
        decay_envelope_check(flat, DIRECTIONS)


# --------------------------------------------------------------------------
# Fits and series


def test_fit_exact_power_law():
    g = np.array([4.0, 8.0, 16.0, 32.0])
    fit = fit_exponent(g, 2 * g**-0.63)
    assert abs(fit.slope + 0.63) < 1e-12
    assert fit.intercept == pytest.approx(math.log(2), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_constant_series():
    fit = fit_exponent([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    assert fit.slope == 0.0


@given(st.floats(-3, 3), st.floats(0.01, 100))
def test_fit_reproduces_synthetic_power_laws(p, c):
    g = np.geomspace(1, 1000, 17)
    assert abs(fit_exponent(g, c * g**p).slope - p) < 1e-10


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_exponent([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_exponent([1.0, 2.0, 3.0], [1.0, 0.0, 2.0])


def test_fit_range_and_series_input():
    g = np.geomspace(1, 100, 30)
    series = AverageSeries(g, np.where(g < 10, g**-1.0, g**-2.0))
    assert fit_exponent(series, range=(1, 9)).slope == pytest.approx(-1.0)


def test_fit_json_keys():
    d = json.loads(fit_exponent([1.0, 2.0, 4.0], [1.0, 2.0, 4.0]).to_json())
    assert set(d) == {"slope", "intercept", "r_squared", "range"}


def test_average_series_validation():
    with pytest.raises(ValueError):
        AverageSeries([1.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        AverageSeries([1.0, 2.0], [0.0, -1.0])


def test_upper_envelope_picks_bin_maxima():
    g = np.geomspace(1, 16, 41)
    v = np.abs(np.sin(7 * g)) * g**-1.0
    ex, ey = upper_envelope(g, v, bins_per_octave=1)
    assert len(ex) == 4
    for lo, x, y in zip([1, 2, 4, 8], ex, ey):
        m = (g >= lo) & (g < 2 * lo * (1 - 1e-12))
        assert y == v[m].max() and lo <= x < 2 * lo


def test_cantor_average_envelope_obeys_decay_bound():
    mu = cantor_dust(1 / 3, 5)
    g = np.geomspace(4, 3**5 / 4, 200)
    ex, ey = upper_envelope(g, spherical_average(mu, g, method="pairs"), 2)
    assert fit_exponent(ex, ey).slope <= -mu.alpha / 2 + 0.15


def test_average_series_csv(tmp_path):
    s = AverageSeries([1.0, 2.0, 3.0], [0.5, 0.25, 0.125], body="circle", measure="m")
    s.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("#")
    assert lines[1] == "1.0,0.5"


def test_subsampled_transform_is_bounded():
    mu = subsample(cantor_dust(1 / 3, 4), 50, 1)
    xi = np.random.default_rng(1).uniform(-50, 50, size=(200, 2))
    assert np.abs(measure_ft(mu, xi)).max() <= 1 + 1e-12


def test_exponent_fit_dict_serialises_range_as_list():
    d = ExponentFit(1.0, 0.0, 1.0, (1.0, 2.0)).to_dict()
    assert d["range"] == [1.0, 2.0]
