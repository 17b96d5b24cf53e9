import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from drpredict import DomainError, OrderError, UnsupportedConfig, ValidationError
from drpredict.inference import (
    IMMethod,
    IntervalEstimate,
    estimate_robust,
    im_interval,
    plain_im_interval,
    two_step_interval,
)
from drpredict.sample import ExperimentalSample
from drpredict.solver import RobustConfig

Z_TWO_SIDED = 1.959964
Z_ONE_SIDED = 1.644854


def _sample(y1, y0):
    y = np.concatenate([y1, y0])
    t = np.concatenate([np.ones(len(y1), dtype=int), np.zeros(len(y0), dtype=int)])
    return ExperimentalSample(y, t)


def _case1(rng, n):
    n1 = rng.binomial(n, 0.3)
    return _sample(rng.normal(2.0, 2.0, n1), rng.normal(0.2, 1.0, n - n1))


CFG = RobustConfig(0.1, 2.0)


# --------------------------------------------------------------- im_interval


def test_point_identified_reduces_to_two_sided_z():
    est = im_interval(1.5, 1.5, 2.0, 2.0, n=400, alpha=0.05)
    assert est.c_values[0] == pytest.approx(Z_TWO_SIDED, abs=1e-5)
    assert est.lower == pytest.approx(1.5 - Z_TWO_SIDED * 2.0 / 20.0, abs=1e-6)
    assert est.upper == pytest.approx(1.5 + Z_TWO_SIDED * 2.0 / 20.0, abs=1e-6)
    assert est.method is IMMethod.IM


def test_wide_interval_reaches_one_sided_z():
    est = im_interval(0.0, 50.0, 1.0, 1.0, n=400, alpha=0.05)
    assert est.c_values[0] == pytest.approx(Z_ONE_SIDED, abs=1e-6)


def test_critical_value_against_independent_root_finder():
    for w, alpha in [(0.5, 0.05), (1.0, 0.05), (2.0, 0.01), (3.0, 0.10), (0.1, 0.20)]:
        expected = brentq(
            lambda c: ndtr(c + w) - ndtr(-c) - (1 - alpha),
            ndtri(1 - alpha) - 1e-9,
            ndtri(1 - alpha / 2) + 1e-9,
            xtol=1e-12,
        )
        n, sd = 2500, 3.0
        width = w * sd / math.sqrt(n)
        est = im_interval(0.0, width, sd, sd, n=n, alpha=alpha)
        assert est.c_values[0] == pytest.approx(expected, abs=1e-8), (w, alpha)
        assert est.lower == pytest.approx(-expected * sd / 50.0, abs=1e-8)


def test_zero_sd_degenerates_to_estimated_range():
    est = im_interval(1.0, 2.0, 0.0, 0.0, n=100, alpha=0.05)
    assert (est.lower, est.upper) == (1.0, 2.0)


def test_asymmetric_sds_extend_each_side_separately():
    est = im_interval(0.0, 1.0, 1.0, 3.0, n=100, alpha=0.05)
    c = est.c_values[0]
    assert est.lower == pytest.approx(-c * 0.1)
    assert est.upper == pytest.approx(1.0 + c * 0.3)


def test_tiny_inversion_swaps_with_warning():
    with pytest.warns(UserWarning, match="swap"):
        est = im_interval(1.0 + 5e-11, 1.0, 0.5, 2.0, n=100, alpha=0.05)
    ref = im_interval(1.0, 1.0 + 5e-11, 2.0, 0.5, n=100, alpha=0.05)
    assert est.lower == pytest.approx(ref.lower)
    assert est.upper == pytest.approx(ref.upper)


def test_material_inversion_raises():
    with pytest.raises(OrderError):
        im_interval(1.0 + 1e-6, 1.0, 0.5, 0.5, n=100, alpha=0.05)


def test_im_domain_errors():
    with pytest.raises(DomainError):
        im_interval(0.0, 1.0, 1.0, 1.0, n=100, alpha=0.0)
    with pytest.raises(DomainError):
        im_interval(0.0, 1.0, 1.0, 1.0, n=100, alpha=1.0)
    with pytest.raises(DomainError):
        im_interval(0.0, 1.0, 1.0, 1.0, n=0, alpha=0.05)
    with pytest.raises(DomainError):
        im_interval(0.0, 1.0, -0.1, 1.0, n=100, alpha=0.05)


@settings(max_examples=200, deadline=None)
@given(
    w=st.floats(min_value=0.0, max_value=100.0),
    alpha=st.floats(min_value=0.01, max_value=0.30),
)
def test_critical_value_stays_in_bracket(w, alpha):
    n, sd = 10_000, 1.0
    est = im_interval(0.0, w * sd / 100.0, sd, sd, n=n, alpha=alpha)
    c = est.c_values[0]
    assert ndtri(1 - alpha) - 1e-9 <= c <= ndtri(1 - alpha / 2) + 1e-9


def test_im_monotone_in_alpha():
    prev = None
    for alpha in (0.01, 0.05, 0.10, 0.20):
        est = im_interval(0.0, 1.0, 2.0, 2.0, n=100, alpha=alpha)
        if prev is not None:
            assert est.lower >= prev.lower - 1e-12
            assert est.upper <= prev.upper + 1e-12
        prev = est


# --------------------------------------------------------- IntervalEstimate


def test_interval_estimate_validation():
    with pytest.raises(ValidationError):
        IntervalEstimate(2.0, 1.0, 0.05, IMMethod.IM)
    with pytest.raises(ValidationError):
        IntervalEstimate(0.0, 1.0, 1.5, IMMethod.IM)
    with pytest.raises(ValidationError):
        IntervalEstimate(math.nan, math.nan, 0.05, IMMethod.IM)  # no failed first step
    ok = IntervalEstimate(0.0, 2.0, 0.05, "im")
    assert ok.length == 2.0
    assert ok.contains(1.3) and not ok.contains(2.1)
    stopped = IntervalEstimate(
        math.nan, math.nan, 0.05, IMMethod.IM_BONFERRONI,
        first_step=(-0.1, 0.2), rejected_first_step=False,
    )
    assert not stopped.contains(0.0)
    assert math.isnan(stopped.length)


# ----------------------------------------------------------- estimate_robust


def test_delta_zero_is_classic_ate_inference():
    rng = np.random.default_rng(1)
    s = _case1(rng, 3000)
    est = estimate_robust(s, RobustConfig(0.0, 2.0), "sharp")
    assert est.tau_p == est.tau_star == est.tau_o
    assert est.sd_p == est.sd_o == est.sigma.sigma_tau
    iv = plain_im_interval(s, RobustConfig(0.0, 2.0), "sharp", alpha=0.05)
    half = Z_TWO_SIDED * est.sigma.sigma_tau / math.sqrt(3000)
    assert iv.lower == pytest.approx(est.tau_star - half, abs=1e-6)
    assert iv.upper == pytest.approx(est.tau_star + half, abs=1e-6)


def test_negative_effect_orders_endpoints():
    rng = np.random.default_rng(8)
    n1 = 900
    s = _sample(rng.normal(-2.0, 2.0, n1), rng.normal(-0.2, 1.0, 2100))
    est = estimate_robust(s, CFG, "neyman")
    # negative tau*: shrinkage moves the estimates up, so tau_p >= tau_o
    assert est.tau_p >= est.tau_o
    iv = plain_im_interval(s, CFG, "neyman")
    assert iv.lower < iv.upper < 0.0


# ---------------------------------------------------------- two-step interval


def test_two_step_preconditions():
    rng = np.random.default_rng(2)
    s = _case1(rng, 600)
    with pytest.raises(UnsupportedConfig):
        two_step_interval(s, RobustConfig(0.5, 1.0))
    with pytest.raises(DomainError):
        two_step_interval(s, CFG, alpha=0.05, beta=0.05)
    with pytest.raises(DomainError):
        two_step_interval(s, CFG, alpha=0.05, beta=-0.01)
    with pytest.raises(DomainError):
        two_step_interval(s, CFG, grid_points=24)
    with pytest.raises(DomainError):
        two_step_interval(s, CFG, alpha=1.0)


def test_two_step_stops_when_zero_not_rejected():
    rng = np.random.default_rng(3)
    s = _sample(rng.normal(0.0, 1.0, 500), rng.normal(0.0, 1.0, 500))
    est = two_step_interval(s, CFG, "neyman")
    assert est.rejected_first_step is False
    assert math.isnan(est.lower) and math.isnan(est.upper)
    assert est.first_step[0] < 0.0 < est.first_step[1]
    assert not est.contains(0.0)


def test_two_step_diagnostics_and_critical_range():
    rng = np.random.default_rng(4)
    s = _case1(rng, 2000)
    est = two_step_interval(s, CFG, "sharp", alpha=0.05, beta=0.045, grid_points=51)
    assert est.rejected_first_step is True
    assert est.method is IMMethod.IM_BONFERRONI
    assert est.grid_points == 51
    assert est.alpha == 0.05
    assert est.first_step[0] > 0.0
    alpha2 = 0.005
    lo_c, hi_c = est.c_values
    assert ndtri(1 - alpha2) - 1e-9 <= lo_c <= hi_c <= ndtri(1 - alpha2 / 2) + 1e-9


def test_two_step_contains_plain_im():
    rng = np.random.default_rng(5)
    for n in (500, 2000):
        for method in ("sharp", "neyman"):
            s = _case1(rng, n)
            union = two_step_interval(s, CFG, method)
            im = plain_im_interval(s, CFG, method)
            assert union.lower <= im.lower + 1e-12
            assert union.upper >= im.upper - 1e-12


def test_two_step_monotone_in_alpha():
    rng = np.random.default_rng(6)
    s = _case1(rng, 2000)
    wide = two_step_interval(s, CFG, "sharp", alpha=0.01, beta=0.005)
    narrow = two_step_interval(s, CFG, "sharp", alpha=0.10, beta=0.045)
    assert wide.lower <= narrow.lower and wide.upper >= narrow.upper


def test_two_step_methods_agree_closely():
    rng = np.random.default_rng(7)
    s = _case1(rng, 4000)
    a = two_step_interval(s, CFG, "sharp")
    b = two_step_interval(s, CFG, "neyman")
    assert a.lower == pytest.approx(b.lower, abs=0.06)
    assert a.upper == pytest.approx(b.upper, abs=0.06)


def test_case1_reproduces_reference_averages():
    # the reference per-case averages pin down the (unstated) design size at
    # roughly n=500; endpoint averages scale as 1/sqrt(n) beyond the fixed
    # population range [1.576, 1.722]
    rng = np.random.default_rng(99)
    reps, n = 300, 500
    lo_ts, hi_ts, lo_im, hi_im, ratios = [], [], [], [], []
    for _ in range(reps):
        s = _case1(rng, n)
        union = two_step_interval(s, CFG, "sharp")
        im = plain_im_interval(s, CFG, "sharp")
        lo_im.append(im.lower)
        hi_im.append(im.upper)
        if union.rejected_first_step:
            lo_ts.append(union.lower)
            hi_ts.append(union.upper)
            ratios.append(union.length / im.length)
    assert len(lo_ts) == reps  # tau* = 1.8 is far from 0 at n=500
    assert np.mean(lo_ts) == pytest.approx(1.235, abs=0.05)
    assert np.mean(hi_ts) == pytest.approx(2.080, abs=0.05)
    assert np.mean(lo_im) == pytest.approx(1.299, abs=0.05)
    assert np.mean(hi_im) == pytest.approx(2.000, abs=0.05)
    assert np.mean(ratios) == pytest.approx(1.207, abs=0.1)
