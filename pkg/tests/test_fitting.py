import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinbath.errors import DomainError, FitError, FitRangeError
from spinbath.fitting import (
    CoherenceCurve,
    fit_power_law,
    fit_stretched_exponential,
)


def _curve(t2, eta, n=60, t_max_over_t2=3.0, stderr=None):
    t = np.linspace(0.0, t_max_over_t2 * t2, n)
    v = np.exp(-((t / t2) ** eta))
    e = np.zeros_like(t) if stderr is None else stderr
    return CoherenceCurve(times_s=t, values=v, stderr=e)


def test_exact_recovery_on_clean_curve():
    fit = fit_stretched_exponential(_curve(1.3e-3, 2.4))
    assert fit.t2 == pytest.approx(1.3e-3, rel=1e-8)
    assert fit.eta == pytest.approx(2.4, rel=1e-8)
    assert fit.residual < 1e-10


@given(
    t2=st.floats(min_value=1e-6, max_value=1e2),
    eta=st.floats(min_value=0.7, max_value=4.5),
)
@settings(max_examples=60)
def test_recovery_across_scales(t2, eta):
    fit = fit_stretched_exponential(_curve(t2, eta))
    assert fit.t2 == pytest.approx(t2, rel=1e-6)
    assert fit.eta == pytest.approx(eta, rel=1e-6)


@given(scale=st.floats(min_value=1e-6, max_value=1e6))
@settings(max_examples=40)
def test_time_axis_scale_equivariance(scale):
    base = _curve(2.0e-3, 2.2)
    scaled = CoherenceCurve(
        times_s=base.times_s * scale, values=base.values, stderr=base.stderr
    )
    f0 = fit_stretched_exponential(base)
    f1 = fit_stretched_exponential(scaled)
    assert f1.t2 == pytest.approx(f0.t2 * scale, rel=1e-9)
    assert f1.eta == pytest.approx(f0.eta, rel=1e-9)


def test_point_order_is_irrelevant_to_power_law():
    pts = [(1.0, 2.0), (2.0, 0.5), (4.0, 0.125), (8.0, 0.03125)]
    f0 = fit_power_law(pts)
    f1 = fit_power_law(list(reversed(pts)))
    assert (f0.coefficient, f0.exponent) == (f1.coefficient, f1.exponent)


def test_weighting_prefers_tight_points():
    # same clean model plus one wildly wrong point with a huge stderr:
    # the weighted fit should shrug it off, the unweighted fit should not
    t2, eta = 1.0, 2.0
    t = np.linspace(0.0, 3.0, 40)
    v = np.exp(-((t / t2) ** eta))
    v_bad = v.copy()
    v_bad[20] = min(1.0, v[20] + 0.4)
    e = np.full_like(t, 1e-4)
    e[20] = 10.0
    fit_w = fit_stretched_exponential(CoherenceCurve(t, v_bad, e))
    fit_u = fit_stretched_exponential(CoherenceCurve(t, v_bad, e), weighted=False)
    assert abs(fit_w.t2 - t2) < abs(fit_u.t2 - t2)
    assert fit_w.t2 == pytest.approx(t2, rel=5e-3)


def test_stderr_floor_prevents_shoulder_pinning():
    # near-zero stderr on the flat shoulder must not dominate the knee
    t2, eta = 1.0, 2.0
    t = np.linspace(0.0, 3.0, 50)
    v = np.exp(-((t / t2) ** eta))
    e = np.where(t < 0.3, 1e-12, 1e-2)
    fit = fit_stretched_exponential(CoherenceCurve(t, v, e))
    assert fit.t2 == pytest.approx(t2, rel=1e-6)
    assert fit.eta == pytest.approx(eta, rel=1e-6)


def test_all_zero_stderr_means_unweighted():
    fit = fit_stretched_exponential(_curve(0.5, 1.8))
    assert fit.t2 == pytest.approx(0.5, rel=1e-8)


def test_floor_excludes_deep_tail():
    t2, eta = 1.0, 2.0
    t = np.linspace(0.0, 4.0, 80)
    v = np.exp(-((t / t2) ** eta))
    # corrupt the values below the default floor; they must not matter
    v_corrupt = np.where(v < 0.02, np.abs(np.sin(57.0 * t)) * 0.015, v)
    fit = fit_stretched_exponential(CoherenceCurve(t, v_corrupt, np.zeros_like(t)))
    assert fit.t2 == pytest.approx(t2, rel=1e-6)


def test_non_decaying_curve_rejected():
    t = np.linspace(0.0, 1.0, 20)
    v = np.full_like(t, 0.97)
    with pytest.raises(FitRangeError, match="0.9"):
        fit_stretched_exponential(CoherenceCurve(t, v, np.zeros_like(t)))


def test_too_few_points_rejected():
    t = np.linspace(0.0, 1.0, 5)
    v = np.exp(-(t**2))
    with pytest.raises(FitRangeError, match="8"):
        fit_stretched_exponential(CoherenceCurve(t, v, np.zeros_like(t)))


def test_too_few_points_above_floor_rejected():
    # plenty of samples but nearly all below the floor
    t = np.linspace(0.0, 50.0, 40)
    v = np.exp(-((t / 1.0) ** 2))
    with pytest.raises(FitRangeError, match="floor"):
        fit_stretched_exponential(CoherenceCurve(t, v, np.zeros_like(t)))


def test_eta_outside_trusted_range_rejected():
    with pytest.raises(FitError, match="eta"):
        fit_stretched_exponential(_curve(1.0, 0.2, n=200, t_max_over_t2=40.0))


def test_mismatched_arrays_rejected():
    with pytest.raises(DomainError):
        CoherenceCurve(np.arange(4.0), np.arange(5.0), np.zeros(4))


def test_curve_arrays_write_protected():
    c = _curve(1.0, 2.0)
    with pytest.raises(ValueError):
        c.values[0] = 0.5


def test_fit_json_keys():
    d = fit_stretched_exponential(_curve(1.0, 2.0)).to_json_dict()
    assert set(d) == {"t2_s", "eta", "stderr_t2_s", "stderr_eta", "rms_residual"}
    assert all(isinstance(v, float) for v in d.values())


@given(
    c=st.floats(min_value=1e-8, max_value=1e8),
    p=st.floats(min_value=-4.0, max_value=4.0),
)
@settings(max_examples=60)
def test_power_law_exact_on_noiseless_data(c, p):
    xs = np.array([0.5, 1.0, 3.0, 10.0, 40.0])
    pts = [(x, c * x**p) for x in xs]
    fit = fit_power_law(pts)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.coefficient == pytest.approx(c, rel=1e-9)
    assert fit.stderr_exponent < 1e-9


def test_power_law_sigma_weighting():
    # one outlier with giant sigma should barely move the weighted fit
    pts = [(1.0, 1.0, 1e-6), (2.0, 0.25, 1e-6), (4.0, 0.0625, 1e-6), (8.0, 1.0, 1e3)]
    fit = fit_power_law(pts)
    assert fit.exponent == pytest.approx(-2.0, abs=1e-4)


def test_power_law_rejects_nonpositive():
    with pytest.raises(DomainError):
        fit_power_law([(1.0, 1.0), (2.0, -0.5), (3.0, 0.1)])
    with pytest.raises(DomainError):
        fit_power_law([(0.0, 1.0), (2.0, 0.5), (3.0, 0.1)])


def test_power_law_needs_three_points():
    with pytest.raises(DomainError, match="3"):
        fit_power_law([(1.0, 1.0), (2.0, 0.5)])


def test_power_law_degenerate_x():
    with pytest.raises(FitError, match="degenerate"):
        fit_power_law([(2.0, 1.0), (2.0, 2.0), (2.0, 3.0)])
