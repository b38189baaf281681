"""Rate encoders and the autoregressive covariate forecaster."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covseir.autodiff import ParameterStore, gradient_check, square
from covseir.dynamics import RATE_NAMES
from covseir.encoders import (
    DEFAULT_ZETA,
    CovariateForecaster,
    CovariateSlot,
    RateEncoder,
    default_bounds,
    encode_rate,
    encode_rates_over_time,
    fit_covariate_forecaster,
    forecast_covariate,
    peak_to_mean,
)
from covseir.errors import ConfigError, DataError, DomainError


def bias_only_encoder(variable_id="alpha", lower=0.0, upper=0.2, global_bias=0.0, locations=("locA",)):
    return RateEncoder(
        variable_id=variable_id,
        lower_bound=lower,
        upper_bound=upper,
        global_bias=global_bias,
        local_bias={loc: 0.0 for loc in locations},
    )


class StubSource:
    """Dict-backed covariate source; days before 0 hold the day-0 value."""

    def __init__(self, statics=None, series=None):
        self.statics = statics or {}
        self.series = series or {}

    def static_value(self, location_id, covariate_id):
        try:
            return self.statics[location_id][covariate_id]
        except KeyError:
            raise DataError(f"unknown static covariate {covariate_id!r} for {location_id!r}")

    def value_at(self, location_id, covariate_id, t):
        try:
            values = self.series[location_id][covariate_id]
        except KeyError:
            raise DataError(f"unknown time-varying covariate {covariate_id!r} for {location_id!r}")
        return values[max(t, 0)]

    def has_static(self, location_id, covariate_id):
        return covariate_id in self.statics.get(location_id, {})

    def has_time_varying(self, location_id, covariate_id):
        return covariate_id in self.series.get(location_id, {})


# --- encode_rate ------------------------------------------------------------


def test_zero_parameters_hit_midpoint():
    enc = bias_only_encoder(lower=0.0, upper=0.1)
    assert encode_rate(enc, {}, {}, "locA") == pytest.approx(0.05, abs=1e-15)


def test_saturated_bias_touches_upper_bound():
    enc = bias_only_encoder(variable_id="beta_doc", lower=0.0, upper=10.0, global_bias=40.0)
    assert encode_rate(enc, {}, {}, "locA") == pytest.approx(10.0, abs=1e-12)


def test_single_covariate_frozen_sigmoid():
    # oracle: sigmoid(2) = 0.8807970779778823
    enc = RateEncoder(
        variable_id="gamma",
        lower_bound=0.0,
        upper_bound=1.0,
        weights=[2.0],
        covariate_spec=[CovariateSlot("mobility", "time_varying", lag=1)],
        local_bias={"locA": 0.0},
    )
    out = encode_rate(enc, {}, {"mobility": [1.0]}, "locA")
    assert out == pytest.approx(0.8807970779778823, rel=1e-14)


def test_static_and_lagged_slots_resolve():
    enc = RateEncoder(
        variable_id="h",
        lower_bound=0.0,
        upper_bound=0.1,
        global_bias=-0.3,
        weights=[0.5, -0.2, 1.1],
        covariate_spec=[
            CovariateSlot("density", "static"),
            CovariateSlot("mobility", "time_varying", lag=1),
            CovariateSlot("mobility", "time_varying", lag=3),
        ],
        local_bias={"locA": 0.07},
    )
    logit = -0.3 + 0.07 + 0.5 * 0.8 - 0.2 * 0.4 + 1.1 * 0.9
    expected = 0.1 / (1.0 + math.exp(-logit))
    out = encode_rate(enc, {"density": 0.8}, {"mobility": [0.4, 0.6, 0.9]}, "locA")
    assert out == pytest.approx(expected, rel=1e-14)


def test_missing_slot_and_unknown_location_errors():
    enc = RateEncoder(
        variable_id="gamma",
        lower_bound=0.0,
        upper_bound=0.1,
        weights=[1.0, 1.0],
        covariate_spec=[
            CovariateSlot("density", "static"),
            CovariateSlot("mobility", "time_varying", lag=2),
        ],
        local_bias={"locA": 0.0},
    )
    with pytest.raises(ConfigError, match="density"):
        encode_rate(enc, {}, {"mobility": [0.1, 0.2]}, "locA")
    with pytest.raises(ConfigError, match="mobility.*lag 2"):
        encode_rate(enc, {"density": 0.5}, {"mobility": [0.1]}, "locA")
    with pytest.raises(DataError, match="locB"):
        encode_rate(enc, {"density": 0.5}, {"mobility": [0.1, 0.2]}, "locB")


def test_encoder_validation():
    with pytest.raises(ConfigError, match="lower_bound < upper_bound"):
        bias_only_encoder(lower=0.2, upper=0.2)
    with pytest.raises(ConfigError, match="weights"):
        RateEncoder(
            variable_id="gamma",
            lower_bound=0.0,
            upper_bound=0.1,
            weights=[1.0],
            covariate_spec=[],
        )
    with pytest.raises(ConfigError, match="kind"):
        CovariateSlot("x", "weekly")
    with pytest.raises(ConfigError, match="lag"):
        CovariateSlot("x", "time_varying", lag=0)
    with pytest.raises(ConfigError, match="lag"):
        CovariateSlot("x", "static", lag=1)


@given(
    gb=st.floats(-15.0, 15.0),
    lb=st.floats(-15.0, 15.0),
    w=st.floats(-10.0, 10.0),
    x=st.floats(0.0, 1.0),
)
@settings(max_examples=100, deadline=None)
def test_boundedness_property(gb, lb, w, x):
    enc = RateEncoder(
        variable_id="rho_H",
        lower_bound=0.0,
        upper_bound=0.1,
        global_bias=gb,
        weights=[w],
        covariate_spec=[CovariateSlot("m", "time_varying", lag=1)],
        local_bias={"locA": lb},
    )
    out = encode_rate(enc, {}, {"m": [x]}, "locA")
    assert 0.0 < out < 0.1


def test_monotone_in_positively_weighted_covariate():
    enc = RateEncoder(
        variable_id="beta_doc",
        lower_bound=0.0,
        upper_bound=10.0,
        weights=[1.7],
        covariate_spec=[CovariateSlot("m", "time_varying", lag=1)],
        local_bias={"locA": 0.0},
    )
    values = [encode_rate(enc, {}, {"m": [x]}, "locA") for x in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_encode_rate_gradients_match_finite_differences():
    cov = {"density": 0.7}
    window = {"m": [0.3, 0.9]}

    def loss(vals):
        enc = RateEncoder(
            variable_id="gamma",
            lower_bound=0.0,
            upper_bound=0.1,
            global_bias=vals["gb"],
            weights=[vals["w0"], vals["w1"], vals["w2"]],
            covariate_spec=[
                CovariateSlot("density", "static"),
                CovariateSlot("m", "time_varying", lag=1),
                CovariateSlot("m", "time_varying", lag=2),
            ],
            local_bias={"locA": vals["lb"]},
        )
        return square(encode_rate(enc, cov, window, "locA") * 100.0)

    store = ParameterStore()
    store.add("gb", -0.4)
    store.add("lb", 0.2)
    store.add("w0", 0.8)
    store.add("w1", -1.3)
    store.add("w2", 0.5)
    report = gradient_check(store, loss, h=1e-5)
    assert report.passed, report.failures()
    assert report.max_rel_error < 1e-6


def test_default_bounds_table():
    bounds = default_bounds()
    assert bounds["beta_doc"] == (0.0, 10.0)
    assert bounds["beta_undoc"] == (0.0, 10.0)
    assert bounds["alpha"] == (0.0, 0.2)
    for name in RATE_NAMES:
        if name not in ("beta_doc", "beta_undoc", "alpha"):
            assert bounds[name] == (0.0, 0.1)


# --- encode_rates_over_time -------------------------------------------------


def full_encoder_set(locations=("locA",), beta_weights=None):
    encoders = {}
    bounds = default_bounds()
    for name in RATE_NAMES:
        lo, hi = bounds[name]
        if beta_weights and name in ("beta_doc", "beta_undoc"):
            encoders[name] = RateEncoder(
                variable_id=name,
                lower_bound=lo,
                upper_bound=hi,
                weights=list(beta_weights),
                covariate_spec=[CovariateSlot("mobility", "time_varying", lag=1)],
                local_bias={loc: 0.0 for loc in locations},
            )
        else:
            encoders[name] = bias_only_encoder(name, lo, hi, 0.0, locations)
    return encoders


def test_constant_covariates_give_constant_rates():
    encoders = full_encoder_set(beta_weights=[0.9])
    source = StubSource(series={"locA": {"mobility": [0.5] * 20}})
    rates = encode_rates_over_time(encoders, source, "locA", range(1, 15))
    first = rates[0].rate_values()
    for rs in rates[1:]:
        assert rs.rate_values() == first


def test_alpha_bias_only_midpoint():
    encoders = full_encoder_set()
    source = StubSource(series={"locA": {}})
    rates = encode_rates_over_time(encoders, source, "locA", [3])
    assert rates[0].rate_values()["alpha"] == pytest.approx(0.1, abs=1e-15)


def test_step_change_propagates_with_lag_one():
    encoders = full_encoder_set(beta_weights=[2.0])
    mobility = [0.0] * 5 + [1.0] * 15  # steps up at t=5
    source = StubSource(series={"locA": {"mobility": mobility}})
    rates = encode_rates_over_time(encoders, source, "locA", range(1, 12))
    betas = [rs.rate_values()["beta_doc"] for rs in rates]
    # rates[i] corresponds to t=i+1 and reads mobility[t-1]
    low, high = betas[0], betas[-1]
    assert low == pytest.approx(5.0)  # sigmoid(0)*10
    assert high == pytest.approx(10.0 / (1.0 + math.exp(-2.0)))
    for i, beta in enumerate(betas):
        t = i + 1
        assert beta == pytest.approx(high if t - 1 >= 5 else low)


def test_missing_encoder_and_error_context():
    encoders = full_encoder_set(beta_weights=[1.0])
    del encoders["kappa_V"]
    source = StubSource(series={"locA": {"mobility": [0.1] * 10}})
    with pytest.raises(ConfigError, match="kappa_V"):
        encode_rates_over_time(encoders, source, "locA", [1])

    encoders = full_encoder_set(beta_weights=[1.0])
    bad_source = StubSource(series={"locA": {}})  # mobility missing entirely
    with pytest.raises((ConfigError, DataError), match="beta_doc at t=1"):
        encode_rates_over_time(encoders, bad_source, "locA", [1])


def test_edge_hold_before_day_zero():
    encoders = full_encoder_set(beta_weights=[1.0])
    mobility = [0.8] + [0.1] * 10
    source = StubSource(series={"locA": {"mobility": mobility}})
    rates = encode_rates_over_time(encoders, source, "locA", [0])
    # t=0 reads lag 1 -> day -1, held at day 0's value 0.8
    expected = 10.0 / (1.0 + math.exp(-0.8))
    assert rates[0].rate_values()["beta_doc"] == pytest.approx(expected, rel=1e-12)


# --- covariate forecaster ---------------------------------------------------


def test_peak_to_mean_basic_and_zero_mean():
    assert peak_to_mean([1.0, 1.0, 4.0]) == pytest.approx(2.0)
    assert peak_to_mean([0.0, 0.0, 0.0]) == 0.0


def test_forecaster_validation():
    with pytest.raises(DomainError, match="zeta"):
        CovariateForecaster(weights=(0.0, 0.0), zeta=1)
    with pytest.raises(DomainError, match="weights"):
        CovariateForecaster(weights=(0.0,) * 3, zeta=14)
    with pytest.raises(DomainError, match="finite"):
        CovariateForecaster(weights=(float("nan"),) * 15, zeta=14)


def test_zero_weights_forecast_zeros():
    fc = CovariateForecaster(weights=(0.0,) * 15, zeta=14)
    assert forecast_covariate(fc, [0.3] * 14, 5) == [0.0] * 5


def test_forecast_requires_window():
    fc = CovariateForecaster(weights=(0.0,) * 15, zeta=14)
    with pytest.raises(DomainError, match="zeta"):
        forecast_covariate(fc, [0.1] * 13, 3)
    with pytest.raises(DomainError, match="positive"):
        forecast_covariate(fc, [0.1] * 14, 0)


def test_constant_series_fit_and_forecast():
    history = [1.0] * 100
    fc = fit_covariate_forecaster(history, zeta=DEFAULT_ZETA)
    # in-sample error on training windows: ridge bias only
    features = np.array([1.0] * 14 + [1.0])
    pred = float(np.dot(fc.weights, features))
    assert abs(pred - 1.0) <= 1e-9
    forecast = forecast_covariate(fc, history, 14)
    assert all(abs(v - 1.0) <= 1e-6 for v in forecast)


def test_exact_ar1_in_sample_error():
    series = [100.0]
    for _ in range(99):
        series.append(0.9 * series[-1])
    fc = fit_covariate_forecaster(series, zeta=14)
    worst = 0.0
    for t in range(14, 100):
        window = series[t - 14 : t]
        features = np.array(window + [peak_to_mean(window)])
        pred = float(np.dot(fc.weights, features))
        worst = max(worst, abs(pred - series[t]))
    assert worst <= 1e-9


def test_sawtooth_period_preserved():
    saw = [float(i % 7) for i in range(100)]
    fc = fit_covariate_forecaster(saw, zeta=14)
    rolled = forecast_covariate(fc, saw, 21)
    expected = [float((100 + i) % 7) for i in range(21)]
    assert max(abs(a - b) for a, b in zip(rolled, expected)) < 1e-3
    peaks = [i for i in range(1, 20) if rolled[i] > rolled[i - 1] and rolled[i] > rolled[i + 1]]
    assert all(b - a == 7 for a, b in zip(peaks, peaks[1:]))


def test_fit_requires_two_windows():
    with pytest.raises(DomainError, match="2\\*zeta"):
        fit_covariate_forecaster([1.0] * 27, zeta=14)


def test_fit_deterministic():
    rng = np.random.default_rng(4)
    series = list(rng.uniform(0.0, 1.0, size=80))
    a = fit_covariate_forecaster(series)
    b = fit_covariate_forecaster(series)
    assert a.weights == b.weights


def test_forecast_deterministic():
    rng = np.random.default_rng(5)
    series = list(rng.uniform(0.0, 1.0, size=60))
    fc = fit_covariate_forecaster(series)
    assert forecast_covariate(fc, series, 14) == forecast_covariate(fc, series, 14)
