"""Scoring metrics, subgroup binning, fairness stats, and bootstrap rates."""

import csv
import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covseir.errors import ConfigError, DataError, EmptyMetricError
from covseir.evaluation import (
    FIXED_HORIZON,
    MULTI_HORIZON,
    ForecastFrame,
    SubgroupBinning,
    bin_locations,
    fairness_report,
    fairness_rows,
    fairness_to_csv,
    interval_coverage,
    load_forecast_frame,
    mae,
    mape,
    mean_error,
    nmae,
    rmse,
    rmsle,
    underprediction_rates,
)
from covseir.features import OBSERVABLES
from covseir.training import ForecastResult, forecast_to_csv

TRAIN_END = 10


def point_frame(series, train_end=TRAIN_END, symbol="D"):
    """Frame from {location: (predictions, actuals)} day-aligned lists.

    An actual of None marks a masked (unobserved) day.
    """
    horizon = max(len(pred) for pred, _ in series.values())
    predictions = {}
    actuals = {}
    for loc, (preds, acts) in series.items():
        days = range(train_end + 1, train_end + 1 + len(preds))
        predictions[loc] = {symbol: {"point": dict(zip(days, preds))}}
        observed = {
            day: float(a) for day, a in zip(days, acts) if a is not None
        }
        actuals[loc] = {symbol: observed}
    return ForecastFrame(
        train_end=train_end,
        horizon=horizon,
        locations=tuple(sorted(series)),
        predictions=predictions,
        actuals=actuals,
    )


def quantile_frame(bands, actuals_by_loc, train_end=TRAIN_END, symbol="D"):
    """Frame from {location: {quantile: [values]}} plus actual lists."""
    horizon = len(next(iter(actuals_by_loc.values())))
    days = list(range(train_end + 1, train_end + 1 + horizon))
    predictions = {}
    actuals = {}
    for loc, per_q in bands.items():
        predictions[loc] = {
            symbol: {q: dict(zip(days, vals)) for q, vals in per_q.items()}
        }
        actuals[loc] = {
            symbol: {
                day: float(a)
                for day, a in zip(days, actuals_by_loc[loc])
                if a is not None
            }
        }
    return ForecastFrame(
        train_end=train_end,
        horizon=horizon,
        locations=tuple(sorted(bands)),
        predictions=predictions,
        actuals=actuals,
    )


class TestForecastFrame:
    def test_days_span_the_window(self):
        frame = point_frame({"AA": ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])})
        assert frame.days == [11, 12, 13]

    def test_keys_sorted_with_point_last(self):
        frame = quantile_frame(
            {"AA": {0.9: [1.0], 0.1: [0.5]}}, {"AA": [0.7]}
        )
        frame.predictions["AA"]["D"]["point"] = {11: 0.8}
        assert frame.keys() == [0.1, 0.9, "point"]

    def test_default_key_prefers_point(self):
        frame = point_frame({"AA": ([1.0], [1.0])})
        assert frame.default_key() == "point"

    def test_default_key_prefers_median_quantile(self):
        frame = quantile_frame(
            {"AA": {0.1: [1.0], 0.5: [1.1], 0.9: [1.2]}}, {"AA": [1.0]}
        )
        assert frame.default_key() == 0.5

    def test_default_key_falls_back_to_middle(self):
        frame = quantile_frame(
            {"AA": {0.25: [1.0], 0.75: [1.2]}}, {"AA": [1.0]}
        )
        assert frame.default_key() == 0.75

    def test_default_key_without_predictions(self):
        frame = ForecastFrame(
            train_end=0, horizon=1, locations=("AA",), predictions={}, actuals={}
        )
        with pytest.raises(DataError, match="no predictions"):
            frame.default_key()

    def test_missing_prediction_is_an_error(self):
        frame = point_frame({"AA": ([1.0], [1.0])})
        with pytest.raises(DataError, match="no prediction"):
            frame.prediction("AA", "D", 99, "point")

    def test_missing_actual_is_none(self):
        frame = point_frame({"AA": ([1.0, 2.0], [1.0, None])})
        assert frame.actual("AA", "D", 12) is None
        assert frame.actual("AA", "D", 11) == 1.0

    def test_horizon_must_be_positive(self):
        with pytest.raises(ConfigError, match="horizon"):
            ForecastFrame(train_end=0, horizon=0, locations=())

    def test_from_result_aligns_days_and_filters_locations(self):
        anchor = dt.date(2020, 1, 21)
        result = ForecastResult(
            train_end=10,
            horizon=3,
            anchor=anchor.isoformat(),
            locations=("AA",),
            quantiles=None,
            values={"AA": {"D": {"point": [1.0, 2.0, 3.0]}}},
        )
        observations = {
            ("AA", anchor + dt.timedelta(days=11)): {"D": 1.5, "Q": 7.0},
            ("AA", anchor + dt.timedelta(days=13)): {"D": 3.5},
            ("ZZ", anchor + dt.timedelta(days=11)): {"D": 9.0},
        }
        frame = ForecastFrame.from_result(result, observations)
        assert frame.train_end == 10 and frame.horizon == 3
        assert frame.locations == ("AA",)
        assert frame.prediction("AA", "D", 12, "point") == 2.0
        assert frame.actual("AA", "D", 11) == 1.5
        assert frame.actual("AA", "Q", 11) == 7.0
        assert frame.actual("AA", "D", 12) is None
        assert "ZZ" not in frame.actuals


class TestPointMetrics:
    def test_perfect_forecast_scores_zero(self):
        frame = point_frame({"AA": ([5.0, 6.0, 7.0], [5.0, 6.0, 7.0])})
        assert rmse(frame) == 0.0
        assert mae(frame) == 0.0
        assert mape(frame) == 0.0
        assert rmsle(frame) == 0.0
        assert mean_error(frame) == 0.0

    def test_single_pair_hand_values(self):
        frame = point_frame({"AA": ([110.0], [100.0])})
        assert mae(frame) == 10.0
        assert rmse(frame) == 10.0
        assert mape(frame) == pytest.approx(10.0, rel=1e-12)
        assert mean_error(frame) == 10.0
        assert rmsle(frame) == pytest.approx(math.log(111.0 / 101.0), rel=1e-12)

    def test_zero_actual_mape_and_rmsle(self):
        frame = point_frame({"AA": ([5.0], [0.0])})
        with pytest.raises(EmptyMetricError, match="nonzero"):
            mape(frame)
        assert rmsle(frame) == pytest.approx(math.log(6.0), rel=1e-12)

    def test_mape_skips_zero_actuals_only(self):
        frame = point_frame({"AA": ([5.0, 110.0], [0.0, 100.0])})
        assert mape(frame) == pytest.approx(10.0, rel=1e-12)

    def test_rmsle_clamps_negative_predictions(self):
        frame = point_frame({"AA": ([-4.0], [0.0])})
        assert rmsle(frame) == 0.0

    def test_mean_error_sign_convention(self):
        over = point_frame({"AA": ([15.0, 25.0], [10.0, 20.0])})
        assert mean_error(over) == 5.0
        mixed = point_frame({"AA": ([15.0, 15.0], [10.0, 20.0])})
        assert mean_error(mixed) == 0.0

    def test_masked_days_are_skipped(self):
        frame = point_frame({"AA": ([10.0, 99.0, 12.0], [10.0, None, 10.0])})
        assert mae(frame) == 1.0

    def test_all_masked_raises_empty_metric(self):
        frame = point_frame({"AA": ([1.0, 2.0], [None, None])})
        for metric in (rmse, mae, mape, rmsle, mean_error):
            with pytest.raises(EmptyMetricError):
                metric(frame)

    def test_fixed_horizon_scores_only_the_last_day(self):
        frame = point_frame({"AA": ([11.0, 12.0, 16.0], [10.0, 10.0, 10.0])})
        assert mae(frame, mode=MULTI_HORIZON) == 3.0
        assert mae(frame, mode=FIXED_HORIZON) == 6.0

    def test_unknown_mode_rejected(self):
        frame = point_frame({"AA": ([1.0], [1.0])})
        with pytest.raises(ConfigError, match="mode"):
            mae(frame, mode="weekly")

    def test_missing_prediction_for_observed_day(self):
        frame = point_frame({"AA": ([1.0, 2.0], [1.0, 2.0])})
        del frame.predictions["AA"]["D"]["point"][12]
        with pytest.raises(DataError, match="no prediction"):
            mae(frame)

    def test_default_key_is_median_for_quantile_frames(self):
        frame = quantile_frame(
            {"AA": {0.1: [5.0], 0.5: [12.0], 0.9: [20.0]}}, {"AA": [10.0]}
        )
        assert mae(frame) == 2.0
        assert mae(frame, key=0.9) == 10.0

    def test_location_reordering_leaves_metrics_unchanged(self):
        series = {
            "AA": ([11.0, 13.0], [10.0, 10.0]),
            "BB": ([7.0, 2.0], [9.0, 4.0]),
        }
        frame = point_frame(series)
        flipped = ForecastFrame(
            train_end=frame.train_end,
            horizon=frame.horizon,
            locations=tuple(reversed(frame.locations)),
            predictions=frame.predictions,
            actuals=frame.actuals,
        )
        for metric in (rmse, mae, mape, rmsle, mean_error):
            assert metric(frame) == metric(flipped)

    @settings(max_examples=60, deadline=None)
    @given(
        errors=st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
            min_size=1,
            max_size=30,
        )
    )
    def test_rmse_dominates_mae(self, errors):
        frame = point_frame(
            {"AA": ([100.0 + e for e in errors], [100.0] * len(errors))}
        )
        assert rmse(frame) >= mae(frame) * (1.0 - 1e-12)


class TestNmae:
    def test_perfect_forecast(self):
        frame = point_frame({"AA": ([4.0, 5.0, 6.0], [4.0, 5.0, 6.0])})
        assert nmae(frame, "AA") == 0.0

    def test_flat_actuals_clamp_the_denominator(self):
        actuals = [7.0, 7.0, 7.0, 7.0]
        preds = [8.0, 9.0, 10.0, 9.0]
        frame = point_frame({"AA": (preds, actuals)})
        assert nmae(frame, "AA") == pytest.approx(8.0 / 4.0, rel=1e-12)

    def test_increment_normalization_hand_value(self):
        frame = point_frame({"AA": ([12.0, 26.0], [10.0, 20.0])})
        assert nmae(frame, "AA") == pytest.approx(4.0 / 10.0, rel=1e-12)

    def test_matches_direct_formula_on_random_series(self):
        rng = np.random.default_rng(7)
        actuals = 5.0 + np.cumsum(rng.uniform(0.0, 3.0, size=6))
        preds = actuals + rng.normal(0.0, 2.0, size=6)
        frame = point_frame({"AA": (list(preds), list(actuals))})
        expected = np.mean(np.abs(preds - actuals)) / max(
            actuals[-1] - actuals[0], 1.0
        )
        assert nmae(frame, "AA") == pytest.approx(float(expected), rel=1e-12)

    def test_shift_invariance(self):
        actuals = [3.0, 6.0, 10.0]
        preds = [4.0, 5.0, 13.0]
        base = point_frame({"AA": (preds, actuals)})
        shifted = point_frame(
            {"AA": ([p + 100.0 for p in preds], [a + 100.0 for a in actuals])}
        )
        assert nmae(base, "AA") == pytest.approx(nmae(shifted, "AA"), rel=1e-12)

    def test_missing_day_is_an_error(self):
        frame = point_frame({"AA": ([1.0, 2.0], [1.0, None])})
        with pytest.raises(DataError, match="missing day 12"):
            nmae(frame, "AA")


class TestIntervalCoverage:
    def test_full_coverage(self):
        frame = quantile_frame(
            {"AA": {0.1: [0.0, 0.0], 0.9: [20.0, 20.0]}},
            {"AA": [5.0, 15.0]},
        )
        assert interval_coverage(frame) == 1.0

    def test_degenerate_band_misses(self):
        frame = quantile_frame(
            {"AA": {0.1: [7.0], 0.9: [7.0]}}, {"AA": [8.0]}
        )
        assert interval_coverage(frame) == 0.0

    def test_boundary_counts_as_covered(self):
        frame = quantile_frame(
            {"AA": {0.1: [5.0, 5.0], 0.9: [9.0, 9.0]}}, {"AA": [5.0, 9.0]}
        )
        assert interval_coverage(frame) == 1.0

    def test_partial_coverage(self):
        frame = quantile_frame(
            {"AA": {0.1: [0.0, 0.0], 0.9: [10.0, 10.0]}},
            {"AA": [5.0, 50.0]},
        )
        assert interval_coverage(frame) == 0.5

    def test_missing_quantile_key(self):
        frame = quantile_frame({"AA": {0.5: [1.0]}}, {"AA": [1.0]})
        with pytest.raises(DataError, match="quantile keys"):
            interval_coverage(frame, q_low=0.1, q_high=0.9)

    def test_no_actuals_raise_empty_metric(self):
        frame = quantile_frame(
            {"AA": {0.1: [0.0], 0.9: [1.0]}}, {"AA": [None]}
        )
        with pytest.raises(EmptyMetricError):
            interval_coverage(frame)


def statics_table(values):
    return {loc: {"density": v} for loc, v in values.items()}


class TestBinLocations:
    def test_even_split(self):
        values = {f"L{i}": float(i) for i in range(8)}
        binning = bin_locations(statics_table(values), "density", 4)
        assert [len(b) for b in binning.bins] == [2, 2, 2, 2]
        assert binning.bins[0] == ("L0", "L1")
        assert binning.bins[3] == ("L6", "L7")

    def test_remainder_goes_to_the_first_bins(self):
        values = {f"L{i}": float(i) for i in range(9)}
        binning = bin_locations(statics_table(values), "density", 4)
        assert [len(b) for b in binning.bins] == [3, 2, 2, 2]
        assert binning.bins[0] == ("L0", "L1", "L2")

    def test_ties_break_by_location_id(self):
        values = {"b": 1.0, "a": 1.0, "d": 1.0, "c": 1.0}
        binning = bin_locations(statics_table(values), "density", 2)
        assert binning.bins == (("a", "b"), ("c", "d"))

    def test_sorted_by_value_not_insertion(self):
        values = {"AA": 9.0, "BB": 1.0, "CC": 5.0}
        binning = bin_locations(statics_table(values), "density", 3)
        assert binning.bins == (("BB",), ("CC",), ("AA",))
        assert binning.edges == ((1.0, 1.0), (5.0, 5.0), (9.0, 9.0))

    def test_edges_span_each_bin(self):
        values = {f"L{i}": float(i) for i in range(6)}
        binning = bin_locations(statics_table(values), "density", 2)
        assert binning.edges == ((0.0, 2.0), (3.0, 5.0))

    def test_bins_partition_locations(self):
        values = {f"L{i:02d}": float(i % 5) for i in range(23)}
        binning = bin_locations(statics_table(values), "density", 7)
        flat = binning.locations()
        assert len(flat) == 23
        assert set(flat) == set(values)
        sizes = [len(b) for b in binning.bins]
        assert max(sizes) - min(sizes) <= 1

    def test_too_many_bins(self):
        with pytest.raises(ConfigError, match="cannot cut"):
            bin_locations(statics_table({"AA": 1.0}), "density", 2)

    def test_bad_bin_count(self):
        with pytest.raises(ConfigError, match="n_bins"):
            bin_locations(statics_table({"AA": 1.0}), "density", 0)

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError, match="strategy"):
            bin_locations(
                statics_table({"AA": 1.0}), "density", 1, strategy="quantile"
            )

    def test_missing_covariate_value(self):
        with pytest.raises(DataError, match="median_age"):
            bin_locations(statics_table({"AA": 1.0}), "median_age", 1)

    def test_non_finite_value(self):
        with pytest.raises(DataError, match="non-finite"):
            bin_locations(statics_table({"AA": float("nan")}), "density", 1)

    def test_duplicate_membership_rejected(self):
        with pytest.raises(ConfigError, match="two bins"):
            SubgroupBinning(
                covariate_id="density",
                bins=(("AA",), ("AA",)),
                edges=((0.0, 0.0), (0.0, 0.0)),
            )


def quantile_linear(values, fraction):
    """Sort-based quantile with linear interpolation between order stats."""
    ordered = sorted(values)
    if len(ordered) == 1:
        return ordered[0]
    position = fraction * (len(ordered) - 1)
    low = int(math.floor(position))
    high = min(low + 1, len(ordered) - 1)
    weight = position - low
    return ordered[low] * (1.0 - weight) + ordered[high] * weight


def constant_error_frame(errors, base=50.0, horizon=4):
    """One location per entry, each with a constant signed error."""
    series = {}
    for loc, err in errors.items():
        actuals = [base + 2.0 * i for i in range(horizon)]
        series[loc] = ([a + err for a in actuals], actuals)
    return point_frame(series)


class TestFairnessReport:
    def test_single_location_bins_collapse_to_the_value(self):
        errors = {"AA": 2.0, "BB": -3.0}
        frame = constant_error_frame(errors)
        binning = bin_locations(
            statics_table({"AA": 1.0, "BB": 2.0}), "density", 2
        )
        report = fairness_report(frame, binning, metrics=("mae", "me"))
        first = report["bins"][0]["stats"]
        assert first["mae"] == {
            "min": 2.0, "q1": 2.0, "median": 2.0, "q3": 2.0, "max": 2.0,
            "count": 1,
        }
        assert report["bins"][1]["stats"]["me"]["median"] == -3.0

    def test_identical_errors_have_zero_iqr(self):
        frame = constant_error_frame({"AA": 4.0, "BB": 4.0, "CC": 4.0})
        binning = bin_locations(
            statics_table({"AA": 1.0, "BB": 2.0, "CC": 3.0}), "density", 1
        )
        stats = fairness_report(frame, binning, metrics=("mae",))
        box = stats["bins"][0]["stats"]["mae"]
        assert box["q3"] - box["q1"] == 0.0
        assert box["count"] == 3

    def test_stats_match_a_sort_based_quantile_oracle(self):
        rng = np.random.default_rng(11)
        errors = {f"L{i:02d}": float(rng.normal(0.0, 5.0)) for i in range(13)}
        frame = constant_error_frame(errors)
        binning = bin_locations(
            statics_table({loc: float(i) for i, loc in enumerate(sorted(errors))}),
            "density",
            3,
        )
        report = fairness_report(frame, binning, metrics=("mae", "me"))
        for entry in report["bins"]:
            member_mae = [abs(errors[loc]) for loc in entry["locations"]]
            member_me = [errors[loc] for loc in entry["locations"]]
            for metric, values in (("mae", member_mae), ("me", member_me)):
                box = entry["stats"][metric]
                assert box["min"] == pytest.approx(min(values), rel=1e-9)
                assert box["max"] == pytest.approx(max(values), rel=1e-9)
                for name, fraction in (("q1", 0.25), ("median", 0.5), ("q3", 0.75)):
                    assert box[name] == pytest.approx(
                        quantile_linear(values, fraction), rel=1e-9, abs=1e-12
                    )
                assert box["count"] == len(values)

    def test_nmae_metric_matches_direct_calls(self):
        frame = point_frame(
            {
                "AA": ([12.0, 26.0], [10.0, 20.0]),
                "BB": ([8.0, 8.0], [7.0, 7.0]),
            }
        )
        binning = bin_locations(
            statics_table({"AA": 1.0, "BB": 2.0}), "density", 2
        )
        report = fairness_report(frame, binning, metrics=("nmae",))
        assert report["bins"][0]["stats"]["nmae"]["median"] == pytest.approx(
            nmae(frame, "AA"), rel=1e-12
        )
        assert report["bins"][1]["stats"]["nmae"]["median"] == pytest.approx(
            nmae(frame, "BB"), rel=1e-12
        )

    def test_unknown_metric_rejected(self):
        frame = constant_error_frame({"AA": 1.0})
        binning = bin_locations(statics_table({"AA": 1.0}), "density", 1)
        with pytest.raises(ConfigError, match="rmse"):
            fairness_report(frame, binning, metrics=("rmse",))
        with pytest.raises(ConfigError, match="at least one"):
            fairness_report(frame, binning, metrics=())

    def test_member_without_observations_fails_loud(self):
        frame = point_frame({"AA": ([1.0], [1.0]), "BB": ([1.0], [None])})
        binning = bin_locations(
            statics_table({"AA": 1.0, "BB": 2.0}), "density", 2
        )
        with pytest.raises(EmptyMetricError, match="BB"):
            fairness_report(frame, binning, metrics=("mae",))

    def test_rows_and_csv_round_trip(self, tmp_path):
        frame = constant_error_frame({"AA": 2.0, "BB": -1.0, "CC": 3.0})
        binning = bin_locations(
            statics_table({"AA": 1.0, "BB": 2.0, "CC": 3.0}), "density", 2
        )
        report = fairness_report(frame, binning, metrics=("mae", "me"))
        rows = fairness_rows(report)
        assert len(rows) == 2 * 2
        assert rows[0]["metric"] == "mae" and rows[1]["metric"] == "me"
        out = tmp_path / "fairness.csv"
        fairness_to_csv(report, out)
        with open(out, newline="") as fh:
            parsed = list(csv.DictReader(fh))
        assert len(parsed) == len(rows)
        assert float(parsed[0]["median"]) == rows[0]["median"]
        assert int(parsed[-1]["count"]) == rows[-1]["count"]


def last_day_frame(entries, train_end=TRAIN_END, horizon=3):
    """Frame where only the final day matters: {loc: (pred, actual)}.

    Earlier days get perfect placeholder values so the frame stays dense.
    """
    series = {}
    for loc, (pred, actual) in entries.items():
        fill = actual if actual is not None else 0.0
        preds = [fill] * (horizon - 1) + [pred]
        acts = [fill] * (horizon - 1) + [actual]
        series[loc] = (preds, acts)
    return point_frame(series, train_end=train_end)


def single_bin(locations):
    return SubgroupBinning(
        covariate_id="density",
        bins=(tuple(locations),),
        edges=((0.0, 1.0),),
    )


class TestUnderpredictionRates:
    def test_all_overpredicted_gives_zero_rate_and_tight_ci(self):
        entries = {f"L{i}": (50.0 + i, 20.0) for i in range(6)}
        frame = last_day_frame(entries)
        [result] = underprediction_rates(frame, single_bin(sorted(entries)))
        assert result["eligible"] == 6
        assert result["rate"] == 0.0
        assert result["ci_low"] == 0.0 and result["ci_high"] == 0.0

    def test_ties_count_as_covered(self):
        frame = last_day_frame({"AA": (20.0, 20.0), "BB": (19.0, 20.0)})
        [result] = underprediction_rates(frame, single_bin(["AA", "BB"]))
        assert result["eligible"] == 2
        assert result["rate"] == 0.5

    def test_eligibility_requires_more_than_one_death(self):
        entries = {
            "AA": (0.0, 1.0),
            "BB": (0.0, 0.5),
            "CC": (0.0, 1.1),
            "DD": (5.0, None),
        }
        frame = last_day_frame(entries)
        [result] = underprediction_rates(frame, single_bin(sorted(entries)))
        assert result["eligible"] == 1
        assert result["rate"] == 1.0

    def test_empty_bin_reports_none(self):
        frame = last_day_frame({"AA": (0.0, 0.5)})
        [result] = underprediction_rates(frame, single_bin(["AA"]))
        assert result["eligible"] == 0
        assert result["rate"] is None
        assert result["ci_low"] is None and result["ci_high"] is None

    def test_fifty_fifty_ci_matches_an_independent_bootstrap(self):
        import random as pyrandom

        n = 20
        entries = {}
        for i in range(n):
            actual = 30.0
            pred = actual - 5.0 if i < n // 2 else actual + 5.0
            entries[f"L{i:02d}"] = (pred, actual)
        frame = last_day_frame(entries)
        [result] = underprediction_rates(
            frame, single_bin(sorted(entries)), bootstrap_samples=1000, seed=3
        )
        assert result["rate"] == 0.5

        flags = [1.0] * (n // 2) + [0.0] * (n // 2)
        sampler = pyrandom.Random(987654321)
        means = []
        for _ in range(4000):
            draw = [flags[sampler.randrange(n)] for _ in range(n)]
            means.append(sum(draw) / n)
        oracle_low = quantile_linear(means, 0.025)
        oracle_high = quantile_linear(means, 0.975)
        assert abs(result["ci_low"] - oracle_low) <= 0.02
        assert abs(result["ci_high"] - oracle_high) <= 0.02

    def test_deterministic_under_fixed_seed(self):
        entries = {f"L{i}": (10.0 + (-1) ** i, 10.0) for i in range(10)}
        frame = last_day_frame(entries)
        binning = single_bin(sorted(entries))
        first = underprediction_rates(frame, binning, seed=5)
        second = underprediction_rates(frame, binning, seed=5)
        assert first == second

    def test_ci_reproduces_the_pinned_substream(self):
        entries = {f"L{i}": (10.0 + (-1) ** i, 10.0) for i in range(10)}
        frame = last_day_frame(entries)
        [result] = underprediction_rates(
            frame, single_bin(sorted(entries)), bootstrap_samples=250, seed=5
        )
        flags = np.array([0.0, 1.0] * 5)
        rng = np.random.default_rng([5, 0])
        idx = rng.integers(0, 10, size=(250, 10))
        low, high = np.percentile(flags[idx].mean(axis=1), [2.5, 97.5])
        assert result["ci_low"] == float(low)
        assert result["ci_high"] == float(high)

    def test_per_bin_substreams_are_independent_of_other_bins(self):
        entries = {f"L{i}": (10.0 + (-1) ** i, 10.0) for i in range(8)}
        frame = last_day_frame(entries)
        shared = tuple(sorted(entries))[4:]
        first = SubgroupBinning(
            covariate_id="density",
            bins=(tuple(sorted(entries))[:4], shared),
            edges=((0.0, 0.0), (1.0, 1.0)),
        )
        second = SubgroupBinning(
            covariate_id="density",
            bins=(tuple(sorted(entries))[:2], shared),
            edges=((0.0, 0.0), (1.0, 1.0)),
        )
        a = underprediction_rates(frame, first, seed=9)
        b = underprediction_rates(frame, second, seed=9)
        assert a[1]["rate"] == b[1]["rate"]
        assert a[1]["ci_low"] == b[1]["ci_low"]
        assert a[1]["ci_high"] == b[1]["ci_high"]

    def test_bad_sample_count(self):
        frame = last_day_frame({"AA": (1.0, 2.0)})
        with pytest.raises(ConfigError, match="bootstrap_samples"):
            underprediction_rates(frame, single_bin(["AA"]), bootstrap_samples=0)

    def test_explicit_quantile_key(self):
        bands = {
            "AA": {0.1: [1.0, 1.0], 0.5: [25.0, 25.0], 0.9: [30.0, 30.0]}
        }
        frame = quantile_frame(bands, {"AA": [20.0, 20.0]})
        [by_default] = underprediction_rates(frame, single_bin(["AA"]))
        assert by_default["rate"] == 0.0
        [by_low] = underprediction_rates(frame, single_bin(["AA"]), key=0.1)
        assert by_low["rate"] == 1.0


class TestLoadForecastFrame:
    def build_result(self, quantiles):
        anchor = dt.date(2020, 1, 21)
        rng = np.random.default_rng(4)
        locations = ("AA", "BB")
        values = {}
        for loc in locations:
            per_symbol = {}
            for symbol in OBSERVABLES:
                base = rng.uniform(5.0, 50.0, size=2)
                if quantiles is None:
                    per_symbol[symbol] = {"point": [float(v) for v in base]}
                else:
                    per_symbol[symbol] = {
                        q: [float(v * (0.5 + q)) for v in base] for q in quantiles
                    }
            values[loc] = per_symbol
        return ForecastResult(
            train_end=9,
            horizon=2,
            anchor=anchor.isoformat(),
            locations=locations,
            quantiles=quantiles,
            values=values,
        )

    def test_round_trip_from_written_csv(self, tmp_path):
        result = self.build_result(quantiles=(0.1, 0.5, 0.9))
        path = tmp_path / "forecast.csv"
        forecast_to_csv(result, path)
        anchor = dt.date(2020, 1, 21)
        observations = {
            ("AA", anchor + dt.timedelta(days=10)): {"D": 4.0},
            ("AA", anchor + dt.timedelta(days=11)): {"D": 6.0},
            ("BB", anchor + dt.timedelta(days=11)): {"D": 9.0, "Q": 100.0},
        }
        frame = load_forecast_frame(path, observations, anchor)
        assert frame.train_end == 9 and frame.horizon == 2
        assert frame.locations == ("AA", "BB")
        assert frame.keys() == [0.1, 0.5, 0.9]
        for loc in result.locations:
            for symbol in OBSERVABLES:
                for q in (0.1, 0.5, 0.9):
                    for i, day in enumerate(result.days):
                        expected = max(0.0, result.values[loc][symbol][q][i])
                        assert frame.prediction(loc, symbol, day, q) == expected
        assert frame.actual("AA", "D", 10) == 4.0
        assert frame.actual("BB", "Q", 11) == 100.0

    def test_point_forecasts_load_with_point_key(self, tmp_path):
        result = self.build_result(quantiles=None)
        path = tmp_path / "forecast.csv"
        forecast_to_csv(result, path)
        frame = load_forecast_frame(path, {}, "2020-01-21")
        assert frame.keys() == ["point"]
        assert frame.default_key() == "point"

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("location_id,date,value\nAA,2020-02-01,3.0\n")
        with pytest.raises(DataError, match="missing columns"):
            load_forecast_frame(path, {}, "2020-01-21")

    def test_bad_quantile_label(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text(
            "location_id,date,compartment,quantile,value\n"
            "AA,2020-02-01,D,middle,3.0\n"
        )
        with pytest.raises(DataError, match="bad quantile"):
            load_forecast_frame(path, {}, "2020-01-21")

    def test_bad_date(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text(
            "location_id,date,compartment,quantile,value\n"
            "AA,02/01/2020,D,point,3.0\n"
        )
        with pytest.raises(DataError, match="bad date"):
            load_forecast_frame(path, {}, "2020-01-21")

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("location_id,date,compartment,quantile,value\n")
        with pytest.raises(DataError, match="no data rows"):
            load_forecast_frame(path, {}, "2020-01-21")
