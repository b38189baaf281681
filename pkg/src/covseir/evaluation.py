"""Forecast scoring and subgroup fairness analysis.

A :class:`ForecastFrame` pairs predicted trajectories with observed
actuals over the forecast window (train_end, train_end + horizon]. The
metric functions score those pairs; the fairness helpers group locations
by a static covariate and summarize per-location error distributions
within each group, including bootstrapped underprediction rates.

All computations here are read-only over immutable inputs, and every
random draw goes through a seeded per-bin substream, so serial and
parallel callers produce identical numbers.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, EmptyMetricError

__all__ = [
    "FIXED_HORIZON",
    "MULTI_HORIZON",
    "ForecastFrame",
    "SubgroupBinning",
    "bin_locations",
    "fairness_report",
    "fairness_rows",
    "fairness_to_csv",
    "interval_coverage",
    "load_forecast_frame",
    "mae",
    "mape",
    "mean_error",
    "nmae",
    "rmse",
    "rmsle",
    "underprediction_rates",
]

POINT_KEY = "point"

# Aggregation modes: score every day in the window, or only the last one.
MULTI_HORIZON = "multi_horizon"
FIXED_HORIZON = "fixed_horizon"

FAIRNESS_METRICS = ("mae", "nmae", "me")


@dataclass
class ForecastFrame:
    """Aligned predictions and actuals for one forecast.

    ``predictions[location][symbol][key][day]`` holds the predicted value
    where ``key`` is a quantile level (float) or "point". ``actuals``
    follows ``actuals[location][symbol][day]``; a missing day means the
    ground truth was not observed and the pair is skipped. Days are
    absolute integer day indices; the scoreable window is
    (train_end, train_end + horizon].
    """

    train_end: int
    horizon: int
    locations: tuple
    predictions: dict = field(default_factory=dict)
    actuals: dict = field(default_factory=dict)

    def __post_init__(self):
        self.train_end = int(self.train_end)
        self.horizon = int(self.horizon)
        self.locations = tuple(self.locations)
        if self.horizon < 1:
            raise ConfigError(f"frame horizon must be >= 1, got {self.horizon}")

    @property
    def days(self) -> list:
        return list(range(self.train_end + 1, self.train_end + self.horizon + 1))

    def keys(self) -> list:
        """All prediction keys present, floats sorted, "point" last."""
        seen = set()
        for per_symbol in self.predictions.values():
            for per_key in per_symbol.values():
                seen.update(per_key.keys())
        floats = sorted(k for k in seen if k != POINT_KEY)
        return floats + ([POINT_KEY] if POINT_KEY in seen else [])

    def default_key(self):
        """The point trajectory when present, else the median quantile."""
        keys = self.keys()
        if not keys:
            raise DataError("frame holds no predictions")
        if POINT_KEY in keys:
            return POINT_KEY
        floats = [k for k in keys if k != POINT_KEY]
        if 0.5 in floats:
            return 0.5
        return floats[len(floats) // 2]

    def prediction(self, location_id, symbol, day, key):
        try:
            return float(self.predictions[location_id][symbol][key][day])
        except KeyError:
            raise DataError(
                f"no prediction for location {location_id!r}, symbol "
                f"{symbol!r}, day {day}, key {key!r}"
            ) from None

    def actual(self, location_id, symbol, day):
        """The observed value, or None when that day is missing."""
        return self.actuals.get(location_id, {}).get(symbol, {}).get(day)

    @classmethod
    def from_result(cls, result, observations) -> "ForecastFrame":
        """Align a forecast result with observations keyed (location, date).

        ``observations`` uses the observations-file shape:
        {(location_id, date): {symbol: value}} with datetime.date keys.
        Only rows for the result's locations land in the frame.
        """
        anchor = _dt.date.fromisoformat(result.anchor)
        predictions = {}
        for loc in result.locations:
            per_symbol = {}
            for symbol, per_key in result.values[loc].items():
                per_symbol[symbol] = {
                    key: dict(zip(result.days, series))
                    for key, series in per_key.items()
                }
            predictions[loc] = per_symbol
        wanted = set(result.locations)
        actuals = {}
        for (loc, when), values in observations.items():
            if loc not in wanted:
                continue
            day = (when - anchor).days
            for symbol, value in values.items():
                actuals.setdefault(loc, {}).setdefault(symbol, {})[day] = float(value)
        return cls(
            train_end=result.train_end,
            horizon=result.horizon,
            locations=tuple(result.locations),
            predictions=predictions,
            actuals=actuals,
        )


def load_forecast_frame(forecast_csv, observations, anchor) -> ForecastFrame:
    """Build a frame from a written forecast CSV plus observations.

    ``observations`` is the {(location_id, date): {symbol: value}} mapping
    produced by the observations reader; ``anchor`` is the day-zero date
    (ISO string or datetime.date) that converts dates to day indices.
    """
    if isinstance(anchor, str):
        anchor = _dt.date.fromisoformat(anchor)
    predictions = {}
    days = set()
    with open(forecast_csv, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = ["location_id", "date", "compartment", "quantile", "value"]
        if reader.fieldnames is None:
            raise DataError(f"forecast file {forecast_csv}: empty or missing header")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise DataError(
                f"forecast file {forecast_csv}: missing columns {', '.join(missing)}"
            )
        for i, row in enumerate(reader, start=2):
            where = f"forecast line {i}"
            loc = row["location_id"].strip()
            symbol = row["compartment"].strip()
            label = row["quantile"].strip()
            if not loc or not symbol or not label:
                raise DataError(f"{where}: empty location_id, compartment, or quantile")
            try:
                when = _dt.date.fromisoformat(row["date"].strip())
            except ValueError:
                raise DataError(f"{where}: bad date {row['date']!r}") from None
            if label == POINT_KEY:
                key = POINT_KEY
            else:
                try:
                    key = float(label)
                except ValueError:
                    raise DataError(f"{where}: bad quantile {label!r}") from None
            try:
                value = float(row["value"])
            except (TypeError, ValueError):
                raise DataError(f"{where}: bad value {row.get('value')!r}") from None
            day = (when - anchor).days
            days.add(day)
            per_day = (
                predictions.setdefault(loc, {}).setdefault(symbol, {}).setdefault(key, {})
            )
            per_day[day] = value
    if not days:
        raise DataError(f"forecast file {forecast_csv}: no data rows")
    train_end = min(days) - 1
    horizon = max(days) - train_end
    locations = tuple(sorted(predictions))
    actuals = {}
    for (loc, when), values in observations.items():
        if loc not in predictions:
            continue
        day = (when - anchor).days
        for symbol, value in values.items():
            actuals.setdefault(loc, {}).setdefault(symbol, {})[day] = float(value)
    return ForecastFrame(
        train_end=train_end,
        horizon=horizon,
        locations=locations,
        predictions=predictions,
        actuals=actuals,
    )


def _scored_days(frame: ForecastFrame, mode: str) -> list:
    if mode == MULTI_HORIZON:
        return frame.days
    if mode == FIXED_HORIZON:
        return [frame.train_end + frame.horizon]
    raise ConfigError(
        f"unknown aggregation mode {mode!r}; expected "
        f"{MULTI_HORIZON!r} or {FIXED_HORIZON!r}"
    )


def _pairs(frame, symbol, mode, key, locations=None):
    """(predicted, actual) over scoreable pairs, skipping missing actuals."""
    if key is None:
        key = frame.default_key()
    out = []
    for loc in locations if locations is not None else frame.locations:
        for day in _scored_days(frame, mode):
            actual = frame.actual(loc, symbol, day)
            if actual is None:
                continue
            out.append((frame.prediction(loc, symbol, day, key), actual))
    return out


def _require(pairs, what):
    if not pairs:
        raise EmptyMetricError(f"no scoreable pairs for {what}")
    return pairs


def rmse(frame, symbol="D", mode=MULTI_HORIZON, key=None) -> float:
    pairs = _require(_pairs(frame, symbol, mode, key), f"rmse over {symbol}")
    return math.sqrt(math.fsum((p - a) ** 2 for p, a in pairs) / len(pairs))


def mae(frame, symbol="D", mode=MULTI_HORIZON, key=None) -> float:
    pairs = _require(_pairs(frame, symbol, mode, key), f"mae over {symbol}")
    return math.fsum(abs(p - a) for p, a in pairs) / len(pairs)


def mape(frame, symbol="D", mode=MULTI_HORIZON, key=None) -> float:
    """Mean absolute percentage error, in percent, over nonzero actuals."""
    pairs = _pairs(frame, symbol, mode, key)
    scored = [(p, a) for p, a in pairs if a != 0.0]
    _require(scored, f"mape over {symbol} (nonzero actuals)")
    return 100.0 * math.fsum(abs(p - a) / a for p, a in scored) / len(scored)


def rmsle(frame, symbol="D", mode=MULTI_HORIZON, key=None) -> float:
    """Root mean squared error of log(value + 1) differences.

    Negative predictions are clamped to zero before the log so the
    metric stays defined on raw in-memory trajectories.
    """
    pairs = _require(_pairs(frame, symbol, mode, key), f"rmsle over {symbol}")
    total = math.fsum(
        (math.log1p(max(p, 0.0)) - math.log1p(a)) ** 2 for p, a in pairs
    )
    return math.sqrt(total / len(pairs))


def mean_error(frame, symbol="D", mode=MULTI_HORIZON, key=None) -> float:
    """Signed mean of (predicted - actual); positive means overprediction."""
    pairs = _require(_pairs(frame, symbol, mode, key), f"mean_error over {symbol}")
    return math.fsum(p - a for p, a in pairs) / len(pairs)


def nmae(frame, location_id, symbol="D", key=None) -> float:
    """Per-location absolute error normalized by the horizon increment.

    Averages |predicted - actual| over every day in the window, then
    divides by the actual increase from the first to the last forecast
    day, clamped below at 1 so flat series stay finite.
    """
    if key is None:
        key = frame.default_key()
    days = frame.days
    actuals = []
    errors = []
    for day in days:
        actual = frame.actual(location_id, symbol, day)
        if actual is None:
            raise DataError(
                f"nmae needs {symbol!r} observed on every forecast day; "
                f"location {location_id!r} is missing day {day}"
            )
        actuals.append(actual)
        errors.append(abs(frame.prediction(location_id, symbol, day, key) - actual))
    denominator = max(actuals[-1] - actuals[0], 1.0)
    return math.fsum(errors) / len(days) / denominator


def interval_coverage(
    frame, q_low=0.1, q_high=0.9, symbol="D", mode=MULTI_HORIZON
) -> float:
    """Fraction of observed actuals inside the [q_low, q_high] band."""
    missing = [q for q in (q_low, q_high) if q not in frame.keys()]
    if missing:
        raise DataError(f"frame lacks quantile keys {missing}")
    lows = _pairs(frame, symbol, mode, q_low)
    highs = _pairs(frame, symbol, mode, q_high)
    _require(lows, f"interval_coverage over {symbol}")
    covered = sum(
        1 for (low, actual), (high, _) in zip(lows, highs) if low <= actual <= high
    )
    return covered / len(lows)


@dataclass(frozen=True)
class SubgroupBinning:
    """Locations grouped by a static covariate.

    ``bins`` holds per-bin location tuples in ascending covariate order;
    ``edges`` holds each bin's (lowest, highest) covariate value. Bins
    partition the binned locations and equal-count sizes differ by at
    most one, with remainders going to the earliest bins.
    """

    covariate_id: str
    bins: tuple
    edges: tuple

    def __post_init__(self):
        seen = set()
        for members in self.bins:
            for loc in members:
                if loc in seen:
                    raise ConfigError(f"location {loc!r} appears in two bins")
                seen.add(loc)

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def locations(self) -> list:
        return [loc for members in self.bins for loc in members]


def bin_locations(statics, covariate_id, n_bins, strategy="equal_count") -> SubgroupBinning:
    """Sort locations by one static covariate and cut equal-count bins.

    ``statics`` maps location_id -> {covariate_id: value}. Ties sort by
    location_id so the grouping is deterministic. When the location count
    does not divide evenly the earlier bins take one extra member.
    """
    if strategy != "equal_count":
        raise ConfigError(f"unknown binning strategy {strategy!r}")
    n_bins = int(n_bins)
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    values = {}
    for loc, row in statics.items():
        if covariate_id not in row:
            raise DataError(
                f"location {loc!r} has no value for covariate {covariate_id!r}"
            )
        value = row[covariate_id]
        if value is None or not math.isfinite(float(value)):
            raise DataError(
                f"location {loc!r} has a non-finite {covariate_id!r} value"
            )
        values[loc] = float(value)
    if n_bins > len(values):
        raise ConfigError(
            f"cannot cut {n_bins} bins from {len(values)} locations"
        )
    ordered = sorted(values, key=lambda loc: (values[loc], loc))
    base, extra = divmod(len(ordered), n_bins)
    bins = []
    edges = []
    start = 0
    for index in range(n_bins):
        size = base + (1 if index < extra else 0)
        members = tuple(ordered[start : start + size])
        bins.append(members)
        edges.append((values[members[0]], values[members[-1]]))
        start += size
    return SubgroupBinning(
        covariate_id=covariate_id, bins=tuple(bins), edges=tuple(edges)
    )


def _per_location_metric(frame, metric, location_id, symbol, mode, key):
    if metric == "nmae":
        return nmae(frame, location_id, symbol=symbol, key=key)
    pairs = _require(
        _pairs(frame, symbol, mode, key, locations=(location_id,)),
        f"{metric} over {symbol} at {location_id!r}",
    )
    if metric == "mae":
        return math.fsum(abs(p - a) for p, a in pairs) / len(pairs)
    if metric == "me":
        return math.fsum(p - a for p, a in pairs) / len(pairs)
    raise ConfigError(
        f"unknown fairness metric {metric!r}; expected one of {FAIRNESS_METRICS}"
    )


def fairness_report(
    frame,
    binning: SubgroupBinning,
    metrics=FAIRNESS_METRICS,
    symbol="D",
    mode=MULTI_HORIZON,
    key=None,
) -> dict:
    """Boxplot statistics of per-location errors within each bin.

    For each requested metric ("mae", "nmae", "me") and each bin, the
    member locations' metric values are summarized as min, q1, median,
    q3, max (quartiles by linear interpolation) plus the member count.
    """
    metrics = tuple(metrics)
    for metric in metrics:
        if metric not in FAIRNESS_METRICS:
            raise ConfigError(
                f"unknown fairness metric {metric!r}; expected a subset of "
                f"{FAIRNESS_METRICS}"
            )
    if not metrics:
        raise ConfigError("fairness_report needs at least one metric")
    report_bins = []
    for index, members in enumerate(binning.bins):
        low, high = binning.edges[index]
        stats = {}
        for metric in metrics:
            values = [
                _per_location_metric(frame, metric, loc, symbol, mode, key)
                for loc in members
            ]
            q0, q1, q2, q3, q4 = np.percentile(values, [0, 25, 50, 75, 100])
            stats[metric] = {
                "min": float(q0),
                "q1": float(q1),
                "median": float(q2),
                "q3": float(q3),
                "max": float(q4),
                "count": len(values),
            }
        report_bins.append(
            {
                "index": index,
                "locations": list(members),
                "value_range": [low, high],
                "stats": stats,
            }
        )
    return {
        "covariate": binning.covariate_id,
        "symbol": symbol,
        "mode": mode,
        "metrics": list(metrics),
        "bins": report_bins,
    }


def fairness_rows(report: dict) -> list:
    """Flatten a fairness report into one row per (bin, metric)."""
    rows = []
    for entry in report["bins"]:
        for metric in report["metrics"]:
            stats = entry["stats"][metric]
            rows.append(
                {
                    "covariate": report["covariate"],
                    "bin": entry["index"],
                    "range_low": entry["value_range"][0],
                    "range_high": entry["value_range"][1],
                    "metric": metric,
                    "min": stats["min"],
                    "q1": stats["q1"],
                    "median": stats["median"],
                    "q3": stats["q3"],
                    "max": stats["max"],
                    "count": stats["count"],
                }
            )
    return rows


FAIRNESS_CSV_COLUMNS = (
    "covariate",
    "bin",
    "range_low",
    "range_high",
    "metric",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "count",
)


def fairness_to_csv(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(FAIRNESS_CSV_COLUMNS))
        writer.writeheader()
        for row in fairness_rows(report):
            writer.writerow(row)


def underprediction_rates(
    frame,
    binning: SubgroupBinning,
    bootstrap_samples=1000,
    seed=0,
    symbol="D",
    key=None,
) -> list:
    """Per-bin share of locations underpredicted at the final horizon day.

    A location is eligible when its observed value on day
    train_end + horizon exceeds 1; it counts as underpredicted when the
    prediction is strictly below the actual (ties count as covered). The
    95 percent confidence interval comes from a percentile bootstrap over
    the bin's eligible locations, resampled with a per-bin substream of
    the given seed so results are reproducible bin by bin.
    """
    bootstrap_samples = int(bootstrap_samples)
    if bootstrap_samples < 1:
        raise ConfigError(
            f"bootstrap_samples must be >= 1, got {bootstrap_samples}"
        )
    if key is None:
        key = frame.default_key()
    last_day = frame.train_end + frame.horizon
    out = []
    for index, members in enumerate(binning.bins):
        flags = []
        eligible = []
        for loc in members:
            actual = frame.actual(loc, symbol, last_day)
            if actual is None or actual <= 1.0:
                continue
            eligible.append(loc)
            predicted = frame.prediction(loc, symbol, last_day, key)
            flags.append(1.0 if predicted < actual else 0.0)
        entry = {
            "bin": index,
            "locations": list(members),
            "eligible": len(eligible),
            "rate": None,
            "ci_low": None,
            "ci_high": None,
        }
        if eligible:
            flag_array = np.asarray(flags, dtype=float)
            entry["rate"] = float(flag_array.mean())
            rng = np.random.default_rng([seed, index])
            idx = rng.integers(0, len(flags), size=(bootstrap_samples, len(flags)))
            resampled = flag_array[idx].mean(axis=1)
            low, high = np.percentile(resampled, [2.5, 97.5])
            entry["ci_low"] = float(low)
            entry["ci_high"] = float(high)
        out.append(entry)
    return out
