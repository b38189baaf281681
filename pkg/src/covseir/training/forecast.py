"""Forecasting from a trained artifact.

The deployment path: free-run the fitted dynamics over the training
history to reach the state at the training end T, extend every
time-varying covariate tau days past T with the artifact's per-location
autoregressive forecasters (hold-last where a forecaster could not be
fit), then keep stepping the dynamics through the extension. Interval
artifacts map each propagated observable through its per-quantile affine
head and sort-repair crossings. Values are clamped to >= 0 only at
serialization; the in-memory result keeps the raw trajectories.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field

from ..encoders import TIME_VARYING, CovariateForecaster, forecast_covariate
from ..errors import ConfigError, DataError
from ..features import OBSERVABLES
from .loop import TrainArtifact
from .model import FREE_RUNNING, predictions_of, rollout_all_locations

__all__ = [
    "ExtendedCovariateSource",
    "ForecastResult",
    "forecast",
    "forecast_to_csv",
]

POINT_KEY = "point"


class ExtendedCovariateSource:
    """Covariate reads split at the training end: the panel serves days up
    to T, forecaster extensions serve T+1 onward. Days past the panel
    start keep the panel's edge-hold behavior."""

    def __init__(self, panel, train_end: int, extensions: dict, steps: int):
        self._panel = panel
        self._train_end = int(train_end)
        self._extensions = extensions
        self._steps = int(steps)

    def has_static(self, covariate_id):
        return self._panel.has_static(covariate_id)

    def has_time_varying(self, covariate_id):
        return self._panel.has_time_varying(covariate_id)

    def static_value(self, location_id, covariate_id):
        return self._panel.static_value(location_id, covariate_id)

    def value_at(self, location_id, covariate_id, t):
        t = int(t)
        if t <= self._train_end:
            return self._panel.value_at(location_id, covariate_id, t)
        offset = t - self._train_end - 1
        if offset >= self._steps:
            raise DataError(
                f"covariate {covariate_id!r} requested on day {t}, beyond the "
                f"extended horizon {self._train_end + self._steps}"
            )
        try:
            series = self._extensions[covariate_id][location_id]
        except KeyError:
            raise DataError(
                f"no covariate extension for {covariate_id!r} at "
                f"{location_id!r}"
            ) from None
        return float(series[offset])


@dataclass
class ForecastResult:
    """Per-location forecast trajectories for days train_end+1 ..
    train_end+horizon.

    ``values[location][symbol]`` maps a quantile (float) or "point" to the
    list of raw predicted values in day order. ``days`` are absolute day
    indices; dates() converts them via the artifact's anchor.
    """

    train_end: int
    horizon: int
    anchor: str
    locations: tuple
    quantiles: tuple | None
    values: dict = field(default_factory=dict)

    @property
    def days(self) -> list:
        return list(range(self.train_end + 1, self.train_end + self.horizon + 1))

    def dates(self) -> list:
        anchor = _dt.date.fromisoformat(self.anchor)
        return [anchor + _dt.timedelta(days=d) for d in self.days]

    def keys(self) -> list:
        if self.quantiles is None:
            return [POINT_KEY]
        return list(self.quantiles)

    def trajectory(self, location_id, symbol, key=None):
        if key is None:
            key = POINT_KEY if self.quantiles is None else _median_key(self.quantiles)
        try:
            return list(self.values[location_id][symbol][key])
        except KeyError:
            raise DataError(
                f"no forecast for location {location_id!r}, symbol {symbol!r}, "
                f"key {key!r}"
            ) from None


def _median_key(quantiles):
    """The 0.5 quantile when present, else the middle of the sorted list."""
    qs = sorted(quantiles)
    if 0.5 in qs:
        return 0.5
    return qs[len(qs) // 2]


def _extend_covariates(artifact: TrainArtifact, panel, steps: int) -> dict:
    """Normalized per-(covariate, location) extensions for the forecast
    days, produced by the artifact's stored forecaster weights."""
    extensions = {}
    tv_ids = sorted(
        {s.covariate_id for s in artifact.spec.slots if s.kind == TIME_VARYING}
    )
    end_col = artifact.train_end - panel.first_day + 1
    for cov in tv_ids:
        if not panel.has_time_varying(cov):
            raise DataError(
                f"panel lacks time-varying covariate {cov!r} required by the "
                f"artifact"
            )
        per_loc = {}
        grid = panel.time_varying[cov]
        weights_by_loc = artifact.forecasters.get(cov, {})
        for loc in artifact.spec.locations:
            row = panel.locations.index(loc)
            history = [float(x) for x in grid[row, :end_col]]
            weights = weights_by_loc.get(loc)
            if weights is None:
                last = history[-1] if history else 0.0
                per_loc[loc] = [last] * steps
            else:
                fc = CovariateForecaster(
                    weights=tuple(float(w) for w in weights),
                    zeta=artifact.zeta,
                )
                per_loc[loc] = forecast_covariate(fc, history, steps)
        extensions[cov] = per_loc
    return extensions


def _check_panel(artifact: TrainArtifact, panel) -> None:
    for loc in artifact.spec.locations:
        if loc not in panel.locations:
            raise DataError(f"panel lacks location {loc!r} required by the artifact")
    for slot in artifact.spec.slots:
        if slot.kind == TIME_VARYING:
            if not panel.has_time_varying(slot.covariate_id):
                raise DataError(
                    f"panel lacks time-varying covariate {slot.covariate_id!r} "
                    f"required by the artifact"
                )
        elif not panel.has_static(slot.covariate_id):
            raise DataError(
                f"panel lacks static covariate {slot.covariate_id!r} required "
                f"by the artifact"
            )
    if artifact.train_end > panel.last_day:
        raise DataError(
            f"artifact was trained through day {artifact.train_end} but the "
            f"panel ends on day {panel.last_day}"
        )
    if dict(panel.normalization.to_dict()) != dict(artifact.normalization):
        raise ConfigError(
            "panel normalization differs from the one the artifact was "
            "trained with; re-ingest with the original data or retrain"
        )


def forecast(artifact: TrainArtifact, panel, horizon: int | None = None) -> ForecastResult:
    """Forecast tau days past the artifact's training end.

    horizon=0 returns an empty result. Raises DataError when the panel is
    missing a location or covariate the artifact needs.
    """
    tau = artifact.horizon if horizon is None else int(horizon)
    if tau < 0:
        raise ConfigError(f"horizon must be >= 0, got {tau}")
    _check_panel(artifact, panel)
    spec = artifact.spec
    quantiles = spec.quantiles
    result = ForecastResult(
        train_end=artifact.train_end,
        horizon=tau,
        anchor=artifact.anchor,
        locations=spec.locations,
        quantiles=quantiles,
        values={},
    )
    if tau == 0:
        return result

    train_end = artifact.train_end
    train_start = train_end - artifact.history
    extensions = _extend_covariates(artifact, panel, tau)
    source = ExtendedCovariateSource(panel, train_end, extensions, tau)
    params = artifact.parameters
    rollouts = rollout_all_locations(
        spec, params, source, None, (train_start, train_end + tau), FREE_RUNNING
    )
    predictions = predictions_of(rollouts)
    heads = spec.bind_heads(params)
    days = result.days
    for loc in spec.locations:
        per_symbol = {}
        for symbol in OBSERVABLES:
            series = predictions[loc][symbol]
            raw = [float(series[d]) for d in days]
            if quantiles is None:
                per_symbol[symbol] = {POINT_KEY: raw}
            else:
                staged = {
                    q: [heads[(symbol, q)][0] * v + heads[(symbol, q)][1] for v in raw]
                    for q in quantiles
                }
                per_symbol[symbol] = _sort_repair(staged, quantiles, len(days))
        result.values[loc] = per_symbol
    return result


def _sort_repair(staged: dict, quantiles, n_days: int) -> dict:
    """Reassign each day's values across quantiles in ascending order so
    the emitted trajectories never cross."""
    order = sorted(quantiles)
    repaired = {q: [0.0] * n_days for q in quantiles}
    for i in range(n_days):
        column = sorted(staged[q][i] for q in quantiles)
        for q, value in zip(order, column):
            repaired[q][i] = value
    return repaired


def forecast_to_csv(result: ForecastResult, path) -> None:
    """location_id,date,compartment,quantile,value rows, values clamped to
    >= 0, in (location, day, symbol, quantile) order."""
    anchor = _dt.date.fromisoformat(result.anchor)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_id", "date", "compartment", "quantile", "value"])
        for loc in result.locations:
            for i, day in enumerate(result.days):
                when = (anchor + _dt.timedelta(days=day)).isoformat()
                for symbol in OBSERVABLES:
                    per_key = result.values[loc][symbol]
                    for key in result.keys():
                        value = max(0.0, float(per_key[key][i]))
                        label = POINT_KEY if key == POINT_KEY else repr(float(key))
                        writer.writerow([loc, when, symbol, label, repr(value)])
