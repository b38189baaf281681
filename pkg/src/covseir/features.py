"""Data ingestion and panel preparation.

Reads observation / covariate / population / adjacency CSV files, aligns
them on a contiguous integer day index, repairs and imputes, builds lagged
case-count and graph-neighborhood covariates, and min-max normalizes all
covariates into [0, 1]. The prepared ``PanelDataset`` is immutable and is
the single data object every downstream stage (training, forecasting,
evaluation) consumes. It also acts as the covariate source for the rate
encoders.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

# CSV column -> internal observable symbol. Q is cumulative confirmed,
# D cumulative deaths, H hospital census, C icu census, V ventilator
# census, R_doc cumulative documented recoveries.
OBSERVATION_COLUMNS = {
    "confirmed": "Q",
    "deaths": "D",
    "hospitalized": "H",
    "icu": "C",
    "ventilator": "V",
    "recovered": "R_doc",
}
OBSERVABLES = ("Q", "D", "H", "C", "V", "R_doc")
CUMULATIVE_OBSERVABLES = ("Q", "D")

GRAPH_AGGREGATORS = ("mean", "median", "std", "max", "sum")

DEFAULT_ANCHOR = _dt.date(2020, 1, 21)

# A location enters the compartmental regime on the first day its
# confirmed count exceeds this threshold.
REGIME_THRESHOLDS = {"state": 10.0, "county": 3.0}

DEFAULT_CASE_LAGS = (1, 7)


def _parse_date(text, where):
    try:
        return _dt.date.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"{where}: bad ISO date {text!r}") from exc


def _parse_float(text, where):
    try:
        value = float(text)
    except ValueError as exc:
        raise DataError(f"{where}: bad number {text!r}") from exc
    if not np.isfinite(value):
        raise DataError(f"{where}: non-finite value {text!r}")
    return value


# ---------------------------------------------------------------------------
# graph


@dataclass(frozen=True)
class GeoGraph:
    """Undirected adjacency between locations (no self-loops)."""

    neighbors: dict

    def __post_init__(self):
        for loc, nbrs in self.neighbors.items():
            if loc in nbrs:
                raise DataError(f"self-loop on location {loc!r}")
            for other in nbrs:
                if loc not in self.neighbors.get(other, frozenset()):
                    raise DataError(
                        f"asymmetric edge {loc!r} -> {other!r}"
                    )

    @classmethod
    def from_edges(cls, edges, known_locations=None):
        """Build a graph from (a, b) pairs.

        When ``known_locations`` is given, edges touching unknown
        locations are dropped and reported in the returned warning list
        instead of failing: national adjacency files routinely cover
        more counties than an observation panel does.
        """
        known = None if known_locations is None else set(known_locations)
        nbrs = {}
        if known is not None:
            for loc in known:
                nbrs[loc] = set()
        warnings = []
        for a, b in edges:
            if a == b:
                raise DataError(f"self-loop on location {a!r}")
            if known is not None and (a not in known or b not in known):
                warnings.append(
                    f"adjacency edge {a},{b} ignored: unknown location"
                )
                continue
            nbrs.setdefault(a, set()).add(b)
            nbrs.setdefault(b, set()).add(a)
        frozen = {loc: frozenset(v) for loc, v in nbrs.items()}
        return cls(neighbors=frozen), warnings

    def neighbors_of(self, location_id):
        return self.neighbors.get(location_id, frozenset())


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormalizationTable:
    """Per-covariate (min, max) pooled over all locations and days.

    Persisted with the prepared dataset so that forecast-time covariate
    values reuse the training statistics.
    """

    ranges: dict

    def normalize_value(self, covariate_id, x):
        lo, hi = self._range(covariate_id)
        if hi == lo:
            return 0.0
        return (x - lo) / (hi - lo)

    def denormalize_value(self, covariate_id, x):
        lo, hi = self._range(covariate_id)
        if hi == lo:
            return lo
        return lo + x * (hi - lo)

    def normalize_array(self, covariate_id, values):
        lo, hi = self._range(covariate_id)
        arr = np.asarray(values, dtype=float)
        if hi == lo:
            return np.zeros_like(arr)
        return (arr - lo) / (hi - lo)

    def denormalize_array(self, covariate_id, values):
        lo, hi = self._range(covariate_id)
        arr = np.asarray(values, dtype=float)
        if hi == lo:
            return np.full_like(arr, lo)
        return lo + arr * (hi - lo)

    def _range(self, covariate_id):
        try:
            return self.ranges[covariate_id]
        except KeyError:
            raise DataError(
                f"no normalization range for covariate {covariate_id!r}"
            ) from None

    def to_dict(self):
        return {k: [lo, hi] for k, (lo, hi) in sorted(self.ranges.items())}

    @classmethod
    def from_dict(cls, payload):
        return cls(ranges={k: (float(v[0]), float(v[1])) for k, v in payload.items()})


# ---------------------------------------------------------------------------
# ingestion report


@dataclass
class IngestReport:
    """Everything noteworthy that happened during preparation."""

    warnings: list = field(default_factory=list)
    monotone_repairs: list = field(default_factory=list)
    imputed_time_varying: list = field(default_factory=list)
    imputed_static: list = field(default_factory=list)

    def warn(self, message):
        self.warnings.append(message)

    def to_dict(self):
        return {
            "warnings": list(self.warnings),
            "monotone_repairs": [list(r) for r in self.monotone_repairs],
            "imputed_time_varying": [list(r) for r in self.imputed_time_varying],
            "imputed_static": [list(r) for r in self.imputed_static],
        }


# ---------------------------------------------------------------------------
# core transforms


def impute_time_varying(series):
    """Fill gaps by forward fill, then backward fill for leading gaps.

    Returns (filled copy, status) with status one of ``"complete"``
    (nothing missing), ``"filled"`` (some gaps filled), ``"all_missing"``
    (no present value at all; the series becomes zeros and the caller
    should record a warning).
    """
    arr = np.asarray(series, dtype=float)
    out = arr.copy()
    present = np.isfinite(out)
    if present.all():
        return out, "complete"
    if not present.any():
        return np.zeros_like(out), "all_missing"
    last = None
    for i in range(out.size):
        if present[i]:
            last = out[i]
        elif last is not None:
            out[i] = last
    first_idx = int(np.argmax(present))
    out[:first_idx] = out[first_idx]
    return out, "filled"


def impute_static(values, covariate_id):
    """Median-impute missing per-location static values.

    Even-count median is the mean of the two central order statistics.
    A covariate with no present value at all cannot be imputed.
    """
    arr = np.asarray(values, dtype=float)
    present = np.isfinite(arr)
    if not present.any():
        raise ConfigError(
            f"static covariate {covariate_id!r} has no values anywhere"
        )
    if present.all():
        return arr.copy(), []
    med = float(np.median(arr[present]))
    out = arr.copy()
    filled = [i for i in range(arr.size) if not present[i]]
    out[~present] = med
    return out, filled


def lag_series(values, mask, lag):
    """Shift a (values, presence mask) pair right by ``lag`` days.

    Days with no source value (start of panel, or masked source) come
    back as NaN so the regular imputation pass can handle them.
    """
    if lag < 1:
        raise ConfigError(f"case-count lag must be >= 1, got {lag}")
    n = values.shape[-1]
    out = np.full_like(np.asarray(values, dtype=float), np.nan)
    if lag < n:
        src = np.asarray(values, dtype=float)[..., : n - lag]
        ok = np.asarray(mask, dtype=bool)[..., : n - lag]
        out[..., lag:] = np.where(ok, src, np.nan)
    return out


def graph_aggregate(values, locations, graph, aggregator):
    """Aggregate a (n_locations, n_days) covariate over graph neighbors.

    Self is excluded. Locations with no neighbors get all-zero rows and
    a warning. Returns (array, warnings).
    """
    if aggregator not in GRAPH_AGGREGATORS:
        raise ConfigError(f"unknown graph aggregator {aggregator!r}")
    arr = np.asarray(values, dtype=float)
    index = {loc: i for i, loc in enumerate(locations)}
    out = np.zeros_like(arr)
    warnings = []
    for loc in locations:
        nbrs = sorted(graph.neighbors_of(loc))
        row = index[loc]
        if not nbrs:
            warnings.append(
                f"location {loc} has no graph neighbors; "
                f"{aggregator} aggregate set to 0"
            )
            continue
        block = arr[[index[n] for n in nbrs], :]
        if aggregator == "mean":
            out[row] = block.mean(axis=0)
        elif aggregator == "median":
            out[row] = np.median(block, axis=0)
        elif aggregator == "std":
            out[row] = block.std(axis=0)
        elif aggregator == "max":
            out[row] = block.max(axis=0)
        else:
            out[row] = block.sum(axis=0)
    return out, warnings


def monotone_repair(values, mask):
    """Force a cumulative series to be nondecreasing over observed days.

    Restated ground truth occasionally dips; the repair replaces each
    observed value with the running maximum of observed values so far.
    Returns (repaired, [(day_index, old, new), ...]).
    """
    out = np.asarray(values, dtype=float).copy()
    ok = np.asarray(mask, dtype=bool)
    repairs = []
    best = -np.inf
    for i in range(out.size):
        if not ok[i]:
            continue
        if out[i] < best:
            repairs.append((i, float(out[i]), float(best)))
            out[i] = best
        else:
            best = out[i]
    return out, repairs


# ---------------------------------------------------------------------------
# the prepared panel


@dataclass
class PanelDataset:
    """Aligned, imputed, normalized panel for one run.

    Field layout:
      locations        ordered location ids
      level            "state" or "county"
      anchor           calendar date of absolute day 0
      first_day        absolute day index of column 0
      observations     {symbol: (n_loc, n_days) float array}
      observation_mask {symbol: (n_loc, n_days) bool array}
      time_varying     {covariate_id: (n_loc, n_days) float array, in [0,1]}
      statics          {covariate_id: (n_loc,) float array, in [0,1]}
      population       {location_id: float}
      normalization    NormalizationTable for every covariate
      graph            GeoGraph (county level; empty otherwise)

    Implements the covariate-source protocol used by the rate encoders:
    ``static_value``, ``value_at``, ``has_static``, ``has_time_varying``.
    Days before ``first_day`` hold the first column (edge hold); days at
    or past the panel end are a DataError, because forecasting appends
    explicitly extended covariates instead of guessing.
    """

    locations: list
    level: str
    anchor: _dt.date
    first_day: int
    observations: dict
    observation_mask: dict
    time_varying: dict
    statics: dict
    population: dict
    normalization: NormalizationTable
    graph: GeoGraph

    def __post_init__(self):
        if self.level not in REGIME_THRESHOLDS:
            raise ConfigError(f"unknown level {self.level!r}")
        self._loc_index = {loc: i for i, loc in enumerate(self.locations)}
        sizes = {arr.shape for arr in self.observations.values()}
        sizes |= {arr.shape for arr in self.time_varying.values()}
        if len(sizes) > 1:
            raise DataError(f"ragged panel arrays: {sorted(sizes)}")

    # -- shape ------------------------------------------------------------

    @property
    def n_days(self):
        for arr in self.observations.values():
            return arr.shape[1]
        for arr in self.time_varying.values():
            return arr.shape[1]
        return 0

    @property
    def last_day(self):
        return self.first_day + self.n_days - 1

    def day_of_date(self, when):
        return (when - self.anchor).days

    def date_of_day(self, day):
        return self.anchor + _dt.timedelta(days=int(day))

    def _column(self, day):
        idx = int(day) - self.first_day
        if idx < 0:
            return 0
        if idx >= self.n_days:
            raise DataError(
                f"day {day} is past the panel end (last day {self.last_day})"
            )
        return idx

    def _row(self, location_id):
        try:
            return self._loc_index[location_id]
        except KeyError:
            raise DataError(f"unknown location {location_id!r}") from None

    # -- covariate source protocol ----------------------------------------

    def has_static(self, covariate_id):
        return covariate_id in self.statics

    def has_time_varying(self, covariate_id):
        return covariate_id in self.time_varying

    def static_value(self, location_id, covariate_id):
        row = self._row(location_id)
        try:
            arr = self.statics[covariate_id]
        except KeyError:
            raise DataError(
                f"unknown static covariate {covariate_id!r}"
            ) from None
        return float(arr[row])

    def value_at(self, location_id, covariate_id, t):
        row = self._row(location_id)
        try:
            arr = self.time_varying[covariate_id]
        except KeyError:
            raise DataError(
                f"unknown time-varying covariate {covariate_id!r}"
            ) from None
        return float(arr[row, self._column(t)])

    # -- observations ------------------------------------------------------

    def observation(self, location_id, symbol):
        """(values, mask) arrays over the panel days for one observable."""
        row = self._row(location_id)
        try:
            return (
                self.observations[symbol][row],
                self.observation_mask[symbol][row],
            )
        except KeyError:
            raise DataError(f"unknown observable {symbol!r}") from None

    def observed_value(self, location_id, symbol, day):
        values, mask = self.observation(location_id, symbol)
        idx = int(day) - self.first_day
        if idx < 0 or idx >= self.n_days:
            return None
        if not mask[idx]:
            return None
        return float(values[idx])

    def population_of(self, location_id):
        try:
            return self.population[location_id]
        except KeyError:
            raise DataError(f"unknown location {location_id!r}") from None

    def regime_start(self, location_id):
        """First absolute day with observed confirmed above the level
        threshold, or None if the location never crosses it."""
        values, mask = self.observation(location_id, "Q")
        threshold = REGIME_THRESHOLDS[self.level]
        hits = np.flatnonzero(mask & (values > threshold))
        if hits.size == 0:
            return None
        return self.first_day + int(hits[0])

    def covariate_ids(self):
        return sorted(self.time_varying) + sorted(self.statics)

    # -- serialization -----------------------------------------------------

    def to_payload(self):
        def grid(d):
            return {k: np.asarray(v, dtype=float).tolist() for k, v in sorted(d.items())}

        return {
            "format": "covseir-panel-v1",
            "locations": list(self.locations),
            "level": self.level,
            "anchor": self.anchor.isoformat(),
            "first_day": self.first_day,
            "observations": grid(self.observations),
            "observation_mask": {
                k: np.asarray(v, dtype=int).tolist()
                for k, v in sorted(self.observation_mask.items())
            },
            "time_varying": grid(self.time_varying),
            "statics": grid(self.statics),
            "population": {k: float(v) for k, v in sorted(self.population.items())},
            "normalization": self.normalization.to_dict(),
            "graph": {
                loc: sorted(nbrs)
                for loc, nbrs in sorted(self.graph.neighbors.items())
            },
        }

    @classmethod
    def from_payload(cls, payload):
        if payload.get("format") != "covseir-panel-v1":
            raise DataError(
                f"unrecognized panel format {payload.get('format')!r}"
            )
        return cls(
            locations=list(payload["locations"]),
            level=payload["level"],
            anchor=_dt.date.fromisoformat(payload["anchor"]),
            first_day=int(payload["first_day"]),
            observations={
                k: np.asarray(v, dtype=float)
                for k, v in payload["observations"].items()
            },
            observation_mask={
                k: np.asarray(v, dtype=int).astype(bool)
                for k, v in payload["observation_mask"].items()
            },
            time_varying={
                k: np.asarray(v, dtype=float)
                for k, v in payload["time_varying"].items()
            },
            statics={
                k: np.asarray(v, dtype=float)
                for k, v in payload["statics"].items()
            },
            population={k: float(v) for k, v in payload["population"].items()},
            normalization=NormalizationTable.from_dict(payload["normalization"]),
            graph=GeoGraph(
                neighbors={
                    loc: frozenset(nbrs)
                    for loc, nbrs in payload["graph"].items()
                }
            ),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_payload(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_payload(json.load(fh))


# ---------------------------------------------------------------------------
# CSV readers


def _read_rows(path, required_columns, what):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{what} file {path}: empty or missing header")
        missing = [c for c in required_columns if c not in reader.fieldnames]
        if missing:
            raise DataError(
                f"{what} file {path}: missing columns {', '.join(missing)}"
            )
        return list(reader)


def read_observations_csv(path):
    """-> {(location_id, date): {symbol: value}} with absent = missing."""
    rows = _read_rows(
        path, ["location_id", "date"] + sorted(OBSERVATION_COLUMNS), "observations"
    )
    out = {}
    for i, row in enumerate(rows, start=2):
        where = f"observations line {i}"
        loc = row["location_id"].strip()
        if not loc:
            raise DataError(f"{where}: empty location_id")
        when = _parse_date(row["date"].strip(), where)
        key = (loc, when)
        if key in out:
            raise DataError(f"{where}: duplicate row for {loc} {when}")
        values = {}
        for column, symbol in OBSERVATION_COLUMNS.items():
            text = (row.get(column) or "").strip()
            if not text:
                continue
            value = _parse_float(text, where)
            if value < 0:
                raise DataError(
                    f"{where}: negative {column} value {value}"
                )
            values[symbol] = value
        out[key] = values
    if not out:
        raise DataError(f"observations file {path}: no data rows")
    return out


def read_time_varying_csv(path):
    """-> {(covariate_id, location_id, date): value}"""
    rows = _read_rows(
        path, ["location_id", "date", "covariate_id", "value"], "time-varying"
    )
    out = {}
    for i, row in enumerate(rows, start=2):
        where = f"time-varying line {i}"
        loc = row["location_id"].strip()
        cov = row["covariate_id"].strip()
        if not loc or not cov:
            raise DataError(f"{where}: empty location_id or covariate_id")
        when = _parse_date(row["date"].strip(), where)
        key = (cov, loc, when)
        if key in out:
            raise DataError(f"{where}: duplicate row for {cov} {loc} {when}")
        text = (row.get("value") or "").strip()
        out[key] = None if not text else _parse_float(text, where)
    return out


def read_statics_csv(path):
    """-> {(covariate_id, location_id): value}"""
    rows = _read_rows(path, ["location_id", "covariate_id", "value"], "statics")
    out = {}
    for i, row in enumerate(rows, start=2):
        where = f"statics line {i}"
        loc = row["location_id"].strip()
        cov = row["covariate_id"].strip()
        if not loc or not cov:
            raise DataError(f"{where}: empty location_id or covariate_id")
        key = (cov, loc)
        if key in out:
            raise DataError(f"{where}: duplicate row for {cov} {loc}")
        text = (row.get("value") or "").strip()
        out[key] = None if not text else _parse_float(text, where)
    return out


def read_population_csv(path):
    """-> {location_id: population}"""
    rows = _read_rows(path, ["location_id", "population"], "population")
    out = {}
    for i, row in enumerate(rows, start=2):
        where = f"population line {i}"
        loc = row["location_id"].strip()
        if not loc:
            raise DataError(f"{where}: empty location_id")
        if loc in out:
            raise DataError(f"{where}: duplicate location {loc}")
        value = _parse_float((row.get("population") or "").strip(), where)
        if value <= 0:
            raise DataError(f"{where}: population must be positive, got {value}")
        out[loc] = value
    return out


def read_adjacency_csv(path):
    """-> list of (loc_a, loc_b) edges."""
    rows = _read_rows(path, ["location_id_a", "location_id_b"], "adjacency")
    edges = []
    for i, row in enumerate(rows, start=2):
        where = f"adjacency line {i}"
        a = row["location_id_a"].strip()
        b = row["location_id_b"].strip()
        if not a or not b:
            raise DataError(f"{where}: empty location id")
        edges.append((a, b))
    return edges


# ---------------------------------------------------------------------------
# preparation pipeline


def prepare_dataset(
    observations,
    time_varying,
    statics,
    population,
    adjacency_edges,
    level,
    anchor=DEFAULT_ANCHOR,
    case_lags=DEFAULT_CASE_LAGS,
    graph_covariates=None,
    graph_aggregators=GRAPH_AGGREGATORS,
):
    """Assemble the immutable panel from parsed CSV structures.

    Pipeline order: align on the day grid -> monotone-repair cumulative
    observations -> derive lagged case-count covariates -> impute
    time-varying gaps (ffill then bfill) -> median-impute statics ->
    county-level graph aggregation -> pooled [0,1] normalization.

    Returns (PanelDataset, IngestReport).
    """
    if level not in REGIME_THRESHOLDS:
        raise ConfigError(f"unknown level {level!r}")
    report = IngestReport()

    locations = sorted({loc for loc, _ in observations})
    for loc in locations:
        if loc not in population:
            raise DataError(f"location {loc} has no population row")

    dates = sorted({when for _, when in observations})
    first_day = (dates[0] - anchor).days
    last_day = (dates[-1] - anchor).days
    n_days = last_day - first_day + 1
    n_loc = len(locations)
    loc_index = {loc: i for i, loc in enumerate(locations)}

    obs_values = {s: np.zeros((n_loc, n_days)) for s in OBSERVABLES}
    obs_mask = {s: np.zeros((n_loc, n_days), dtype=bool) for s in OBSERVABLES}
    for (loc, when), values in observations.items():
        row = loc_index[loc]
        col = (when - anchor).days - first_day
        for symbol, value in values.items():
            obs_values[symbol][row, col] = value
            obs_mask[symbol][row, col] = True

    for symbol in CUMULATIVE_OBSERVABLES:
        for loc in locations:
            row = loc_index[loc]
            repaired, repairs = monotone_repair(
                obs_values[symbol][row], obs_mask[symbol][row]
            )
            obs_values[symbol][row] = repaired
            for col, old, new in repairs:
                report.monotone_repairs.append(
                    (symbol, loc, first_day + col, old, new)
                )

    # Raw (pre-imputation) time-varying grids, NaN = missing.
    tv_ids = sorted({cov for cov, _, _ in time_varying})
    tv_raw = {cov: np.full((n_loc, n_days), np.nan) for cov in tv_ids}
    for (cov, loc, when), value in time_varying.items():
        if loc not in loc_index:
            report.warn(
                f"time-varying covariate {cov} row for unknown location "
                f"{loc} ignored"
            )
            continue
        col = (when - anchor).days - first_day
        if col < 0 or col >= n_days:
            report.warn(
                f"time-varying covariate {cov} row for {loc} at "
                f"{when.isoformat()} outside the observation window ignored"
            )
            continue
        if value is not None:
            tv_raw[cov][loc_index[loc], col] = value

    for lag in case_lags:
        for symbol, stem in (("Q", "confirmed"), ("D", "deaths")):
            name = f"{stem}_lag_{lag}"
            if name in tv_raw:
                raise ConfigError(
                    f"derived covariate name {name!r} collides with input"
                )
            tv_raw[name] = lag_series(obs_values[symbol], obs_mask[symbol], lag)

    tv_filled = {}
    for cov in sorted(tv_raw):
        grid = np.zeros((n_loc, n_days))
        for loc in locations:
            row = loc_index[loc]
            filled, status = impute_time_varying(tv_raw[cov][row])
            grid[row] = filled
            if status == "all_missing":
                report.warn(
                    f"time-varying covariate {cov} for {loc} has no values; "
                    f"using zeros"
                )
                report.imputed_time_varying.append((cov, loc, "all_missing"))
            elif status == "filled":
                report.imputed_time_varying.append((cov, loc, "filled"))
        tv_filled[cov] = grid

    static_ids = sorted({cov for cov, _ in statics})
    static_filled = {}
    for cov in static_ids:
        raw = np.full(n_loc, np.nan)
        for loc in locations:
            value = statics.get((cov, loc))
            if value is not None:
                raw[loc_index[loc]] = value
        filled, missing_rows = impute_static(raw, cov)
        static_filled[cov] = filled
        for row in missing_rows:
            report.imputed_static.append((cov, locations[row]))

    if level == "county":
        graph, graph_warnings = GeoGraph.from_edges(adjacency_edges, locations)
        for w in graph_warnings:
            report.warn(w)
        for loc in locations:
            if not graph.neighbors_of(loc):
                report.warn(
                    f"location {loc} has no graph neighbors; its "
                    f"neighborhood covariates are all 0"
                )
        base_ids = list(tv_filled) if graph_covariates is None else list(graph_covariates)
        for cov in sorted(base_ids):
            if cov not in tv_filled:
                raise ConfigError(
                    f"graph covariate {cov!r} is not a time-varying covariate"
                )
            for agg in graph_aggregators:
                derived, _ = graph_aggregate(tv_filled[cov], locations, graph, agg)
                tv_filled[f"{cov}__nbr_{agg}"] = derived
    else:
        graph = GeoGraph(neighbors={})
        if adjacency_edges:
            report.warn(
                "adjacency edges ignored: graph features apply to county "
                "level only"
            )

    ranges = {}
    for cov, grid in tv_filled.items():
        ranges[cov] = (float(grid.min()), float(grid.max()))
    for cov, vec in static_filled.items():
        ranges[cov] = (float(vec.min()), float(vec.max()))
    table = NormalizationTable(ranges=ranges)

    tv_norm = {cov: table.normalize_array(cov, grid) for cov, grid in tv_filled.items()}
    static_norm = {
        cov: table.normalize_array(cov, vec) for cov, vec in static_filled.items()
    }

    panel = PanelDataset(
        locations=locations,
        level=level,
        anchor=anchor,
        first_day=first_day,
        observations=obs_values,
        observation_mask=obs_mask,
        time_varying=tv_norm,
        statics=static_norm,
        population={loc: float(population[loc]) for loc in locations},
        normalization=table,
        graph=graph,
    )
    return panel, report


def load_dataset_from_csv(
    observations_path,
    population_path,
    level,
    time_varying_path=None,
    statics_path=None,
    adjacency_path=None,
    anchor=DEFAULT_ANCHOR,
    case_lags=DEFAULT_CASE_LAGS,
    graph_covariates=None,
):
    """End-to-end CSV ingestion convenience wrapper."""
    observations = read_observations_csv(observations_path)
    time_varying = (
        read_time_varying_csv(time_varying_path) if time_varying_path else {}
    )
    statics = read_statics_csv(statics_path) if statics_path else {}
    population = read_population_csv(population_path)
    edges = read_adjacency_csv(adjacency_path) if adjacency_path else []
    return prepare_dataset(
        observations,
        time_varying,
        statics,
        population,
        edges,
        level,
        anchor=anchor,
        case_lags=case_lags,
        graph_covariates=graph_covariates,
    )
