"""Synthetic epidemic worlds for tests, benchmarks, and the bundled fixture.

The generator builds covariate series first, maps them through fixed
sigmoid-bounded rules to daily transition rates (the same functional family
the trainable encoders span, so recovery is possible in principle), and
iterates the exact dynamics from seeded initial states. Observations can
carry multiplicative noise and reporting holes; the noiseless truth is kept
alongside for scoring.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import value_of
from .dynamics import RATE_NAMES, CompartmentState, RateSet, confirmed, step
from .errors import ConfigError
from .features import DEFAULT_ANCHOR, OBSERVATION_COLUMNS, OBSERVABLES

__all__ = [
    "SyntheticWorldConfig",
    "SyntheticWorld",
    "generate_world",
    "world_to_csvs",
]


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _smoothstep(t: float, start: float, width: float) -> float:
    """0 before start, 1 after start+width, cubic ramp between."""
    if width <= 0:
        return 1.0 if t >= start else 0.0
    u = (t - start) / width
    u = min(1.0, max(0.0, u))
    return u * u * (3.0 - 2.0 * u)


# (lower bound, upper bound, bias, {covariate: weight}); the rate on day t
# is lo + (hi - lo) * sigmoid(bias + sum_c w_c * covariate_c[t - 1]).
RATE_RULES = {
    "beta_doc": (0.0, 10.0, -4.4, {"mobility": 1.6, "intervention": -1.1}),
    "beta_undoc": (0.0, 10.0, -4.6, {"mobility": 1.8, "intervention": -0.9}),
    "alpha": (0.0, 0.2, 0.5, {"intervention": -0.3}),
    "rho_I_doc": (0.0, 0.1, 0.3, {"mobility": 0.2}),
    "kappa_I_doc": (0.0, 0.1, -2.0, {"intervention": -0.2}),
    "h": (0.0, 0.1, -0.8, {"intervention": 0.3}),
    "rho_I_undoc": (0.0, 0.1, 0.4, {}),
    "gamma": (0.0, 0.1, -0.5, {"intervention": 0.4}),
    "c_icu": (0.0, 0.1, -1.2, {}),
    "kappa_H": (0.0, 0.1, -1.6, {"intervention": -0.3}),
    "rho_H": (0.0, 0.1, 0.1, {}),
    "v_vent": (0.0, 0.1, -1.3, {}),
    "kappa_C": (0.0, 0.1, -1.0, {}),
    "rho_C": (0.0, 0.1, -0.2, {}),
    "kappa_V": (0.0, 0.1, -0.6, {}),
    "rho_V": (0.0, 0.1, -0.7, {}),
    "eta": (0.0, 0.1, -8.0, {}),
}


@dataclass(frozen=True)
class SyntheticWorldConfig:
    locations: tuple = ("north", "south", "east")
    n_days: int = 164
    anchor: _dt.date = DEFAULT_ANCHOR
    populations: tuple = (2.4e6, 1.1e6, 3.2e6)
    covariates: tuple = ("mobility", "intervention")
    seed: int = 0
    noise_scale: float = 0.0
    observation_holes: bool = True
    level: str = "state"

    def __post_init__(self) -> None:
        if len(self.populations) != len(self.locations):
            raise ConfigError("one population per location required")
        if self.n_days < 3:
            raise ConfigError(f"n_days must be >= 3, got {self.n_days}")
        for cov in self.covariates:
            if cov not in ("mobility", "intervention"):
                raise ConfigError(f"no generator rule for covariate {cov!r}")


@dataclass
class SyntheticWorld:
    """Generated panel inputs plus the noiseless truth.

    observations/time_varying/statics/population use the same in-memory
    shapes the CSV readers produce, so prepare_dataset accepts them
    directly. ``truth[location][symbol]`` is the clean value list over all
    days; ``rates[location]`` the daily RateSet list driving transitions
    into days 1..n_days-1.
    """

    config: SyntheticWorldConfig
    observations: dict
    time_varying: dict
    statics: dict
    population: dict
    truth: dict
    rates: dict
    covariate_series: dict = field(default_factory=dict)


def _covariate_paths(config: SyntheticWorldConfig) -> dict:
    """Raw covariate series per (covariate, location), deterministic in the
    seed. Mobility dips when the intervention arrives and partially
    recovers late; onsets differ by location."""
    rng = np.random.default_rng([config.seed, 17])
    series = {}
    for li, loc in enumerate(config.locations):
        onset = 35.0 + 10.0 * li
        relax = 105.0 + 8.0 * li
        phase = 2.0 * li
        t = np.arange(config.n_days, dtype=float)
        ramp = np.array([_smoothstep(x, onset, 14.0) for x in t])
        back = np.array([_smoothstep(x, relax, 20.0) for x in t])
        intervention = ramp - 0.35 * back
        mobility = (
            0.82
            - 0.38 * ramp
            + 0.18 * back
            + 0.05 * np.sin(2.0 * math.pi * t / 28.0 + phase)
            + rng.normal(0.0, 0.008, size=config.n_days)
        )
        series[("mobility", loc)] = np.clip(mobility, 0.05, 1.2)
        series[("intervention", loc)] = np.clip(intervention, 0.0, 1.0)
    return series


def _daily_rates(config, series, loc) -> list:
    out = []
    for t in range(1, config.n_days):
        values = {}
        for rate in RATE_NAMES:
            lo, hi, bias, weights = RATE_RULES[rate]
            arg = bias
            for cov, w in weights.items():
                if cov in config.covariates:
                    arg += w * float(series[(cov, loc)][t - 1])
            values[rate] = lo + (hi - lo) * _sigmoid(arg)
        out.append(RateSet(**values))
    return out


def _initial_state(rng, population) -> CompartmentState:
    e0 = rng.uniform(80.0, 150.0)
    iu0 = rng.uniform(60.0, 100.0)
    id0 = rng.uniform(15.0, 35.0)
    rd0 = rng.uniform(2.0, 8.0)
    ru0 = rng.uniform(2.0, 10.0)
    h0 = rng.uniform(2.0, 6.0)
    c0 = rng.uniform(0.8, min(2.0, h0))
    v0 = rng.uniform(0.2, min(0.8, c0))
    d0 = rng.uniform(0.2, 1.0)
    s0 = population - (e0 + iu0 + id0 + rd0 + ru0 + h0 + d0)
    return CompartmentState(
        S=s0, E=e0, I_doc=id0, I_undoc=iu0, R_doc=rd0, R_undoc=ru0,
        H=h0, C=c0, V=v0, D=d0, N=population,
    )


def _hole_plan(config: SyntheticWorldConfig) -> set:
    """Deterministic reporting gaps: scattered census holes, plus the
    second location never reporting recovered at all."""
    holes = set()
    if not config.observation_holes:
        return holes
    locs = config.locations
    if len(locs) > 1:
        for t in range(config.n_days):
            holes.add((locs[1], "R_doc", t))
    for li, loc in enumerate(locs):
        for t in range(10 + 3 * li, config.n_days, 11):
            holes.add((loc, "H", t))
        for t in range(14 + 5 * li, config.n_days, 17):
            holes.add((loc, "C", t))
            holes.add((loc, "V", t))
    return holes


def generate_world(config: SyntheticWorldConfig | None = None) -> SyntheticWorld:
    config = config or SyntheticWorldConfig()
    series = _covariate_paths(config)
    holes = _hole_plan(config)
    noise_rng = np.random.default_rng([config.seed, 23])
    ic_rng = np.random.default_rng([config.seed, 29])

    observations = {}
    time_varying = {}
    statics = {}
    population = {}
    truth = {}
    rates = {}

    for li, loc in enumerate(config.locations):
        pop = float(config.populations[li])
        population[loc] = pop
        daily = _daily_rates(config, series, loc)
        rates[loc] = daily
        state = _initial_state(ic_rng, pop)
        states = [state]
        for rs in daily:
            state = step(state, rs)
            states.append(state)
        truth[loc] = {
            "Q": [value_of(confirmed(s)) for s in states],
            "D": [value_of(s.D) for s in states],
            "H": [value_of(s.H) for s in states],
            "C": [value_of(s.C) for s in states],
            "V": [value_of(s.V) for s in states],
            "R_doc": [value_of(s.R_doc) for s in states],
        }
        for t in range(config.n_days):
            when = config.anchor + _dt.timedelta(days=t)
            row = {}
            for symbol in OBSERVABLES:
                if (loc, symbol, t) in holes:
                    continue
                clean = truth[loc][symbol][t]
                if config.noise_scale > 0.0:
                    wobble = 1.0 + config.noise_scale * noise_rng.standard_normal()
                    row[symbol] = max(0.0, clean * wobble)
                else:
                    row[symbol] = clean
            observations[(loc, when)] = row
        for cov in config.covariates:
            for t in range(config.n_days):
                when = config.anchor + _dt.timedelta(days=t)
                time_varying[(cov, loc, when)] = float(series[(cov, loc)][t])
        statics[("density", loc)] = [420.0, 95.0, 880.0][li % 3]
        statics[("median_age", loc)] = [38.2, 41.5, 35.7][li % 3]

    return SyntheticWorld(
        config=config,
        observations=observations,
        time_varying=time_varying,
        statics=statics,
        population=population,
        truth=truth,
        rates=rates,
        covariate_series=series,
    )


def world_to_csvs(world: SyntheticWorld, directory, split_day: int | None = None):
    """Write the five input CSVs; with ``split_day`` the observation rows
    at or past that day index go to heldout.csv instead (truth for
    evaluating forecasts made from the earlier days)."""
    import os

    os.makedirs(directory, exist_ok=True)
    config = world.config
    columns = ["location_id", "date"] + sorted(OBSERVATION_COLUMNS)

    def write_observations(path, day_range):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for loc in config.locations:
                for t in day_range:
                    when = config.anchor + _dt.timedelta(days=t)
                    row_values = world.observations.get((loc, when), {})
                    row = [loc, when.isoformat()]
                    for column in columns[2:]:
                        symbol = OBSERVATION_COLUMNS[column]
                        value = row_values.get(symbol)
                        row.append("" if value is None else repr(float(value)))
                    writer.writerow(row)
        return path

    cut = config.n_days if split_day is None else int(split_day)
    paths = {
        "observations": os.path.join(directory, "observations.csv"),
        "time_varying": os.path.join(directory, "time_varying.csv"),
        "statics": os.path.join(directory, "statics.csv"),
        "population": os.path.join(directory, "population.csv"),
    }
    write_observations(paths["observations"], range(cut))
    if split_day is not None:
        paths["heldout"] = write_observations(
            os.path.join(directory, "heldout.csv"), range(cut, config.n_days)
        )

    with open(paths["time_varying"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_id", "date", "covariate_id", "value"])
        for cov in config.covariates:
            for loc in config.locations:
                for t in range(cut):
                    when = config.anchor + _dt.timedelta(days=t)
                    writer.writerow(
                        [loc, when.isoformat(), cov,
                         repr(world.time_varying[(cov, loc, when)])]
                    )

    with open(paths["statics"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_id", "covariate_id", "value"])
        for (cov, loc), value in sorted(world.statics.items()):
            writer.writerow([loc, cov, repr(float(value))])

    with open(paths["population"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["location_id", "population"])
        for loc in config.locations:
            writer.writerow([loc, repr(world.population[loc])])

    return paths
