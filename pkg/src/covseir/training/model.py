"""Model assembly: parameters, initial conditions, and the training rollout.

A trained model is a flat named-parameter vector (see
:class:`covseir.autodiff.ParameterStore`) plus the static
:class:`ModelSpec` describing how to interpret it: which covariate slots
feed every rate encoder, the sigmoid bounds, the locations with their
populations and launch days, and (for interval models) the quantile output
heads. Binding the spec to a parameter mapping yields encoders and initial
states made of floats or of tape Nodes, depending on what the mapping
holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..autodiff import Scalar, exp, lincomb, maximum_with
from ..dynamics import COMPARTMENTS, RATE_NAMES, CompartmentState, RateSet, confirmed, step
from ..encoders import (
    STATIC,
    TIME_VARYING,
    CovariateSlot,
    RateEncoder,
    default_bounds,
)
from ..errors import ConfigError, DataError
from ..features import OBSERVABLES

__all__ = [
    "IC_COMPARTMENTS",
    "Q_CONSTITUENTS",
    "TeacherForcingPolicy",
    "FREE_RUNNING",
    "ModelSpec",
    "build_slots",
    "sample_initial_conditions",
    "build_parameter_store",
    "RolloutResult",
    "observables_of",
    "apply_teacher_forcing",
    "teacher_forced_rollout",
    "rollout_all_locations",
    "predictions_of",
    "rates_of",
]

# Initial-condition compartments stored as trainable parameters; S is
# derived from population conservation.
IC_COMPARTMENTS = ("E", "I_doc", "I_undoc", "R_doc", "R_undoc", "H", "C", "V", "D")

# Confirmed cases count everyone diagnosed: currently infectious,
# recovered after diagnosis, hospitalized, or dead.
Q_CONSTITUENTS = ("I_doc", "R_doc", "H", "D")

# Directly observed series that blend one-to-one with a compartment.
DIRECT_OBSERVABLES = ("H", "C", "V", "D", "R_doc")

# sigma^-1(0.1): encoders start at 10% of their range before training.
_INITIAL_BIAS = math.log(0.1 / 0.9)


@dataclass(frozen=True)
class TeacherForcingPolicy:
    """How strongly the rollout trusts its own predictions.

    lambda_tf = 0 pins every observed value to ground truth before each
    step; 1 ignores observations entirely (free run); values between
    blend the two.
    """

    lambda_tf: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.lambda_tf <= 1.0):
            raise ConfigError(
                f"lambda_tf must lie in [0, 1], got {self.lambda_tf!r}"
            )


FREE_RUNNING = TeacherForcingPolicy(lambda_tf=1.0)


@dataclass(frozen=True)
class ModelSpec:
    """Static structure of one model; see the module docstring."""

    locations: tuple
    populations: dict
    launch_days: dict
    slots: tuple
    bounds: dict
    lag_depth: int
    quantiles: tuple | None = None

    def __post_init__(self) -> None:
        for loc in self.locations:
            if loc not in self.populations:
                raise ConfigError(f"no population for location {loc!r}")
            if loc not in self.launch_days:
                raise ConfigError(f"no launch day for location {loc!r}")

    # -- parameter naming --------------------------------------------------

    def encoder_parameter_names(self, rate: str) -> list:
        names = [f"enc/{rate}/bias"]
        names += [f"enc/{rate}/w/{i:03d}" for i in range(len(self.slots))]
        names += [f"enc/{rate}/loc/{loc}" for loc in self.locations]
        return names

    def parameter_names(self) -> list:
        names = []
        for rate in RATE_NAMES:
            names.extend(self.encoder_parameter_names(rate))
        for loc in self.locations:
            for comp in IC_COMPARTMENTS:
                names.append(f"ic/{loc}/{comp}")
        if self.quantiles is not None:
            for symbol in OBSERVABLES:
                for q in self.quantiles:
                    names.append(f"head/{symbol}/{q}/scale")
                    names.append(f"head/{symbol}/{q}/offset")
        return names

    # -- binding -----------------------------------------------------------

    def bind_encoders(self, params: Mapping[str, Scalar]) -> dict:
        encoders = {}
        for rate in RATE_NAMES:
            lo, hi = self.bounds[rate]
            encoders[rate] = RateEncoder(
                variable_id=rate,
                lower_bound=lo,
                upper_bound=hi,
                global_bias=params[f"enc/{rate}/bias"],
                weights=[
                    params[f"enc/{rate}/w/{i:03d}"] for i in range(len(self.slots))
                ],
                covariate_spec=list(self.slots),
                local_bias={
                    loc: params[f"enc/{rate}/loc/{loc}"] for loc in self.locations
                },
            )
        return encoders

    def bind_initial_state(self, params: Mapping[str, Scalar], location_id) -> CompartmentState:
        """Initial compartment values from their log1p-space parameters;
        S is population minus everyone exposed, infected, recovered,
        hospitalized, or dead."""
        values = {}
        for comp in IC_COMPARTMENTS:
            u = params[f"ic/{location_id}/{comp}"]
            values[comp] = lincomb([(1.0, exp(u))], const=-1.0)
        population = self.populations[location_id]
        values["S"] = lincomb(
            [
                (-1.0, values[comp])
                for comp in ("E", "I_doc", "I_undoc", "R_doc", "R_undoc", "H", "D")
            ],
            const=population,
        )
        return CompartmentState(N=population, **values)

    def bind_heads(self, params: Mapping[str, Scalar]):
        if self.quantiles is None:
            return None
        heads = {}
        for symbol in OBSERVABLES:
            for q in self.quantiles:
                heads[(symbol, q)] = (
                    params[f"head/{symbol}/{q}/scale"],
                    params[f"head/{symbol}/{q}/offset"],
                )
        return heads

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "locations": list(self.locations),
            "populations": {k: float(v) for k, v in sorted(self.populations.items())},
            "launch_days": {k: int(v) for k, v in sorted(self.launch_days.items())},
            "slots": [[s.covariate_id, s.kind, s.lag] for s in self.slots],
            "bounds": {k: [lo, hi] for k, (lo, hi) in sorted(self.bounds.items())},
            "lag_depth": self.lag_depth,
            "quantiles": None if self.quantiles is None else list(self.quantiles),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "ModelSpec":
        return cls(
            locations=tuple(payload["locations"]),
            populations={k: float(v) for k, v in payload["populations"].items()},
            launch_days={k: int(v) for k, v in payload["launch_days"].items()},
            slots=tuple(
                CovariateSlot(covariate_id=c, kind=k, lag=int(lag))
                for c, k, lag in payload["slots"]
            ),
            bounds={k: (float(v[0]), float(v[1])) for k, v in payload["bounds"].items()},
            lag_depth=int(payload["lag_depth"]),
            quantiles=(
                None
                if payload["quantiles"] is None
                else tuple(float(q) for q in payload["quantiles"])
            ),
        )


def build_slots(panel, covariate_ids=None, lag_depth=7):
    """Covariate slots shared by every rate encoder: every static, plus
    every time-varying covariate at lags 1..lag_depth."""
    if lag_depth < 1:
        raise ConfigError(f"lag_depth must be >= 1, got {lag_depth}")
    if covariate_ids is None:
        tv = sorted(panel.time_varying)
        statics = sorted(panel.statics)
    else:
        tv, statics = [], []
        for cov in covariate_ids:
            if panel.has_time_varying(cov):
                tv.append(cov)
            elif panel.has_static(cov):
                statics.append(cov)
            else:
                raise ConfigError(f"unknown covariate {cov!r}")
        tv.sort()
        statics.sort()
    slots = [CovariateSlot(cov, STATIC, 0) for cov in statics]
    for cov in tv:
        for lag in range(1, lag_depth + 1):
            slots.append(CovariateSlot(cov, TIME_VARYING, lag))
    return tuple(slots)


def sample_initial_conditions(panel, locations, window_start, latest_launch, seed):
    """Draw per-location starting compartment values around the launch-day
    observations.

    A location launches at max(regime start, window start). Returns
    (values {loc: {comp: float}}, launch_days, excluded [(loc, reason)]).
    Sampling is a single seeded stream over the locations in the given
    order, so a fixed seed reproduces the draws exactly.
    """
    rng = np.random.default_rng(seed)
    values = {}
    launch_days = {}
    excluded = []
    for loc in locations:
        regime = panel.regime_start(loc)
        if regime is None:
            excluded.append((loc, "confirmed cases never cross the regime threshold"))
            continue
        launch = max(regime, window_start)
        if launch > latest_launch:
            excluded.append(
                (loc, f"regime starts on day {launch}, after the last usable "
                      f"launch day {latest_launch}")
            )
            continue
        q0 = panel.observed_value(loc, "Q", launch)
        if q0 is None:
            probe = launch - 1
            while probe >= panel.first_day and q0 is None:
                q0 = panel.observed_value(loc, "Q", probe)
                probe -= 1
        if q0 is None:
            excluded.append((loc, "no confirmed observation at or before launch"))
            continue
        r0 = panel.observed_value(loc, "R_doc", launch)
        r0 = 0.0 if r0 is None else r0
        h_obs = panel.observed_value(loc, "H", launch)
        c_obs = panel.observed_value(loc, "C", launch)
        v_obs = panel.observed_value(loc, "V", launch)
        d_obs = panel.observed_value(loc, "D", launch)

        psi_e1, psi_e2, psi_r, psi_h, psi_c, psi_v = rng.uniform(size=6)
        seeds_e = max(100.0 * psi_e1, 10.0 * psi_e2 * q0)
        h0 = h_obs if h_obs is not None else 0.5 * psi_h * q0
        c0 = c_obs if c_obs is not None else 0.2 * psi_c * q0
        v0 = v_obs if v_obs is not None else 0.5 * psi_v * q0
        # Keep the ventilator <= ICU <= hospital nesting coherent at start.
        c0 = min(c0, h0)
        v0 = min(v0, c0)
        values[loc] = {
            "E": seeds_e,
            "I_doc": q0,
            "I_undoc": seeds_e,
            "R_doc": r0,
            "R_undoc": 5.0 * psi_r * r0,
            "H": h0,
            "C": c0,
            "V": v0,
            "D": d_obs if d_obs is not None else 0.0,
        }
        launch_days[loc] = launch
    return values, launch_days, excluded


def build_parameter_store(spec, initial_values):
    """Fresh ParameterStore in canonical order.

    Encoder biases start at sigma^-1(0.1), weights and local biases at 0;
    initial conditions are stored as log1p of the sampled values; quantile
    heads start at the identity map.
    """
    from ..autodiff import ParameterStore

    store = ParameterStore()
    for rate in RATE_NAMES:
        store.add(f"enc/{rate}/bias", _INITIAL_BIAS)
        for i in range(len(spec.slots)):
            store.add(f"enc/{rate}/w/{i:03d}", 0.0)
        for loc in spec.locations:
            store.add(f"enc/{rate}/loc/{loc}", 0.0)
    for loc in spec.locations:
        if loc not in initial_values:
            raise ConfigError(f"no sampled initial values for location {loc!r}")
        for comp in IC_COMPARTMENTS:
            value = initial_values[loc][comp]
            if value < 0.0:
                raise ConfigError(
                    f"initial {comp} for {loc} must be >= 0, got {value!r}"
                )
            store.add(f"ic/{loc}/{comp}", math.log1p(value))
    if spec.quantiles is not None:
        for symbol in OBSERVABLES:
            for q in spec.quantiles:
                store.add(f"head/{symbol}/{q}/scale", 1.0)
                store.add(f"head/{symbol}/{q}/offset", 0.0)
    return store


# ---------------------------------------------------------------------------
# rollout


@dataclass
class RolloutResult:
    """One location's rollout: per-observable predictions by absolute day,
    the rate sets that drove each transition, and the final state."""

    launch_day: int
    predictions: dict
    rates: dict
    final_state: CompartmentState


def observables_of(state: CompartmentState) -> dict:
    return {
        "Q": confirmed(state),
        "D": state.D,
        "H": state.H,
        "C": state.C,
        "V": state.V,
        "R_doc": state.R_doc,
    }


def apply_teacher_forcing(state, observations, location_id, day, policy):
    """Condition a day's state on its observations before stepping.

    Observed confirmed counts rescale the four constituent compartments
    proportionally toward the blended target; the directly observed
    series then blend one-to-one. lambda_tf = 1 returns the state object
    untouched.
    """
    lam = policy.lambda_tf
    if lam == 1.0:
        return state
    values = {comp: getattr(state, comp) for comp in COMPARTMENTS}
    q_obs = observations.observed_value(location_id, "Q", day)
    if q_obs is not None:
        q_hat = lincomb([(1.0, values[comp]) for comp in Q_CONSTITUENTS])
        blended = lincomb([(lam, q_hat)], const=(1.0 - lam) * q_obs)
        scale = blended / maximum_with(q_hat, 1e-8)
        for comp in Q_CONSTITUENTS:
            values[comp] = values[comp] * scale
    for symbol in DIRECT_OBSERVABLES:
        obs = observations.observed_value(location_id, symbol, day)
        if obs is not None:
            values[symbol] = lincomb(
                [(lam, values[symbol])], const=(1.0 - lam) * obs
            )
    return CompartmentState(N=state.N, **values)


def _covariate_reader(slots, source, location_id):
    """Resolve static values once and build per-day lag windows lazily."""
    statics = {}
    lag_depth = {}
    for slot in slots:
        if slot.kind == STATIC:
            statics[slot.covariate_id] = source.static_value(
                location_id, slot.covariate_id
            )
        else:
            lag_depth[slot.covariate_id] = max(
                lag_depth.get(slot.covariate_id, 0), slot.lag
            )

    def window_at(t):
        return {
            cov: [source.value_at(location_id, cov, t - 1 - j) for j in range(k)]
            for cov, k in lag_depth.items()
        }

    return statics, window_at


def encode_day_rates(encoders, statics, window, location_id) -> RateSet:
    from ..encoders import encode_rate

    return RateSet(
        **{
            rate: encode_rate(encoders[rate], statics, window, location_id)
            for rate in RATE_NAMES
        }
    )


def teacher_forced_rollout(
    initial_state,
    encoders,
    source,
    observations,
    location_id,
    window,
    policy,
    launch_day,
):
    """Propagate one location over [start, end].

    Days up to the launch day hold the initial state ("the regime has not
    started"); later days each apply teacher forcing to the previous
    day's state and step the dynamics under that day's encoded rates.
    Recorded predictions are the raw model outputs, never the forced
    values.
    """
    start, end = int(window[0]), int(window[1])
    if not (start <= launch_day <= end):
        raise DataError(
            f"launch day {launch_day} outside rollout window [{start}, {end}]"
        )
    if policy.lambda_tf < 1.0 and observations is None:
        raise DataError("teacher forcing below 1.0"
                        " requires an observation source")
    predictions = {symbol: {} for symbol in OBSERVABLES}
    held = observables_of(initial_state)
    for day in range(start, launch_day + 1):
        for symbol in OBSERVABLES:
            predictions[symbol][day] = held[symbol]
    statics, window_at = _covariate_reader(
        encoders[RATE_NAMES[0]].covariate_spec, source, location_id
    )
    state = initial_state
    rates = {}
    for day in range(launch_day + 1, end + 1):
        forced = apply_teacher_forcing(
            state, observations, location_id, day - 1, policy
        )
        day_rates = encode_day_rates(encoders, statics, window_at(day), location_id)
        state = step(forced, day_rates)
        rates[day] = day_rates
        for symbol, value in observables_of(state).items():
            predictions[symbol][day] = value
    return RolloutResult(
        launch_day=launch_day,
        predictions=predictions,
        rates=rates,
        final_state=state,
    )


def rollout_all_locations(spec, params, source, observations, window, policy):
    """{location: RolloutResult} over the spec's locations."""
    encoders = spec.bind_encoders(params)
    results = {}
    for loc in spec.locations:
        initial = spec.bind_initial_state(params, loc)
        results[loc] = teacher_forced_rollout(
            initial,
            encoders,
            source,
            observations,
            loc,
            window,
            policy,
            spec.launch_days[loc],
        )
    return results


def predictions_of(results) -> dict:
    return {loc: r.predictions for loc, r in results.items()}


def rates_of(results) -> dict:
    return {loc: r.rates for loc, r in results.items()}
