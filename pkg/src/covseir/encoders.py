"""Covariate encoders: bounded additive rate encoders and the AR covariate forecaster.

Each transition rate is produced per location and day by a sigmoid-bounded
generalized additive model over normalized covariates:

    rate[t] = lower + (upper - lower) * sigmoid(global_bias + local_bias[loc]
                                                + sum_j w_j * cov_j(t))

where static covariate slots contribute their (time-constant) value and
time-varying slots contribute the covariate at a fixed lag in 1..k. Weights
and the global bias are shared across locations; only local_bias is
per-location. Outputs stay inside (lower, upper) except for float saturation
of the sigmoid at extreme logits, where they may touch a bound exactly.

Time-varying covariates beyond the last observed day are extended by a
per-(covariate, location) linear autoregressive model over the past zeta
values plus a peak-to-mean trend feature; forecasted values feed subsequent
windows. The forecaster consumes normalized covariate history and its
outputs are deliberately NOT clipped back into [0, 1].

During training, encoder inputs use observed covariate values whenever they
exist and forecasted values otherwise (interpretation note: observed ranges
always feed raw observations).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from .autodiff import Scalar, lincomb, sigmoid, value_of
from .errors import ConfigError, DataError, DomainError
from .dynamics import RATE_NAMES, RateSet

__all__ = [
    "DEFAULT_LAG_DEPTH",
    "DEFAULT_ZETA",
    "CovariateSlot",
    "RateEncoder",
    "CovariateSource",
    "CovariateForecaster",
    "default_bounds",
    "encode_rate",
    "encode_rates_over_time",
    "peak_to_mean",
    "forecast_covariate",
    "fit_covariate_forecaster",
]

DEFAULT_LAG_DEPTH = 7
DEFAULT_ZETA = 14

STATIC = "static"
TIME_VARYING = "time_varying"


def default_bounds() -> dict[str, tuple[float, float]]:
    """Per-rate sigmoid bounds: [0,10] for contact rates, [0,0.2] for the
    inverse latency, [0,0.1] for everything else."""
    bounds = {}
    for name in RATE_NAMES:
        if name in ("beta_doc", "beta_undoc"):
            bounds[name] = (0.0, 10.0)
        elif name == "alpha":
            bounds[name] = (0.0, 0.2)
        else:
            bounds[name] = (0.0, 0.1)
    return bounds


@dataclass(frozen=True)
class CovariateSlot:
    """One input of a rate encoder: a covariate id, its kind, and (for
    time-varying covariates) the lag in days, 1-based."""

    covariate_id: str
    kind: str
    lag: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (STATIC, TIME_VARYING):
            raise ConfigError(f"covariate slot kind must be static or time_varying, got {self.kind!r}")
        if self.kind == TIME_VARYING and self.lag < 1:
            raise ConfigError(f"time-varying slot {self.covariate_id!r} needs lag >= 1, got {self.lag}")
        if self.kind == STATIC and self.lag != 0:
            raise ConfigError(f"static slot {self.covariate_id!r} must have lag 0, got {self.lag}")


@dataclass
class RateEncoder:
    """Parameters of one rate's encoder.

    Fields may hold plain floats (inference) or autodiff Nodes (training);
    the arithmetic is identical either way.
    """

    variable_id: str
    lower_bound: float
    upper_bound: float
    global_bias: Scalar = 0.0
    weights: list = field(default_factory=list)
    covariate_spec: list[CovariateSlot] = field(default_factory=list)
    local_bias: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.lower_bound < self.upper_bound:
            raise ConfigError(
                f"encoder {self.variable_id}: need lower_bound < upper_bound, "
                f"got [{self.lower_bound!r}, {self.upper_bound!r}]"
            )
        if len(self.weights) != len(self.covariate_spec):
            raise ConfigError(
                f"encoder {self.variable_id}: {len(self.weights)} weights for "
                f"{len(self.covariate_spec)} covariate slots"
            )


class CovariateSource(Protocol):
    """Where encoders read covariate values from.

    ``value_at`` must resolve any day the caller asks about: datasets
    edge-hold before their first day, and forecast wrappers serve model
    extensions past the last observed day.
    """

    def static_value(self, location_id: str, covariate_id: str) -> float: ...

    def value_at(self, location_id: str, covariate_id: str, t: int) -> float: ...

    def has_static(self, location_id: str, covariate_id: str) -> bool: ...

    def has_time_varying(self, location_id: str, covariate_id: str) -> bool: ...


def encode_rate(
    encoder: RateEncoder,
    statics: Mapping[str, float],
    window: Mapping[str, Sequence[float]],
    location_id: str,
) -> Scalar:
    """Evaluate the bounded additive encoder for one location and day.

    ``window`` maps each time-varying covariate to its lag values, index 0
    holding lag 1. Covariate values act as fixed coefficients, so gradients
    flow to weights and biases only.
    """
    if location_id not in encoder.local_bias:
        raise DataError(f"encoder {encoder.variable_id}: unknown location {location_id!r}")
    terms: list[tuple[float, Scalar]] = [
        (1.0, encoder.global_bias),
        (1.0, encoder.local_bias[location_id]),
    ]
    for w, slot in zip(encoder.weights, encoder.covariate_spec):
        if slot.kind == STATIC:
            if slot.covariate_id not in statics:
                raise ConfigError(
                    f"encoder {encoder.variable_id}: missing static covariate {slot.covariate_id!r}"
                )
            x = statics[slot.covariate_id]
        else:
            series = window.get(slot.covariate_id)
            if series is None or len(series) < slot.lag:
                raise ConfigError(
                    f"encoder {encoder.variable_id}: missing time-varying covariate "
                    f"{slot.covariate_id!r} at lag {slot.lag}"
                )
            x = series[slot.lag - 1]
        terms.append((float(x), w))
    gate = sigmoid(lincomb(terms))
    return lincomb(
        [(encoder.upper_bound - encoder.lower_bound, gate)], const=encoder.lower_bound
    )


def encode_rates_over_time(
    encoders: Mapping[str, RateEncoder],
    source: CovariateSource,
    location_id: str,
    t_range: Sequence[int],
) -> list[RateSet]:
    """One RateSet per timestep; rates with no covariate slots come from
    bias terms alone."""
    missing = [name for name in RATE_NAMES if name not in encoders]
    if missing:
        raise ConfigError(f"no encoder for rate variables: {', '.join(missing)}")
    out = []
    for t in t_range:
        values = {}
        for name in RATE_NAMES:
            enc = encoders[name]
            statics = {}
            window: dict[str, list[float]] = {}
            try:
                for slot in enc.covariate_spec:
                    if slot.kind == STATIC:
                        statics[slot.covariate_id] = source.static_value(
                            location_id, slot.covariate_id
                        )
                    else:
                        series = window.setdefault(slot.covariate_id, [])
                        while len(series) < slot.lag:
                            series.append(
                                source.value_at(location_id, slot.covariate_id, t - len(series) - 1)
                            )
                values[name] = encode_rate(enc, statics, window, location_id)
            except (ConfigError, DataError) as exc:
                raise type(exc)(f"variable {name} at t={t}: {exc}") from exc
        out.append(RateSet(**values))
    return out


# --- covariate forecasting ------------------------------------------------


@dataclass(frozen=True)
class CovariateForecaster:
    """Linear AR over the last zeta values plus the peak-to-mean feature.

    weights[0] multiplies the oldest value in the window, weights[zeta-1]
    the most recent, weights[zeta] the peak-to-mean ratio.
    """

    weights: tuple[float, ...]
    zeta: int = DEFAULT_ZETA

    def __post_init__(self) -> None:
        if self.zeta < 2:
            raise DomainError(f"covariate forecaster needs zeta >= 2, got {self.zeta}")
        if len(self.weights) != self.zeta + 1:
            raise DomainError(
                f"covariate forecaster needs zeta+1 weights, got {len(self.weights)} for zeta={self.zeta}"
            )
        if not all(np.isfinite(self.weights)):
            raise DomainError("covariate forecaster weights must be finite")


def peak_to_mean(window: Sequence[float]) -> float:
    """max/mean of the window; defined as 0 when the mean is exactly 0."""
    arr = np.asarray(window, dtype=float)
    m = arr.mean()
    if m == 0.0:
        return 0.0
    return float(arr.max() / m)


def forecast_covariate(
    fc: CovariateForecaster, history: Sequence[float], steps: int
) -> list[float]:
    """Autoregressive rollout: forecasted values feed subsequent windows."""
    if steps < 1:
        raise DomainError(f"forecast steps must be positive, got {steps}")
    if len(history) < fc.zeta:
        raise DomainError(
            f"need at least zeta={fc.zeta} history values, got {len(history)}"
        )
    tail = [float(x) for x in history[-fc.zeta :]]
    if not all(np.isfinite(tail)):
        raise DomainError("covariate history window contains non-finite values")
    w = np.asarray(fc.weights, dtype=float)
    out = []
    for _ in range(steps):
        features = np.array(tail + [peak_to_mean(tail)])
        nxt = float(w @ features)
        out.append(nxt)
        tail = tail[1:] + [nxt]
    return out


def fit_covariate_forecaster(
    history: Sequence[float], zeta: int = DEFAULT_ZETA
) -> CovariateForecaster:
    """Least-squares fit over all sliding windows of the history.

    Ordinary least squares (minimum-norm when the design is reported
    rank-deficient); an exactly rank-deficient design falls back to ridge
    with penalty 1e-6. Deterministic for identical inputs.
    """
    series = np.asarray(history, dtype=float)
    if len(series) < 2 * zeta:
        raise DomainError(
            f"need at least 2*zeta={2 * zeta} history values to fit, got {len(series)}"
        )
    if not np.all(np.isfinite(series)):
        raise DomainError("covariate history contains non-finite values")
    rows = []
    targets = []
    for t in range(zeta, len(series)):
        window = series[t - zeta : t]
        rows.append(np.concatenate([window, [peak_to_mean(window)]]))
        targets.append(series[t])
    X = np.vstack(rows)
    y = np.asarray(targets)
    weights, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < zeta + 1:
        penalty = 1e-6
        gram = X.T @ X + penalty * np.eye(zeta + 1)
        weights = np.linalg.solve(gram, X.T @ y)
    return CovariateForecaster(weights=tuple(float(w) for w in weights), zeta=zeta)
