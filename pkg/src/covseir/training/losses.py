"""Training losses.

The total objective is a weighted fit term over the observable series plus
three regularizers: rate-feasibility hinges, temporal smoothness of the
predicted observables, and squared per-location encoder biases. Every
function here is polymorphic over floats and autodiff Nodes, so the same
code produces cheap float evaluations (validation) and taped evaluations
(gradient steps).

Prediction containers are plain nested dicts, {location: {symbol: {day:
value}}}, where symbol ranges over the six observables Q, D, H, C, V,
R_doc. Observations are read through an object exposing
``observed_value(location, symbol, day) -> float | None`` (the prepared
panel does).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from ..autodiff import Scalar, lincomb, max0, square
from ..dynamics import FEASIBILITY_GROUPS
from ..errors import ConfigError, DataError
from ..features import OBSERVABLES

__all__ = [
    "DEFAULT_COMPARTMENT_WEIGHTS",
    "LossConfig",
    "pinball_loss",
    "fit_loss",
    "constraint_loss",
    "smoothness_loss",
    "local_bias_reg",
    "total_loss",
]

# Fit-loss weight per observable. Confirmed and dead dominate; hospital
# census matters less; recovered/ICU/ventilator are noisy and weakly
# weighted.
DEFAULT_COMPARTMENT_WEIGHTS = {
    "Q": 0.1,
    "D": 0.1,
    "H": 0.01,
    "R_doc": 0.001,
    "C": 0.001,
    "V": 0.001,
}


@dataclass(frozen=True)
class LossConfig:
    """Weights and switches for the training objective.

    ``z`` exponentially up-weights later days of the fit window via
    exp((day - window_start) * z); 0 means no time weighting.
    ``strict_printed`` selects the strictest literal reading of the
    constraint/smoothness formulas: the second feasibility hinge enters
    unsquared, the hospital-chain feasibility terms pin their recovery
    rate to the first day of the window, and smoothness sums raw (not
    squared) second differences.
    """

    lambda_y: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_COMPARTMENT_WEIGHTS)
    )
    z: float = 0.0
    lambda_comp: float = 1.0
    lambda_smooth: float = 0.1
    lambda_ls: float = 0.01
    loss_kind: str = "squared"
    quantiles: tuple = (0.1, 0.5, 0.9)
    strict_printed: bool = False

    def __post_init__(self) -> None:
        for symbol, w in self.lambda_y.items():
            if symbol not in OBSERVABLES:
                raise ConfigError(f"unknown observable in lambda_y: {symbol!r}")
            if not (math.isfinite(w) and w >= 0.0):
                raise ConfigError(f"lambda_y[{symbol!r}] must be >= 0, got {w!r}")
        if not math.isfinite(self.z):
            raise ConfigError(f"z must be finite, got {self.z!r}")
        for name in ("lambda_comp", "lambda_smooth", "lambda_ls"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        if self.loss_kind not in ("squared", "quantile"):
            raise ConfigError(
                f"loss_kind must be 'squared' or 'quantile', got {self.loss_kind!r}"
            )
        qs = tuple(self.quantiles)
        if self.loss_kind == "quantile":
            if not qs:
                raise ConfigError("quantile loss needs at least one quantile")
            if any(not (0.0 < q < 1.0) for q in qs):
                raise ConfigError(f"quantiles must lie in (0, 1), got {qs}")
            if any(b <= a for a, b in zip(qs, qs[1:])):
                raise ConfigError(f"quantiles must be strictly increasing, got {qs}")

    def to_dict(self) -> dict:
        return {
            "lambda_y": dict(sorted(self.lambda_y.items())),
            "z": self.z,
            "lambda_comp": self.lambda_comp,
            "lambda_smooth": self.lambda_smooth,
            "lambda_ls": self.lambda_ls,
            "loss_kind": self.loss_kind,
            "quantiles": list(self.quantiles),
            "strict_printed": self.strict_printed,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "LossConfig":
        return cls(
            lambda_y=dict(payload["lambda_y"]),
            z=float(payload["z"]),
            lambda_comp=float(payload["lambda_comp"]),
            lambda_smooth=float(payload["lambda_smooth"]),
            lambda_ls=float(payload["lambda_ls"]),
            loss_kind=payload["loss_kind"],
            quantiles=tuple(payload["quantiles"]),
            strict_printed=bool(payload["strict_printed"]),
        )


def pinball_loss(actual: float, predicted: Scalar, quantile: float) -> Scalar:
    """Asymmetric quantile loss; at quantile 0.5 equals half the absolute
    error."""
    under = max0(lincomb([(-1.0, predicted)], const=actual))
    over = max0(lincomb([(1.0, predicted)], const=-actual))
    return lincomb([(quantile, under), (1.0 - quantile, over)])


def _check_window(window, tau):
    start, end = window
    if int(start) != start or int(end) != end:
        raise DataError(f"window bounds must be integers, got {window!r}")
    if end < start:
        raise DataError(f"window end before start: {window!r}")
    if int(tau) != tau or tau < 0:
        raise DataError(f"horizon must be a nonnegative integer, got {tau!r}")
    return int(start), int(end), int(tau)


def _series_value(predictions, loc, symbol, day):
    try:
        return predictions[loc][symbol][day]
    except KeyError:
        raise DataError(
            f"predictions for {loc}/{symbol} do not cover day {day}"
        ) from None


def fit_loss(predictions, observations, config, window, tau, heads=None):
    """Weighted forecast error accumulated over all sub-windows.

    For every window start t in [start, end - tau] and offset i in
    [1, tau], each observed value Y[t+i] contributes
    lambda_Y * exp((t+i-start) * z) * L(Y[t+i], Yhat[t+i]). A calendar day
    covered by several window starts therefore counts once per start; the
    implementation folds those repeats into a single per-day coefficient,
    which changes only summation order. Missing observations contribute
    nothing. L is squared error, or pinball loss summed over quantiles
    when ``config.loss_kind == "quantile"`` (``heads`` then optionally
    maps (symbol, quantile) to an affine (scale, offset) output head).
    """
    start, end, tau = _check_window(window, tau)
    if tau == 0 or end - tau < start:
        return 0.0
    terms = []
    for loc in sorted(predictions):
        for symbol in OBSERVABLES:
            weight = config.lambda_y.get(symbol, 0.0)
            if weight == 0.0:
                continue
            if symbol not in predictions[loc]:
                continue
            for day in range(start + 1, end + 1):
                hi = min(end - tau, day - 1)
                lo = max(start, day - tau)
                count = hi - lo + 1
                if count <= 0:
                    continue
                actual = observations.observed_value(loc, symbol, day)
                if actual is None:
                    continue
                predicted = _series_value(predictions, loc, symbol, day)
                coef = weight * count * math.exp((day - start) * config.z)
                if config.loss_kind == "squared":
                    err = square(lincomb([(1.0, predicted)], const=-actual))
                    terms.append((coef, err))
                else:
                    for q in config.quantiles:
                        if heads is not None:
                            scale, offset = heads[(symbol, q)]
                            staged = scale * predicted + offset
                        else:
                            staged = predicted
                        terms.append((coef, pinball_loss(actual, staged, q)))
    return lincomb(terms)


def constraint_loss(rate_sequences, window=None, strict=False):
    """Hinge penalty on the five rate-feasibility groups, per day.

    Each group of outflow rates must sum to at most 1; the excess above 1
    is hinged and squared. ``strict`` reproduces the strictest literal
    form instead: the (rho_I_undoc + gamma) hinge enters unsquared, and
    the three hospital-chain groups use their recovery rate's value on
    the first day of the sequence rather than the current day.
    """
    terms = []
    for loc in sorted(rate_sequences):
        by_day = rate_sequences[loc]
        days = sorted(by_day)
        if window is not None:
            start, end = window
            days = [d for d in days if start <= d <= end]
        if not days:
            continue
        first = by_day[days[0]]
        for day in days:
            rates = by_day[day]
            for index, group in enumerate(FEASIBILITY_GROUPS):
                members = []
                for name in group:
                    source = (
                        first
                        if strict and index >= 2 and name.startswith("rho_")
                        else rates
                    )
                    members.append((1.0, getattr(source, name)))
                excess = max0(lincomb(members, const=-1.0))
                if strict and index == 1:
                    terms.append((1.0, excess))
                else:
                    terms.append((1.0, square(excess)))
    return lincomb(terms)


def smoothness_loss(predictions, window, strict=False):
    """Squared second differences of each predicted observable over the
    window's interior days (raw, unsquared differences when ``strict``)."""
    start, end = window
    if end - start < 2:
        return 0.0
    terms = []
    for loc in sorted(predictions):
        for symbol in OBSERVABLES:
            if symbol not in predictions[loc]:
                continue
            for t in range(start + 1, end):
                diff2 = lincomb(
                    [
                        (1.0, _series_value(predictions, loc, symbol, t - 1)),
                        (1.0, _series_value(predictions, loc, symbol, t + 1)),
                        (-2.0, _series_value(predictions, loc, symbol, t)),
                    ]
                )
                terms.append((1.0, diff2 if strict else square(diff2)))
    return lincomb(terms)


def local_bias_reg(encoders):
    """Sum of squared per-location biases over all rate encoders."""
    terms = []
    for encoder in encoders:
        for loc in sorted(encoder.local_bias):
            terms.append((1.0, square(encoder.local_bias[loc])))
    return lincomb(terms)


def total_loss(
    predictions,
    rate_sequences,
    encoders,
    observations,
    config,
    window,
    tau,
    heads=None,
):
    """fit + lambda_comp * feasibility + lambda_smooth * smoothness +
    lambda_ls * local-bias penalty."""
    fit = fit_loss(predictions, observations, config, window, tau, heads=heads)
    comp = constraint_loss(rate_sequences, window, strict=config.strict_printed)
    smooth = smoothness_loss(predictions, window, strict=config.strict_printed)
    bias = local_bias_reg(encoders)
    return lincomb(
        [
            (1.0, fit),
            (config.lambda_comp, comp),
            (config.lambda_smooth, smooth),
            (config.lambda_ls, bias),
        ]
    )
