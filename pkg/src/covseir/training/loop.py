"""RMSProp and the two-phase training protocol.

Phase 1 explores: teacher-forced rollouts over the history up to the
held-out horizon, scored each iteration by the free-running fit over the
last tau days, with patience-based early stopping. Phase 2 refines: the
best parameters are restored and fine-tuned for a fixed number of
iterations on a fully free rollout over the entire history, which is
exactly what the forecaster does at deployment. The returned artifact
always carries the parameters with the best validation score seen in
either phase.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

from ..autodiff import Node, Tape, backward, value_of
from ..encoders import (
    DEFAULT_ZETA,
    TIME_VARYING,
    default_bounds,
    fit_covariate_forecaster,
)
from ..errors import (
    ConfigError,
    DomainError,
    NumericalError,
    TrainingDivergedError,
)
from .losses import LossConfig, fit_loss, total_loss
from .model import (
    FREE_RUNNING,
    ModelSpec,
    TeacherForcingPolicy,
    build_parameter_store,
    build_slots,
    predictions_of,
    rates_of,
    rollout_all_locations,
    sample_initial_conditions,
)

__all__ = [
    "ModelAssembly",
    "OptimizerConfig",
    "TrainSettings",
    "TrainArtifact",
    "assemble_model",
    "rmsprop_step",
    "validation_fit_score",
    "train",
]

ARTIFACT_FORMAT = "covseir-artifact-v1"


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    rms_decay: float = 0.9
    epsilon: float = 1e-8
    max_iterations: int = 3000
    patience: int = 200
    fine_tune_iterations: int = 300

    def __post_init__(self) -> None:
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not (0.0 < self.rms_decay < 1.0):
            raise ConfigError(f"rms_decay must lie in (0, 1), got {self.rms_decay!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon!r}")
        if self.max_iterations < 0:
            raise ConfigError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.fine_tune_iterations < 0:
            raise ConfigError(
                f"fine_tune_iterations must be >= 0, got {self.fine_tune_iterations}"
            )

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "rms_decay": self.rms_decay,
            "epsilon": self.epsilon,
            "max_iterations": self.max_iterations,
            "patience": self.patience,
            "fine_tune_iterations": self.fine_tune_iterations,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "OptimizerConfig":
        return cls(
            learning_rate=float(payload["learning_rate"]),
            rms_decay=float(payload["rms_decay"]),
            epsilon=float(payload["epsilon"]),
            max_iterations=int(payload["max_iterations"]),
            patience=int(payload["patience"]),
            fine_tune_iterations=int(payload["fine_tune_iterations"]),
        )


def rmsprop_step(store, grads, state, config):
    """One in-place RMSProp update; ``state`` maps parameter name to its
    running squared-gradient average and is carried between calls."""
    for name in store.names():
        g = float(grads.get(name, 0.0))
        if not math.isfinite(g):
            raise NumericalError(f"non-finite gradient for parameter {name}")
        v = config.rms_decay * state.get(name, 0.0) + (1.0 - config.rms_decay) * g * g
        state[name] = v
        store.set(
            name,
            store.get(name) - config.learning_rate * g / (math.sqrt(v) + config.epsilon),
        )


@dataclass(frozen=True)
class TrainSettings:
    """Everything train() needs beyond the prepared panel."""

    horizon: int = 14
    history: int = 150
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    phase1_lambda: float = 0.5
    lag_depth: int = 7
    covariates: tuple | None = None
    ic_seed: int = 0
    zeta: int = DEFAULT_ZETA
    locations: tuple | None = None
    train_end: int | None = None
    bounds: Mapping | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.history <= self.horizon:
            raise ConfigError(
                f"history ({self.history}) must exceed horizon ({self.horizon})"
            )
        if not (0.0 <= self.phase1_lambda <= 1.0):
            raise ConfigError(
                f"phase1_lambda must lie in [0, 1], got {self.phase1_lambda!r}"
            )
        if self.zeta < 2:
            raise ConfigError(f"zeta must be >= 2, got {self.zeta}")
        if self.bounds is not None:
            known = set(default_bounds())
            for rate, pair in self.bounds.items():
                if rate not in known:
                    raise ConfigError(f"bounds given for unknown rate {rate!r}")
                if len(tuple(pair)) != 2:
                    raise ConfigError(
                        f"bounds for {rate!r} must be a (low, high) pair"
                    )

    def resolved_bounds(self) -> dict:
        merged = default_bounds()
        if self.bounds is not None:
            for rate, pair in self.bounds.items():
                lo, hi = tuple(pair)
                merged[rate] = (float(lo), float(hi))
        return merged


@dataclass
class TrainArtifact:
    """Self-contained result of train(): forecasting needs only this plus
    covariate values through the forecast date."""

    spec: ModelSpec
    parameters: dict
    loss: LossConfig
    optimizer: OptimizerConfig
    phase1_lambda: float
    train_end: int
    history: int
    horizon: int
    zeta: int
    validation_score: float
    iterations: dict
    excluded: list
    forecasters: dict
    normalization: dict
    level: str
    anchor: str
    training_log: list | None = None

    def to_payload(self) -> dict:
        return {
            "format": ARTIFACT_FORMAT,
            "spec": self.spec.to_dict(),
            "parameters": {k: float(v) for k, v in sorted(self.parameters.items())},
            "loss": self.loss.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "phase1_lambda": self.phase1_lambda,
            "train_end": self.train_end,
            "history": self.history,
            "horizon": self.horizon,
            "zeta": self.zeta,
            "validation_score": self.validation_score,
            "iterations": dict(self.iterations),
            "excluded": [list(pair) for pair in self.excluded],
            "forecasters": {
                cov: {
                    loc: (None if w is None else [float(x) for x in w])
                    for loc, w in sorted(per_loc.items())
                }
                for cov, per_loc in sorted(self.forecasters.items())
            },
            "normalization": dict(self.normalization),
            "level": self.level,
            "anchor": self.anchor,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "TrainArtifact":
        if payload.get("format") != ARTIFACT_FORMAT:
            raise ConfigError(
                f"unrecognized artifact format {payload.get('format')!r}"
            )
        return cls(
            spec=ModelSpec.from_dict(payload["spec"]),
            parameters={k: float(v) for k, v in payload["parameters"].items()},
            loss=LossConfig.from_dict(payload["loss"]),
            optimizer=OptimizerConfig.from_dict(payload["optimizer"]),
            phase1_lambda=float(payload["phase1_lambda"]),
            train_end=int(payload["train_end"]),
            history=int(payload["history"]),
            horizon=int(payload["horizon"]),
            zeta=int(payload["zeta"]),
            validation_score=float(payload["validation_score"]),
            iterations=dict(payload["iterations"]),
            excluded=[tuple(pair) for pair in payload["excluded"]],
            forecasters={
                cov: {
                    loc: (None if w is None else [float(x) for x in w])
                    for loc, w in per_loc.items()
                }
                for cov, per_loc in payload["forecasters"].items()
            },
            normalization=dict(payload["normalization"]),
            level=payload["level"],
            anchor=payload["anchor"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_payload(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainArtifact":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_payload(json.load(fh))


def validation_fit_score(spec, params, panel, loss_config, train_start, train_end, tau):
    """Fit loss of a free-running rollout over the last tau days, the
    score Algorithm-style training tracks and forecasting ultimately
    faces."""
    results = rollout_all_locations(
        spec, params, panel, None, (train_start, train_end), FREE_RUNNING
    )
    heads = spec.bind_heads(params)
    score = fit_loss(
        predictions_of(results),
        panel,
        loss_config,
        (train_end - tau, train_end),
        tau,
        heads=heads,
    )
    return float(value_of(score))


def _fit_forecasters(panel, locations, slots, train_end, zeta):
    """Per (time-varying covariate, location) autoregressive forecasters
    fit on the normalized in-panel history through the training end; too
    little history falls back to hold-last (stored as None)."""
    out = {}
    tv_ids = sorted({s.covariate_id for s in slots if s.kind == TIME_VARYING})
    end_col = train_end - panel.first_day + 1
    for cov in tv_ids:
        per_loc = {}
        grid = panel.time_varying[cov]
        for loc in locations:
            row = panel.locations.index(loc)
            series = grid[row, :end_col]
            if series.size < 2 * zeta:
                per_loc[loc] = None
            else:
                per_loc[loc] = list(fit_covariate_forecaster(series, zeta).weights)
        out[cov] = per_loc
    return out


@dataclass
class ModelAssembly:
    """A ready-to-optimize model: spec, fresh parameter store, window."""

    spec: ModelSpec
    store: object
    train_start: int
    train_end: int
    excluded: list


def assemble_model(panel, settings=None) -> ModelAssembly:
    """Resolve the training window, sample starting conditions, and build
    the parameter store, without running any optimization."""
    settings = settings or TrainSettings()
    train_end = settings.train_end if settings.train_end is not None else panel.last_day
    if not (panel.first_day < train_end <= panel.last_day):
        raise ConfigError(
            f"train_end {train_end} outside the panel ({panel.first_day}, "
            f"{panel.last_day}]"
        )
    history = min(settings.history, train_end - panel.first_day)
    tau = settings.horizon
    if history <= tau:
        raise ConfigError(
            f"usable history ({history} days) must exceed the horizon ({tau})"
        )
    train_start = train_end - history

    locations = list(settings.locations) if settings.locations else list(panel.locations)
    for loc in locations:
        panel.population_of(loc)

    ic_values, launch_days, excluded = sample_initial_conditions(
        panel, locations, train_start, train_end - tau - 1, settings.ic_seed
    )
    included = [loc for loc in locations if loc in launch_days]
    if not included:
        raise ConfigError("no location is trainable: " + "; ".join(
            f"{loc}: {reason}" for loc, reason in excluded
        ))

    slots = build_slots(panel, settings.covariates, settings.lag_depth)
    spec = ModelSpec(
        locations=tuple(included),
        populations={loc: panel.population_of(loc) for loc in included},
        launch_days=launch_days,
        slots=slots,
        bounds=settings.resolved_bounds(),
        lag_depth=settings.lag_depth,
        quantiles=tuple(settings.loss.quantiles)
        if settings.loss.loss_kind == "quantile"
        else None,
    )
    store = build_parameter_store(spec, ic_values)
    return ModelAssembly(
        spec=spec,
        store=store,
        train_start=train_start,
        train_end=train_end,
        excluded=excluded,
    )


def train(panel, settings=None, log_path=None):
    """Two-phase optimization; returns the best-validation TrainArtifact.

    Raises TrainingDivergedError when the loss stops being finite, and
    ConfigError when the panel leaves nothing to train on.
    """
    settings = settings or TrainSettings()
    assembly = assemble_model(panel, settings)
    spec = assembly.spec
    store = assembly.store
    train_start = assembly.train_start
    train_end = assembly.train_end
    excluded = assembly.excluded
    history = train_end - train_start
    tau = settings.horizon
    included = list(spec.locations)
    slots = spec.slots
    phase1_policy = TeacherForcingPolicy(settings.phase1_lambda)

    def taped_loss(window, policy):
        tape = Tape()
        bound = store.bind(tape)
        results = rollout_all_locations(spec, bound, panel, panel, window, policy)
        encoders = spec.bind_encoders(bound)
        heads = spec.bind_heads(bound)
        loss = total_loss(
            predictions_of(results),
            rates_of(results),
            encoders.values(),
            panel,
            settings.loss,
            window,
            tau,
            heads=heads,
        )
        return bound, loss

    def score_now():
        # a wild iterate can drive the free-running validation rollout out
        # of the dynamics' domain; that iterate is simply not a candidate
        try:
            return validation_fit_score(
                spec, store.values(), panel, settings.loss, train_start,
                train_end, tau,
            )
        except (DomainError, NumericalError):
            return math.inf

    log = []
    best_score = score_now()
    best_params = store.values()
    best_iteration = 0
    log.append(
        {"phase": "init", "iteration": 0, "train_loss": None,
         "validation_fit": best_score}
    )

    opt = settings.optimizer
    iteration = 0
    rms_state = {}
    patience_left = opt.patience
    phase1_window = (train_start, train_end - tau - 1)
    phase1_done = 0
    for _ in range(opt.max_iterations):
        iteration += 1
        try:
            bound, loss = taped_loss(phase1_window, phase1_policy)
        except (DomainError, NumericalError) as exc:
            raise TrainingDivergedError(
                iteration, f"phase 1 rollout left the dynamics' domain: {exc}"
            ) from exc
        loss_value = value_of(loss)
        if not math.isfinite(loss_value):
            raise TrainingDivergedError(
                iteration, f"training loss became {loss_value!r} in phase 1"
            )
        if isinstance(loss, Node):
            backward(loss)
            grads = {name: bound[name].grad for name in store.names()}
        else:
            grads = {}
        rmsprop_step(store, grads, rms_state, opt)
        score = score_now()
        log.append(
            {"phase": "explore", "iteration": iteration,
             "train_loss": loss_value, "validation_fit": score}
        )
        phase1_done += 1
        if score < best_score:
            best_score = score
            best_params = store.values()
            best_iteration = iteration
            patience_left = opt.patience
        else:
            patience_left -= 1
            if patience_left == 0:
                break

    store.load(best_params)
    rms_state = {}
    phase2_window = (train_start, train_end)
    phase2_done = 0
    for _ in range(opt.fine_tune_iterations):
        iteration += 1
        try:
            bound, loss = taped_loss(phase2_window, FREE_RUNNING)
        except (DomainError, NumericalError) as exc:
            raise TrainingDivergedError(
                iteration, f"phase 2 rollout left the dynamics' domain: {exc}"
            ) from exc
        loss_value = value_of(loss)
        if not math.isfinite(loss_value):
            raise TrainingDivergedError(
                iteration, f"training loss became {loss_value!r} in phase 2"
            )
        if isinstance(loss, Node):
            backward(loss)
            grads = {name: bound[name].grad for name in store.names()}
        else:
            grads = {}
        rmsprop_step(store, grads, rms_state, opt)
        score = score_now()
        log.append(
            {"phase": "refine", "iteration": iteration,
             "train_loss": loss_value, "validation_fit": score}
        )
        phase2_done += 1
        if score < best_score:
            best_score = score
            best_params = store.values()
            best_iteration = iteration

    store.load(best_params)
    forecasters = _fit_forecasters(panel, included, slots, train_end, settings.zeta)

    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for row in log:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    return TrainArtifact(
        spec=spec,
        parameters=store.values(),
        loss=settings.loss,
        optimizer=opt,
        phase1_lambda=settings.phase1_lambda,
        train_end=train_end,
        history=history,
        horizon=tau,
        zeta=settings.zeta,
        validation_score=best_score,
        iterations={
            "phase1": phase1_done,
            "phase2": phase2_done,
            "best": best_iteration,
        },
        excluded=excluded,
        forecasters=forecasters,
        normalization=dict(panel.normalization.to_dict()),
        level=panel.level,
        anchor=panel.anchor.isoformat(),
        training_log=log,
    )
