"""Seeded random hyperparameter search.

Each trial samples a configuration, trains from scratch, and reports the
validation fit score. Trials are independent: trial i draws from its own
rng stream seeded by (seed, i), so a run is reproducible regardless of how
many worker threads execute it, and the winner is the lowest (score, trial
index) pair. The search space is a plain dataclass of bounds so other
strategies can reuse it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from .loop import TrainSettings, train

__all__ = ["SearchSpace", "TrialResult", "SearchReport", "hyperparameter_search"]


def _log_uniform(rng, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


@dataclass(frozen=True)
class SearchSpace:
    """Bounds for the sampled hyperparameters.

    learning_rate, lambda_comp, lambda_smooth and lambda_ls are drawn
    log-uniformly; z uniformly; the initial-condition seed uniformly over
    [0, ic_seed_limit).
    """

    learning_rate: tuple = (1e-4, 1e-1)
    z: tuple = (0.0, 0.01)
    lambda_comp: tuple = (1e-2, 10.0)
    lambda_smooth: tuple = (1e-4, 1.0)
    lambda_ls: tuple = (1e-4, 1.0)
    ic_seed_limit: int = 2**31 - 1

    def __post_init__(self) -> None:
        for name in ("learning_rate", "lambda_comp", "lambda_smooth", "lambda_ls"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} bounds must satisfy 0 < lo <= hi")
        lo, hi = self.z
        if not (0 <= lo <= hi):
            raise ConfigError("z bounds must satisfy 0 <= lo <= hi")
        if self.ic_seed_limit < 1:
            raise ConfigError("ic_seed_limit must be >= 1")

    def sample(self, rng) -> dict:
        """One configuration draw; the draw order is part of the seeding
        contract and must not change."""
        return {
            "learning_rate": _log_uniform(rng, *self.learning_rate),
            "z": float(rng.uniform(*self.z)),
            "lambda_comp": _log_uniform(rng, *self.lambda_comp),
            "lambda_smooth": _log_uniform(rng, *self.lambda_smooth),
            "lambda_ls": _log_uniform(rng, *self.lambda_ls),
            "ic_seed": int(rng.integers(0, self.ic_seed_limit)),
        }


@dataclass
class TrialResult:
    index: int
    sample: dict
    score: float
    artifact: object | None
    error: str | None = None

    def summary(self) -> dict:
        return {
            "index": self.index,
            "sample": dict(self.sample),
            "score": self.score,
            "error": self.error,
        }


@dataclass
class SearchReport:
    best: TrialResult
    trials: list = field(default_factory=list)

    @property
    def best_artifact(self):
        return self.best.artifact

    def to_payload(self) -> dict:
        return {
            "best_index": self.best.index,
            "best_score": self.best.score,
            "trials": [t.summary() for t in self.trials],
        }


def settings_for_sample(base: TrainSettings, sample: dict) -> TrainSettings:
    loss = replace(
        base.loss,
        z=sample["z"],
        lambda_comp=sample["lambda_comp"],
        lambda_smooth=sample["lambda_smooth"],
        lambda_ls=sample["lambda_ls"],
    )
    optimizer = replace(base.optimizer, learning_rate=sample["learning_rate"])
    return replace(base, loss=loss, optimizer=optimizer, ic_seed=sample["ic_seed"])


def hyperparameter_search(
    panel,
    base_settings: TrainSettings | None = None,
    space: SearchSpace | None = None,
    trials: int = 64,
    seed: int = 0,
    threads: int = 1,
) -> SearchReport:
    """Random search; returns the report with the best trial's artifact.

    A diverging trial is recorded with an infinite score instead of
    aborting the search; if every trial diverges the first failure is
    re-raised.
    """
    if trials <= 0:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    base = base_settings or TrainSettings()
    space = space or SearchSpace()

    def run_trial(index: int) -> TrialResult:
        rng = np.random.default_rng([seed, index])
        sample = space.sample(rng)
        settings = settings_for_sample(base, sample)
        try:
            artifact = train(panel, settings)
        except TrainingDivergedError as err:
            return TrialResult(index, sample, math.inf, None, error=str(err))
        return TrialResult(index, sample, artifact.validation_score, artifact)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_trial, range(trials)))
    else:
        results = [run_trial(i) for i in range(trials)]

    best = min(results, key=lambda t: (t.score, t.index))
    if best.artifact is None:
        raise TrainingDivergedError(
            0, f"every search trial diverged; first failure: {results[0].error}"
        )
    return SearchReport(best=best, trials=results)
