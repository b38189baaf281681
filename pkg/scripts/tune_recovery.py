"""Scratch experiment: training budget vs recovery quality on the fixture
world. Not part of the package; used to pin acceptance-test settings."""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from covseir.features import prepare_dataset
from covseir.synthetic import SyntheticWorldConfig, generate_world
from covseir.training import (
    FREE_RUNNING,
    LossConfig,
    OptimizerConfig,
    TrainSettings,
    forecast,
    predictions_of,
    rollout_all_locations,
    train,
)

TRAIN_DAYS = 150
TAU = 14


def build_panel(world):
    obs = {
        key: val
        for key, val in world.observations.items()
        if (key[1] - world.config.anchor).days < TRAIN_DAYS
    }
    tv = {
        key: val
        for key, val in world.time_varying.items()
        if (key[2] - world.config.anchor).days < TRAIN_DAYS
    }
    panel, report = prepare_dataset(
        obs, tv, world.statics, world.population, [], "state",
        anchor=world.config.anchor,
    )
    return panel


def q_mape_training_window(artifact, panel):
    spec = artifact.spec
    rollouts = rollout_all_locations(
        spec, artifact.parameters, panel, None,
        (artifact.train_end - artifact.history, artifact.train_end),
        FREE_RUNNING,
    )
    preds = predictions_of(rollouts)
    errs = []
    for loc in spec.locations:
        for day, value in preds[loc]["Q"].items():
            actual = panel.observed_value(loc, "Q", day)
            if actual:
                errs.append(abs(value - actual) / actual)
    return float(np.mean(errs))


def death_mae_vs_persistence(artifact, panel, world):
    result = forecast(artifact, panel, horizon=TAU)
    model_errs, persist_errs = [], []
    for loc in artifact.spec.locations:
        truth = world.truth[loc]["D"]
        last = panel.observed_value(loc, "D", artifact.train_end)
        pred = result.values[loc]["D"]["point"]
        for i in range(TAU):
            actual = truth[TRAIN_DAYS + i]
            model_errs.append(abs(pred[i] - actual))
            persist_errs.append(abs(last - actual))
    return float(np.mean(model_errs)), float(np.mean(persist_errs))


def main():
    world = generate_world(SyntheticWorldConfig())
    panel = build_panel(world)
    print("panel days:", panel.n_days, "locs:", panel.locations, flush=True)

    for max_iter, patience, fine in ((120, 120, 30), (400, 150, 100), (900, 200, 300)):
        settings = TrainSettings(
            horizon=TAU,
            history=TRAIN_DAYS - 1,
            loss=LossConfig(),
            optimizer=OptimizerConfig(
                max_iterations=max_iter, patience=patience,
                fine_tune_iterations=fine,
            ),
            covariates=("mobility", "intervention"),
            lag_depth=3,
            ic_seed=0,
        )
        t0 = time.time()
        artifact = train(panel, settings)
        wall = time.time() - t0
        mape = q_mape_training_window(artifact, panel)
        mae, persist = death_mae_vs_persistence(artifact, panel, world)
        done = artifact.iterations
        print(
            f"budget {max_iter:4d}+{fine:3d}: wall {wall:7.1f}s iters {done} "
            f"val {artifact.validation_score:.4g} Q-MAPE {100*mape:6.2f}% "
            f"D-MAE {mae:10.1f} persistence {persist:10.1f} "
            f"improvement {100*(1-mae/persist):6.1f}%",
            flush=True,
        )


if __name__ == "__main__":
    main()
