"""Grid probe for the synthetic-recovery budget: one config per argv index."""

import datetime as dt
import sys
import time

from covseir.features import prepare_dataset
from covseir.synthetic import SyntheticWorldConfig, generate_world
from covseir.training import (
    LossConfig,
    OptimizerConfig,
    TrainSettings,
    forecast,
    train,
)
from covseir.training.model import FREE_RUNNING, predictions_of, rollout_all_locations

TRAIN_DAYS = 150
TAU = 14


def build_panel(world, n_days):
    cut = world.config.anchor + dt.timedelta(days=n_days)
    obs = {k: v for k, v in world.observations.items() if k[1] < cut}
    tv = {k: v for k, v in world.time_varying.items() if k[2] < cut}
    panel, _ = prepare_dataset(
        obs, tv, world.statics, world.population, [], "state",
        anchor=world.config.anchor, case_lags=(),
    )
    return panel


def q_mape_window(artifact, panel):
    spec = artifact.spec
    rollouts = rollout_all_locations(
        spec, artifact.parameters, panel,
        None, (artifact.train_end - artifact.history, artifact.train_end),
        FREE_RUNNING,
    )
    preds = predictions_of(rollouts)
    total, count = 0.0, 0
    for loc in spec.locations:
        for day in range(artifact.train_end - artifact.history, artifact.train_end + 1):
            actual = panel.observed_value(loc, "Q", day)
            if actual is None or actual == 0.0:
                continue
            total += abs(float(preds[loc]["Q"][day]) - actual) / actual
            count += 1
    return 100.0 * total / count


def death_scores(artifact, panel, world):
    result = forecast(artifact, panel, horizon=TAU)
    model_err, persist_err = 0.0, 0.0
    n = 0
    for loc in artifact.spec.locations:
        truth = world.truth[loc]["D"]
        base = panel.observed_value(loc, "D", artifact.train_end)
        path = result.trajectory(loc, "D")
        for i, day in enumerate(result.days):
            model_err += abs(path[i] - truth[day])
            persist_err += abs(base - truth[day])
            n += 1
    return model_err / n, persist_err / n


GRID = {
    # name: (lr, d_weight, z, phase1, patience, phase2, lag_depth, history)
    "g_h40": (0.02, 1.0, 0.0, 500, 500, 700, 1, 40),
    "h_h60": (0.02, 1.0, 0.0, 500, 500, 700, 1, 60),
    "i_h40_d5": (0.02, 5.0, 0.0, 500, 500, 700, 1, 40),
    "j_h60_lr04": (0.04, 1.0, 0.0, 500, 500, 700, 1, 60),
    "k_h40_lr01": (0.01, 1.0, 0.0, 500, 500, 700, 1, 40),
    "l_h30": (0.02, 1.0, 0.0, 500, 500, 700, 1, 30),
    "m_h40_defaults": (0.01, 0.1, 0.0, 500, 500, 700, 1, 40),
}


def main():
    name = sys.argv[1]
    lr, d_weight, z, phase1, patience, phase2, lag_depth, history = GRID[name]
    world = generate_world(SyntheticWorldConfig())
    panel = build_panel(world, TRAIN_DAYS)
    weights = {"Q": 0.1, "D": d_weight, "H": 0.01,
               "R_doc": 0.001, "C": 0.001, "V": 0.001}
    settings = TrainSettings(
        horizon=TAU,
        history=history,
        loss=LossConfig(z=z, lambda_y=weights),
        optimizer=OptimizerConfig(
            learning_rate=lr,
            max_iterations=phase1,
            patience=patience,
            fine_tune_iterations=phase2,
        ),
        covariates=("mobility", "intervention"),
        lag_depth=lag_depth,
        ic_seed=0,
    )
    t0 = time.time()
    artifact = train(panel, settings)
    wall = time.time() - t0
    mape = q_mape_window(artifact, panel)
    d_mae, persist = death_scores(artifact, panel, world)
    gain = 100.0 * (1.0 - d_mae / persist)
    print(
        f"{name}: wall {wall:7.1f}s iters {artifact.iterations} "
        f"val {artifact.validation_score:.4g} Q-MAPE {mape:6.2f}% "
        f"D-MAE {d_mae:9.1f} persist {persist:9.1f} gain {gain:6.1f}%",
        flush=True,
    )


if __name__ == "__main__":
    main()
