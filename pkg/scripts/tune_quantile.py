"""Probe quantile-band calibration on a noisy world: one config per argv."""

import datetime as dt
import sys
import time

from covseir.features import OBSERVABLES, prepare_dataset
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


def build_panel(world, n_days):
    cut = world.config.anchor + dt.timedelta(days=n_days)
    obs = {k: v for k, v in world.observations.items() if k[1] < cut}
    tv = {k: v for k, v in world.time_varying.items() if k[2] < cut}
    panel, _ = prepare_dataset(
        obs, tv, world.statics, world.population, [], "state",
        anchor=world.config.anchor, case_lags=(),
    )
    return panel


def coverage_by_symbol(result, world):
    anchor = world.config.anchor
    per_symbol = {s: [0, 0] for s in OBSERVABLES}
    crossings = 0
    for loc in result.locations:
        for symbol in OBSERVABLES:
            lo = result.values[loc][symbol][0.1]
            mid = result.values[loc][symbol][0.5]
            hi = result.values[loc][symbol][0.9]
            for i, day in enumerate(result.days):
                if not (lo[i] <= mid[i] <= hi[i]):
                    crossings += 1
                actual = world.observations.get(
                    (loc, anchor + dt.timedelta(days=day)), {}
                ).get(symbol)
                if actual is None:
                    continue
                per_symbol[symbol][1] += 1
                if lo[i] <= actual <= hi[i]:
                    per_symbol[symbol][0] += 1
    return per_symbol, crossings


def insample_coverage(artifact, panel):
    spec = artifact.spec
    start = artifact.train_end - artifact.history
    rollouts = rollout_all_locations(
        spec, artifact.parameters, panel, None,
        (start, artifact.train_end), FREE_RUNNING,
    )
    preds = predictions_of(rollouts)
    inside, total = 0, 0
    for loc in spec.locations:
        for symbol in OBSERVABLES:
            lo_s = artifact.parameters[f"head/{symbol}/0.1/scale"]
            lo_o = artifact.parameters[f"head/{symbol}/0.1/offset"]
            hi_s = artifact.parameters[f"head/{symbol}/0.9/scale"]
            hi_o = artifact.parameters[f"head/{symbol}/0.9/offset"]
            for day in range(start, artifact.train_end + 1):
                actual = panel.observed_value(loc, symbol, day)
                if actual is None:
                    continue
                point = preds[loc][symbol][day]
                total += 1
                if lo_s * point + lo_o <= actual <= hi_s * point + hi_o:
                    inside += 1
    return inside, total


EQUAL = {s: 0.1 for s in OBSERVABLES}

CONFIGS = {
    # name: (noise_scale, weights, iters1, iters2, history)
    "qa_default_w": (0.05, None, 500, 700, 40),
    "qb_equal_w": (0.05, EQUAL, 500, 700, 40),
    "qc_default_n10": (0.10, None, 500, 700, 40),
    "qd_n10_eq_long": (0.10, EQUAL, 300, 1200, 40),
    "qe_n10_eq_h60": (0.10, EQUAL, 300, 1200, 60),
}


def main():
    name = sys.argv[1]
    noise, weights, it1, it2, history = CONFIGS[name]
    world = generate_world(
        SyntheticWorldConfig(noise_scale=noise, observation_holes=False)
    )
    panel = build_panel(world, TRAIN_DAYS)
    loss_kwargs = dict(loss_kind="quantile", quantiles=(0.1, 0.5, 0.9))
    if weights is not None:
        loss_kwargs["lambda_y"] = weights
    settings = TrainSettings(
        horizon=TAU,
        history=history,
        loss=LossConfig(**loss_kwargs),
        optimizer=OptimizerConfig(
            learning_rate=0.01, max_iterations=it1, patience=it1,
            fine_tune_iterations=it2,
        ),
        covariates=("mobility", "intervention"),
        lag_depth=1,
        ic_seed=0,
    )
    t0 = time.time()
    artifact = train(panel, settings)
    wall = time.time() - t0
    result = forecast(artifact, panel, horizon=TAU)
    per_symbol, crossings = coverage_by_symbol(result, world)
    total_in = sum(v[0] for v in per_symbol.values())
    total_n = sum(v[1] for v in per_symbol.values())
    fit_in, fit_n = insample_coverage(artifact, panel)
    parts = " ".join(
        f"{s}:{v[0]}/{v[1]}" for s, v in sorted(per_symbol.items())
    )
    print(
        f"{name}: wall {wall:6.1f}s overall {total_in}/{total_n}"
        f" = {100.0 * total_in / total_n:5.1f}% cross {crossings}"
        f" insample {fit_in}/{fit_n} = {100.0 * fit_in / fit_n:5.1f}%"
        f" [{parts}]",
        flush=True,
    )


if __name__ == "__main__":
    main()
