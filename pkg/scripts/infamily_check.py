"""Diagnostic: bind the synthetic world's true parameters into the model
and confirm the free rollout reproduces the truth (the world must be
exactly representable before any recovery experiment means anything)."""

import datetime as dt

import numpy as np

from covseir.features import prepare_dataset
from covseir.synthetic import (
    RATE_RULES,
    SyntheticWorldConfig,
    _initial_state,
    generate_world,
)
from covseir.training.model import (
    FREE_RUNNING,
    ModelSpec,
    build_parameter_store,
    build_slots,
    predictions_of,
    rollout_all_locations,
)
from covseir.encoders import TIME_VARYING, default_bounds


CONFIG = SyntheticWorldConfig()


def build_panel(world, n_days):
    cut = CONFIG.anchor + dt.timedelta(days=n_days)
    obs = {k: v for k, v in world.observations.items() if k[1] < cut}
    tv = {k: v for k, v in world.time_varying.items() if k[2] < cut}
    panel, _report = prepare_dataset(
        obs,
        tv,
        world.statics,
        world.population,
        [],
        CONFIG.level,
        anchor=CONFIG.anchor,
        case_lags=(),
    )
    return panel


def true_parameters(panel, spec, world):
    rng = np.random.default_rng([CONFIG.seed, 29])
    initial_values = {}
    for li, loc in enumerate(CONFIG.locations):
        state = _initial_state(rng, float(CONFIG.populations[li]))
        initial_values[loc] = {
            comp: getattr(state, comp)
            for comp in ("E", "I_doc", "I_undoc", "R_doc", "R_undoc",
                         "H", "C", "V", "D")
        }
    store = build_parameter_store(spec, initial_values)
    norm = panel.normalization
    for rate, (lo, hi, bias, weights) in RATE_RULES.items():
        shifted = bias
        for cov, w in weights.items():
            mn, mx = norm.ranges[cov]
            shifted += w * mn
        store.set(f"enc/{rate}/bias", shifted)
        for i, slot in enumerate(spec.slots):
            if slot.kind == TIME_VARYING and slot.lag == 1 and slot.covariate_id in weights:
                mn, mx = norm.ranges[slot.covariate_id]
                store.set(
                    f"enc/{rate}/w/{i:03d}", weights[slot.covariate_id] * (mx - mn)
                )
    return store


def main():
    world = generate_world(CONFIG)
    panel = build_panel(world, CONFIG.n_days)
    slots = build_slots(panel, ("intervention", "mobility"), lag_depth=1)
    spec = ModelSpec(
        locations=tuple(CONFIG.locations),
        populations=dict(world.population),
        launch_days={loc: 0 for loc in CONFIG.locations},
        slots=slots,
        bounds=default_bounds(),
        lag_depth=1,
        quantiles=None,
    )
    store = true_parameters(panel, spec, world)
    params = store.values()
    rollouts = rollout_all_locations(
        spec, params, panel, None, (0, CONFIG.n_days - 1), FREE_RUNNING
    )
    preds = predictions_of(rollouts)
    worst = 0.0
    worst_where = None
    for loc in CONFIG.locations:
        for symbol in ("Q", "D", "H", "C", "V", "R_doc"):
            truth = world.truth[loc][symbol]
            for day in range(CONFIG.n_days):
                got = float(preds[loc][symbol][day])
                want = truth[day]
                err = abs(got - want) / max(1.0, abs(want))
                if err > worst:
                    worst = err
                    worst_where = (loc, symbol, day, got, want)
    print("worst relative error:", worst)
    print("at:", worst_where)


if __name__ == "__main__":
    main()
