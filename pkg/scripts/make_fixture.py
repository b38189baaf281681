"""Regenerate the bundled synthetic fixture and its run configurations.

The fixture is a three-location, 164-day world from the synthetic
generator: 150 days of observations for training plus 14 held-out days
for scoring forecasts. config.yaml carries the full recovery recipe;
config_quick.yaml is a seconds-scale variant (tiny budget, two search
trials) used for the byte-determinism goldens.

Run from the repository root:

    python3 scripts/make_fixture.py
"""

import pathlib

from covseir.synthetic import SyntheticWorldConfig, generate_world, world_to_csvs

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURE_DIR = ROOT / "fixtures" / "synthetic"

WORLD = SyntheticWorldConfig(
    locations=("north", "south", "east"),
    populations=(2.4e6, 1.1e6, 3.2e6),
    n_days=164,
    covariates=("mobility", "intervention"),
    seed=0,
)

SPLIT_DAY = 150

CONFIG = """\
# Full synthetic-recovery run: train on the last 40 of 150 observed days,
# then forecast 14 days ahead.
data:
  observations: observations.csv
  time_varying: time_varying.csv
  statics: statics.csv
  population: population.csv
level: state
horizon: 14
history: 40
seed: 0
output_dir: out
ingest:
  case_lags: []
optimizer:
  learning_rate: 0.01
  max_iterations: 500
  patience: 500
  fine_tune_iterations: 700
model:
  covariates: [mobility, intervention]
  lag_depth: 1
  ic_seed: 0
evaluate:
  actuals: heldout.csv
fairness:
  covariate: density
  bins: 3
  underprediction_bins: 3
  bootstrap_samples: 500
"""

CONFIG_QUICK = """\
# Seconds-scale variant of config.yaml: same data and wiring, but a tiny
# optimizer budget and a two-trial hyperparameter search so the parallel
# path is exercised. The pipeline goldens are generated from this file.
data:
  observations: observations.csv
  time_varying: time_varying.csv
  statics: statics.csv
  population: population.csv
level: state
horizon: 14
history: 40
seed: 0
output_dir: out_quick
ingest:
  case_lags: []
optimizer:
  learning_rate: 0.01
  max_iterations: 6
  patience: 6
  fine_tune_iterations: 3
model:
  covariates: [mobility, intervention]
  lag_depth: 1
  ic_seed: 0
search:
  trials: 2
  seed: 7
evaluate:
  actuals: heldout.csv
fairness:
  covariate: density
  bins: 3
  underprediction_bins: 3
  bootstrap_samples: 500
"""


def main():
    world = generate_world(WORLD)
    world_to_csvs(world, FIXTURE_DIR, split_day=SPLIT_DAY)
    (FIXTURE_DIR / "config.yaml").write_text(CONFIG, encoding="utf-8")
    (FIXTURE_DIR / "config_quick.yaml").write_text(CONFIG_QUICK, encoding="utf-8")
    for name in sorted(p.name for p in FIXTURE_DIR.iterdir()):
        print(f"wrote {name}")


if __name__ == "__main__":
    main()
