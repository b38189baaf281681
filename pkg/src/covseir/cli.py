"""Command-line operator surface.

One YAML run configuration drives every subcommand, so a pipeline is a
sequence of invocations sharing a config and an output directory:

    covseir ingest   --config run.yaml
    covseir train    --config run.yaml
    covseir forecast --config run.yaml
    covseir evaluate --config run.yaml
    covseir fairness --config run.yaml

Paths inside the config resolve relative to the config file; flag paths
resolve relative to the working directory. Every subcommand writes
deterministic bytes for fixed inputs and seed, exits 0 on success, and on
failure prints a one-line JSON error object to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .autodiff import gradient_check
from .dynamics import (
    COMPARTMENTS,
    RATE_NAMES,
    CompartmentState,
    RateSet,
    effective_reproduction_number,
    ngm_spectral_radius,
    simulate,
    trajectory_to_csv,
    validate_rates,
)
from .encoders import DEFAULT_ZETA
from .errors import ConfigError, CovseirError, DataError, NumericalError
from .evaluation import (
    FIXED_HORIZON,
    MULTI_HORIZON,
    bin_locations,
    fairness_report,
    fairness_to_csv,
    interval_coverage,
    load_forecast_frame,
    mae,
    mape,
    mean_error,
    nmae,
    rmse,
    rmsle,
    underprediction_rates,
)
from .features import (
    DEFAULT_ANCHOR,
    DEFAULT_CASE_LAGS,
    load_dataset_from_csv,
    read_observations_csv,
    read_statics_csv,
)
from .training import (
    LossConfig,
    OptimizerConfig,
    TeacherForcingPolicy,
    TrainArtifact,
    TrainSettings,
    assemble_model,
    forecast,
    forecast_to_csv,
    hyperparameter_search,
    predictions_of,
    rates_of,
    rollout_all_locations,
    total_loss,
    train,
)

__all__ = ["RunConfig", "main"]

EVAL_MODES = {"multi_horizon": MULTI_HORIZON, "fixed_horizon": FIXED_HORIZON}

_TOP_KEYS = (
    "data", "level", "anchor", "horizon", "history", "seed", "threads",
    "output_dir", "ingest", "loss", "optimizer", "model", "search",
    "evaluate", "fairness", "simulate", "gradcheck",
)
_DATA_KEYS = ("observations", "time_varying", "statics", "population", "adjacency")
_INGEST_KEYS = ("case_lags", "graph_covariates")
_MODEL_KEYS = (
    "covariates", "lag_depth", "ic_seed", "zeta", "phase1_lambda",
    "train_end", "locations", "bounds",
)
_SEARCH_KEYS = ("trials", "seed")
_EVALUATE_KEYS = ("actuals", "compartments", "modes", "band")
_FAIRNESS_KEYS = (
    "covariate", "bins", "metrics", "underprediction_bins", "bootstrap_samples",
)
_SIMULATE_KEYS = ("days", "population", "rates", "initial")
_GRADCHECK_KEYS = ("step", "rel_tol", "abs_floor")


def _check_keys(mapping, allowed, where):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown keys in {where}: {', '.join(map(str, unknown))}"
        )


def _section(payload, key, allowed):
    raw = payload.get(key)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    _check_keys(raw, allowed, f"config section {key!r}")
    return raw


def _parse_day(value, anchor, what):
    """A day index from an int or an ISO date interpreted via the anchor."""
    if value is None:
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, _dt.date):
        return (value - anchor).days
    try:
        return (_dt.date.fromisoformat(str(value)) - anchor).days
    except ValueError:
        raise ConfigError(
            f"{what} must be a day index or ISO date, got {value!r}"
        ) from None


@dataclass
class RunConfig:
    """One resolved run configuration shared by every subcommand."""

    observations: Path
    population: Path
    time_varying: Path | None = None
    statics: Path | None = None
    adjacency: Path | None = None
    level: str = "state"
    anchor: _dt.date = DEFAULT_ANCHOR
    horizon: int = 14
    history: int = 150
    seed: int = 0
    threads: int = 1
    output_dir: Path = Path("out")
    case_lags: tuple = DEFAULT_CASE_LAGS
    graph_covariates: tuple | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    covariates: tuple | None = None
    lag_depth: int = 7
    ic_seed: int | None = None
    zeta: int = DEFAULT_ZETA
    phase1_lambda: float = 0.5
    train_end: int | None = None
    locations: tuple | None = None
    bounds: dict | None = None
    search_trials: int = 0
    search_seed: int | None = None
    eval_actuals: Path | None = None
    eval_compartments: tuple = ("Q", "D")
    eval_modes: tuple = ("multi_horizon", "fixed_horizon")
    eval_band: tuple = (0.1, 0.9)
    fairness_covariate: str | None = None
    fairness_bins: int = 4
    fairness_metrics: tuple = ("mae", "nmae", "me")
    underprediction_bins: int = 10
    bootstrap_samples: int = 1000
    sim_days: int = 30
    sim_population: float = 1_000_000.0
    sim_rates: dict = field(default_factory=dict)
    sim_initial: dict = field(default_factory=dict)
    gradcheck_step: float = 1e-5
    gradcheck_rel_tol: float = 1e-4
    gradcheck_abs_floor: float = 1e-8

    def __post_init__(self):
        if self.level not in ("state", "county"):
            raise ConfigError(f"level must be 'state' or 'county', got {self.level!r}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.history <= self.horizon:
            raise ConfigError(
                f"history ({self.history}) must exceed horizon ({self.horizon})"
            )
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        for mode in self.eval_modes:
            if mode not in EVAL_MODES:
                raise ConfigError(
                    f"unknown evaluation mode {mode!r}; expected one of "
                    f"{sorted(EVAL_MODES)}"
                )
        for path in (self.observations, self.population, self.time_varying,
                     self.statics, self.adjacency, self.eval_actuals):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"referenced file does not exist: {path}")
        for rate in self.sim_rates:
            if rate not in RATE_NAMES:
                raise ConfigError(f"simulate.rates has unknown rate {rate!r}")
        for comp in self.sim_initial:
            if comp not in COMPARTMENTS or comp == "S":
                raise ConfigError(
                    f"simulate.initial has unknown compartment {comp!r} "
                    f"(S is derived from the population)"
                )

    @classmethod
    def from_file(cls, path, overrides=None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file does not exist: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            payload = yaml.safe_load(fh)
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        _check_keys(payload, _TOP_KEYS, "config")
        base = path.parent

        def rel(p):
            return None if p is None else (base / str(p))

        data = _section(payload, "data", _DATA_KEYS)
        if "observations" not in data or "population" not in data:
            raise ConfigError(
                "config section 'data' must provide observations and population"
            )
        ingest = _section(payload, "ingest", _INGEST_KEYS)
        loss_raw = _section(payload, "loss", LossConfig().to_dict().keys())
        optimizer_raw = _section(payload, "optimizer", OptimizerConfig().to_dict().keys())
        model = _section(payload, "model", _MODEL_KEYS)
        search = _section(payload, "search", _SEARCH_KEYS)
        evaluate = _section(payload, "evaluate", _EVALUATE_KEYS)
        fairness = _section(payload, "fairness", _FAIRNESS_KEYS)
        sim = _section(payload, "simulate", _SIMULATE_KEYS)
        gradcheck = _section(payload, "gradcheck", _GRADCHECK_KEYS)

        anchor = payload.get("anchor", DEFAULT_ANCHOR.isoformat())
        if isinstance(anchor, _dt.date):
            pass
        else:
            try:
                anchor = _dt.date.fromisoformat(str(anchor))
            except ValueError:
                raise ConfigError(f"anchor must be an ISO date, got {anchor!r}") from None

        loss_payload = {**LossConfig().to_dict(), **loss_raw}
        optimizer_payload = {**OptimizerConfig().to_dict(), **optimizer_raw}

        overrides = overrides or argparse.Namespace()
        horizon = getattr(overrides, "horizon", None)
        level = getattr(overrides, "level", None)
        seed = getattr(overrides, "seed", None)
        threads = getattr(overrides, "threads", None)
        out = getattr(overrides, "out", None)
        quantiles = getattr(overrides, "quantiles", None)
        strict = getattr(overrides, "strict_printed_losses", False)

        if quantiles is not None:
            loss_payload["loss_kind"] = "quantile"
            loss_payload["quantiles"] = list(quantiles)
        if strict:
            loss_payload["strict_printed"] = True

        def pick(flag, key, default):
            return flag if flag is not None else payload.get(key, default)

        config = cls(
            observations=rel(data["observations"]),
            population=rel(data["population"]),
            time_varying=rel(data.get("time_varying")),
            statics=rel(data.get("statics")),
            adjacency=rel(data.get("adjacency")),
            level=pick(level, "level", "state"),
            anchor=anchor,
            horizon=int(pick(horizon, "horizon", 14)),
            history=int(payload.get("history", 150)),
            seed=int(pick(seed, "seed", 0)),
            threads=int(pick(threads, "threads", 1)),
            output_dir=Path(out) if out is not None
            else base / str(payload.get("output_dir", "out")),
            case_lags=tuple(ingest.get("case_lags", DEFAULT_CASE_LAGS)),
            graph_covariates=(
                tuple(ingest["graph_covariates"])
                if ingest.get("graph_covariates") is not None
                else None
            ),
            loss=LossConfig.from_dict(loss_payload),
            optimizer=OptimizerConfig.from_dict(optimizer_payload),
            covariates=(
                tuple(model["covariates"])
                if model.get("covariates") is not None
                else None
            ),
            lag_depth=int(model.get("lag_depth", 7)),
            ic_seed=(
                int(model["ic_seed"]) if model.get("ic_seed") is not None else None
            ),
            zeta=int(model.get("zeta", DEFAULT_ZETA)),
            phase1_lambda=float(model.get("phase1_lambda", 0.5)),
            train_end=_parse_day(model.get("train_end"), anchor, "model.train_end"),
            locations=(
                tuple(model["locations"]) if model.get("locations") is not None else None
            ),
            bounds=model.get("bounds"),
            search_trials=int(search.get("trials", 0)),
            search_seed=(
                int(search["seed"]) if search.get("seed") is not None else None
            ),
            eval_actuals=rel(evaluate.get("actuals")),
            eval_compartments=tuple(evaluate.get("compartments", ("Q", "D"))),
            eval_modes=tuple(evaluate.get("modes", ("multi_horizon", "fixed_horizon"))),
            eval_band=tuple(evaluate.get("band", (0.1, 0.9))),
            fairness_covariate=fairness.get("covariate"),
            fairness_bins=int(fairness.get("bins", 4)),
            fairness_metrics=tuple(fairness.get("metrics", ("mae", "nmae", "me"))),
            underprediction_bins=int(fairness.get("underprediction_bins", 10)),
            bootstrap_samples=int(fairness.get("bootstrap_samples", 1000)),
            sim_days=int(sim.get("days", 30)),
            sim_population=float(sim.get("population", 1_000_000.0)),
            sim_rates=dict(sim.get("rates", {})),
            sim_initial=dict(sim.get("initial", {})),
            gradcheck_step=float(gradcheck.get("step", 1e-5)),
            gradcheck_rel_tol=float(gradcheck.get("rel_tol", 1e-4)),
            gradcheck_abs_floor=float(gradcheck.get("abs_floor", 1e-8)),
        )
        return config

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            horizon=self.horizon,
            history=self.history,
            loss=self.loss,
            optimizer=self.optimizer,
            phase1_lambda=self.phase1_lambda,
            lag_depth=self.lag_depth,
            covariates=self.covariates,
            ic_seed=self.seed if self.ic_seed is None else self.ic_seed,
            zeta=self.zeta,
            locations=self.locations,
            train_end=self.train_end,
            bounds=self.bounds,
        )

    def build_panel(self):
        return load_dataset_from_csv(
            self.observations,
            self.population,
            self.level,
            time_varying_path=self.time_varying,
            statics_path=self.statics,
            adjacency_path=self.adjacency,
            anchor=self.anchor,
            case_lags=self.case_lags,
            graph_covariates=self.graph_covariates,
        )


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _emit(payload):
    print(json.dumps(payload, sort_keys=True, indent=1))


def _out_dir(config) -> Path:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return config.output_dir


def _artifact_path(config) -> Path:
    return config.output_dir / "artifact.json"


def _forecast_path(config) -> Path:
    return config.output_dir / "forecast.csv"


def cmd_ingest(config: RunConfig) -> int:
    panel, report = config.build_panel()
    out = _out_dir(config)
    panel.save(out / "panel.json")
    summary = {
        "locations": list(panel.locations),
        "level": panel.level,
        "first_day": panel.first_day,
        "last_day": panel.last_day,
        "time_varying": sorted(panel.time_varying),
        "statics": sorted(panel.statics),
        "report": report.to_dict(),
    }
    _write_json(out / "ingest_report.json", summary)
    _emit({
        "written": ["panel.json", "ingest_report.json"],
        "locations": len(panel.locations),
        "days": panel.last_day - panel.first_day + 1,
        "warnings": len(report.warnings),
        "monotone_repairs": len(report.monotone_repairs),
        "imputations": len(report.imputed_time_varying) + len(report.imputed_static),
    })
    return 0


def cmd_train(config: RunConfig) -> int:
    panel, _report = config.build_panel()
    settings = config.train_settings()
    out = _out_dir(config)
    written = ["artifact.json", "training_log.jsonl"]
    if config.search_trials > 0:
        seed = config.seed if config.search_seed is None else config.search_seed
        report = hyperparameter_search(
            panel,
            base_settings=settings,
            trials=config.search_trials,
            seed=seed,
            threads=config.threads,
        )
        artifact = report.best_artifact
        _write_json(out / "search.json", report.to_payload())
        written.append("search.json")
    else:
        artifact = train(panel, settings)
    artifact.save(_artifact_path(config))
    with open(out / "training_log.jsonl", "w", encoding="utf-8") as fh:
        for row in artifact.training_log or []:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _emit({
        "written": sorted(written),
        "validation_score": artifact.validation_score,
        "iterations": dict(artifact.iterations),
        "locations": list(artifact.spec.locations),
        "excluded": [list(pair) for pair in artifact.excluded],
    })
    return 0


def _load_artifact(config: RunConfig) -> TrainArtifact:
    path = _artifact_path(config)
    if not path.is_file():
        raise DataError(
            f"no training artifact at {path}; run the train subcommand first"
        )
    return TrainArtifact.load(path)


def cmd_forecast(config: RunConfig) -> int:
    artifact = _load_artifact(config)
    panel, _report = config.build_panel()
    result = forecast(artifact, panel, horizon=config.horizon)
    out = _out_dir(config)
    forecast_to_csv(result, _forecast_path(config))
    _emit({
        "written": ["forecast.csv"],
        "locations": list(result.locations),
        "train_end": result.train_end,
        "horizon": result.horizon,
        "keys": [str(k) for k in result.keys()],
    })
    return 0


def _load_frame(config: RunConfig):
    path = _forecast_path(config)
    if not path.is_file():
        raise DataError(
            f"no forecast at {path}; run the forecast subcommand first"
        )
    if config.eval_actuals is None:
        raise ConfigError(
            "config section 'evaluate' needs an 'actuals' observations file"
        )
    actuals = read_observations_csv(config.eval_actuals)
    return load_forecast_frame(path, actuals, config.anchor)


def cmd_evaluate(config: RunConfig) -> int:
    frame = _load_frame(config)
    metric_fns = (
        ("rmse", rmse), ("mae", mae), ("mape", mape),
        ("rmsle", rmsle), ("me", mean_error),
    )
    metrics = {}
    for name, fn in metric_fns:
        per_mode = {}
        for mode in config.eval_modes:
            per_mode[mode] = {
                symbol: fn(frame, symbol=symbol, mode=EVAL_MODES[mode])
                for symbol in config.eval_compartments
            }
        metrics[name] = per_mode
    payload = {
        "train_end": frame.train_end,
        "horizon": frame.horizon,
        "locations": list(frame.locations),
        "metrics": metrics,
        "nmae": {loc: nmae(frame, loc) for loc in frame.locations},
    }
    low, high = config.eval_band
    keys = frame.keys()
    if low in keys and high in keys:
        payload["coverage"] = {
            "band": [low, high],
            **{
                mode: interval_coverage(
                    frame, q_low=low, q_high=high, mode=EVAL_MODES[mode]
                )
                for mode in config.eval_modes
            },
        }
    out = _out_dir(config)
    _write_json(out / "metrics.json", payload)
    _emit(payload)
    return 0


def cmd_fairness(config: RunConfig) -> int:
    frame = _load_frame(config)
    if config.fairness_covariate is None:
        raise ConfigError("config section 'fairness' needs a 'covariate' id")
    if config.statics is None:
        raise ConfigError("fairness needs a statics file in config 'data'")
    raw = read_statics_csv(config.statics)
    statics = {}
    for (cov, loc), value in raw.items():
        if loc in frame.locations and value is not None:
            statics.setdefault(loc, {})[cov] = value
    binning = bin_locations(statics, config.fairness_covariate, config.fairness_bins)
    report = fairness_report(frame, binning, metrics=config.fairness_metrics)
    out = _out_dir(config)
    fairness_to_csv(report, out / "fairness.csv")

    under_binning = bin_locations(
        statics, config.fairness_covariate, config.underprediction_bins
    )
    rates = underprediction_rates(
        frame,
        under_binning,
        bootstrap_samples=config.bootstrap_samples,
        seed=config.seed,
    )
    under_payload = {
        "covariate": config.fairness_covariate,
        "bins": [
            {**entry, "range": list(under_binning.edges[entry["bin"]])}
            for entry in rates
        ],
        "bootstrap_samples": config.bootstrap_samples,
        "seed": config.seed,
    }
    _write_json(out / "underprediction.json", under_payload)
    _emit({
        "written": ["fairness.csv", "underprediction.json"],
        "bins": binning.n_bins,
        "underprediction_bins": under_binning.n_bins,
    })
    return 0


def cmd_simulate(config: RunConfig) -> int:
    rates = validate_rates(RateSet(**{
        k: float(v) for k, v in sorted(config.sim_rates.items())
    }))
    seeded = {comp: 0.0 for comp in COMPARTMENTS if comp != "S"}
    for comp, value in config.sim_initial.items():
        seeded[comp] = float(value)
    drawn = sum(
        seeded[c] for c in ("E", "I_doc", "I_undoc", "R_doc", "R_undoc", "H", "D")
    )
    population = config.sim_population
    state = CompartmentState(
        S=population - drawn, N=population, **seeded
    ).validated()
    trajectory = simulate(state, [rates] * config.sim_days)
    out = _out_dir(config)
    with open(out / "simulate.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(trajectory_to_csv(trajectory))
    _emit({
        "written": ["simulate.csv"],
        "days": config.sim_days,
        "reproduction_number": {
            "closed_form": effective_reproduction_number(rates),
            "ngm": ngm_spectral_radius(rates),
        },
    })
    return 0


def cmd_gradcheck(config: RunConfig) -> int:
    panel, _report = config.build_panel()
    settings = config.train_settings()
    assembly = assemble_model(panel, settings)
    spec = assembly.spec
    window = (assembly.train_start, assembly.train_end - settings.horizon - 1)
    policy = TeacherForcingPolicy(settings.phase1_lambda)

    def loss_fn(params):
        results = rollout_all_locations(spec, params, panel, panel, window, policy)
        encoders = spec.bind_encoders(params)
        heads = spec.bind_heads(params)
        return total_loss(
            predictions_of(results),
            rates_of(results),
            encoders.values(),
            panel,
            settings.loss,
            window,
            settings.horizon,
            heads=heads,
        )

    report = gradient_check(
        assembly.store,
        loss_fn,
        h=config.gradcheck_step,
        rel_tol=config.gradcheck_rel_tol,
        abs_floor=config.gradcheck_abs_floor,
    )
    out = _out_dir(config)
    _write_json(out / "gradcheck.json", report.to_dict())
    _emit({
        "written": ["gradcheck.json"],
        "passed": report.passed,
        "parameters": len(report.entries),
        "max_rel_error": report.max_rel_error,
    })
    if not report.passed:
        worst = max(report.failures(), key=lambda e: e["rel_error"])
        raise NumericalError(
            f"gradient check failed for {len(report.failures())} parameters; "
            f"worst {worst['name']} at relative error {worst['rel_error']:.3g} "
            f"(see gradcheck.json)"
        )
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "fairness": cmd_fairness,
    "simulate": cmd_simulate,
    "gradcheck": cmd_gradcheck,
}


def _parse_quantiles(text):
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated quantiles, got {text!r}"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one quantile")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covseir",
        description="Covariate-driven extended SEIR forecasting pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--horizon", type=int, default=None,
                       help="override the forecast horizon (days)")
        p.add_argument("--level", choices=("state", "county"), default=None,
                       help="override the geographic level")
        p.add_argument("--seed", type=int, default=None,
                       help="override the run seed")
        p.add_argument("--threads", type=int, default=None,
                       help="parallel workers for hyperparameter trials")
        p.add_argument("--quantiles", type=_parse_quantiles, default=None,
                       help="train quantile heads, e.g. 0.1,0.5,0.9")
        p.add_argument("--strict-printed-losses", action="store_true",
                       dest="strict_printed_losses",
                       help="use the strict printed loss variants")
        p.add_argument("--out", default=None,
                       help="override the output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.from_file(args.config, overrides=args)
        return _COMMANDS[args.command](config)
    except CovseirError as exc:
        print(
            json.dumps(
                {"error": {"type": type(exc).__name__, "message": str(exc)}},
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
