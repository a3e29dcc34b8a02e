"""Experiment orchestration: seeded trials, sweeps, and result emission.

A trial is a pure function of its derived seed, so trials may run
concurrently and are always aggregated in trial order; identical configs
produce identical result files regardless of worker count.

Per-trial seed streams, derived from the trial seed:
index 0 dataset, 1 mask, 2 loop noise, 3 cross-validation folds.
"""

from __future__ import annotations

import csv
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ParameterError
from .physical import (
    PhysicalParams,
    bifurcation_scan,
    extract_states,
    sample_and_hold,
    simulate_loop,
    write_scan_csv,
)
from .readout import (
    MetricReport,
    RegressionConfig,
    cross_validate,
    nmse,
    predict,
    quantize_symbols,
    ser,
    train_linear,
    wer,
    winner_takes_all,
)
from .reservoir import MaskSpec, ReservoirParams, generate_mask, run_discrete
from .seeds import derive_seed
from .tasks import (
    CHANNEL_SYMBOLS,
    SEGMENT_PERIOD,
    ChannelConfig,
    gen_channel,
    gen_narma10,
    gen_sine_square,
    load_features,
    memory_capacity,
)

KNOWN_TASKS = ("narma10", "channel-eq", "sine-square", "memory", "digits", "bifurcation")
KNOWN_BACKENDS = ("discrete", "continuous")

# Friendly sweep-axis names for the usual tuning knobs.
SWEEP_ALIASES = {
    "alpha": "reservoir.feedback_gain",
    "feedback_gain": "reservoir.feedback_gain",
    "beta": "reservoir.input_gain",
    "input_gain": "reservoir.input_gain",
    "k": "reservoir.desync_k",
    "desync_k": "reservoir.desync_k",
    "N": "reservoir.n_nodes",
    "n_nodes": "reservoir.n_nodes",
    "snr": "task_params.snr_db",
    "snr_db": "task_params.snr_db",
    "lambda": "regression.ridge_lambda",
    "ridge_lambda": "regression.ridge_lambda",
}

RESULT_COLUMNS = (
    "task",
    "backend",
    "N",
    "k",
    "alpha",
    "beta",
    "lambda",
    "seed",
    "metric_name",
    "metric_value",
    "overrides",
)


@dataclass
class ExperimentConfig:
    task: str
    backend: str = "discrete"
    task_params: dict = field(default_factory=dict)
    reservoir: dict = field(default_factory=dict)
    mask: dict = field(default_factory=dict)
    regression: dict = field(default_factory=dict)
    physical: dict = field(default_factory=dict)
    trials: int = 1
    master_seed: int = 0
    output: str | None = None
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in KNOWN_TASKS:
            raise ParameterError(f"unknown task {self.task!r}; expected one of {KNOWN_TASKS}")
        if self.backend not in KNOWN_BACKENDS:
            raise ParameterError(f"unknown backend {self.backend!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "backend": self.backend,
            "task_params": dict(self.task_params),
            "reservoir": dict(self.reservoir),
            "mask": dict(self.mask),
            "regression": dict(self.regression),
            "physical": dict(self.physical),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "output": self.output,
            "sweep": dict(self.sweep),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ParameterError(f"config file {path} did not parse to a mapping")
        return cls.from_dict(data)

    def to_file(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)


@dataclass
class ResultReport:
    config_echo: dict
    metric_name: str
    trial_seeds: list
    trial_values: list
    mean: float
    std: float
    runtime_seconds: float
    regenerations: int = 0
    overrides: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)


def trial_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, trial)


def _reservoir_params(config: ExperimentConfig) -> ReservoirParams:
    return ReservoirParams(**config.reservoir)


def _mask_spec(config: ExperimentConfig, n_inputs: int, seed: int) -> MaskSpec:
    fields = dict(config.mask)
    fields.setdefault("distribution", "uniform")
    return MaskSpec(
        n_nodes=config.reservoir["n_nodes"], n_inputs=n_inputs, seed=seed, **fields
    )


def _regression_config(config: ExperimentConfig, **overrides) -> RegressionConfig:
    fields = dict(config.regression)
    fields.update(overrides)
    return RegressionConfig(**fields)


def _physical_params(config: ExperimentConfig, noise_seed: int) -> PhysicalParams:
    return PhysicalParams(noise_seed=noise_seed, **config.reservoir, **config.physical)


def compute_states(config: ExperimentConfig, mask, inputs, noise_seed: int):
    """Run the configured backend over an input sequence."""
    if config.backend == "discrete":
        return run_discrete(_reservoir_params(config), mask, inputs)
    params = _physical_params(config, noise_seed)
    drive = sample_and_hold(
        inputs, mask, params.theta_samples, params.n_nodes, rate=params.sample_rate
    )
    loop = simulate_loop(params, drive)
    return extract_states(loop, params.theta_samples, params.n_nodes)


def _train_eval_split(config: ExperimentConfig, defaults: tuple[int, int]):
    params = config.task_params
    return (
        int(params.get("train_steps", defaults[0])),
        int(params.get("test_steps", defaults[1])),
    )


def _eval_regression(states, targets, config, washout, n_train, n_test, metric):
    """Train on [0, washout+n_train), evaluate `metric` on the next n_test."""
    x = states.states
    train_stop = washout + n_train
    reg = _regression_config(config, washout=washout)
    w = train_linear(x[:, :train_stop], targets[:train_stop], reg)
    estimate = predict(x[:, train_stop : train_stop + n_test], w)
    truth = targets[train_stop : train_stop + n_test]
    return metric(truth, estimate)


def run_trial(config: ExperimentConfig, trial: int) -> dict:
    """One seeded trial; returns metric, seed, and bookkeeping."""
    seed = trial_seed(config.master_seed, trial)
    data_seed = derive_seed(seed, 0)
    mask_seed = derive_seed(seed, 1)
    noise_seed = derive_seed(seed, 2)
    cv_seed = derive_seed(seed, 3)
    washout = int(config.regression.get("washout", 50))
    regenerations = 0

    if config.task == "narma10":
        n_train, n_test = _train_eval_split(config, (1000, 1000))
        dataset = gen_narma10(washout + n_train + n_test, data_seed)
        regenerations = dataset.meta["regenerations"]
        mask = generate_mask(_mask_spec(config, 1, mask_seed))
        states = compute_states(config, mask, dataset.inputs, noise_seed)
        value = _eval_regression(
            states, dataset.targets, config, washout, n_train, n_test, nmse
        )
        report = MetricReport(kind="NMSE", value=value, sample_count=n_test)

    elif config.task == "channel-eq":
        n_train, n_test = _train_eval_split(config, (3000, 6000))
        channel = ChannelConfig(
            snr_db=float(config.task_params.get("snr_db", 28.0)),
            length=washout + n_train + n_test,
            seed=data_seed,
        )
        dataset = gen_channel(channel)
        mask = generate_mask(_mask_spec(config, 1, mask_seed))
        states = compute_states(config, mask, dataset.inputs, noise_seed)

        def symbol_error(truth, estimate):
            return ser(truth, quantize_symbols(estimate, CHANNEL_SYMBOLS))

        value = _eval_regression(
            states, dataset.targets, config, washout, n_train, n_test, symbol_error
        )
        report = MetricReport(kind="SER", value=value, sample_count=n_test)

    elif config.task == "sine-square":
        params = config.task_params
        train_segments = int(params.get("train_segments", 500))
        test_segments = int(params.get("test_segments", 1000))
        washout_segments = -(-washout // SEGMENT_PERIOD)
        total = washout_segments + train_segments + test_segments
        dataset = gen_sine_square(total, data_seed)
        mask = generate_mask(_mask_spec(config, 1, mask_seed))
        states = compute_states(config, mask, dataset.inputs, noise_seed)
        value = _eval_regression(
            states,
            dataset.targets,
            config,
            washout_segments * SEGMENT_PERIOD,
            train_segments * SEGMENT_PERIOD,
            test_segments * SEGMENT_PERIOD,
            nmse,
        )
        report = MetricReport(
            kind="NMSE", value=value, sample_count=test_segments * SEGMENT_PERIOD
        )

    elif config.task == "memory":
        params = config.task_params
        mask = generate_mask(_mask_spec(config, 1, mask_seed))
        curve = memory_capacity(
            lambda inputs: compute_states(config, mask, inputs, noise_seed),
            max_delay=int(params.get("max_delay", 25)),
            train_steps=int(params.get("train_steps", 1000)),
            test_steps=int(params.get("test_steps", 1000)),
            washout=max(washout, int(params.get("max_delay", 25))),
            seed=data_seed,
            ridge_lambda=float(config.regression.get("ridge_lambda", 0.0)),
        )
        report = MetricReport(
            kind="MC", value=curve.total, sample_count=len(curve.delays)
        )

    elif config.task == "digits":
        report = _run_digits_trial(config, data_seed, mask_seed, noise_seed, cv_seed)

    else:
        raise ParameterError(f"task {config.task!r} is not runnable as an experiment")

    return {
        "trial": trial,
        "seed": seed,
        "metric": report,
        "regenerations": regenerations,
    }


def _run_digits_trial(config, data_seed, mask_seed, noise_seed, cv_seed) -> MetricReport:
    """Multi-input classification: per-utterance states, per-class readouts,
    time-averaged winner-takes-all, k-fold cross-validation over utterances."""
    params = config.task_params
    dataset = load_features(params["features_path"])
    inputs = dataset.inputs
    noise_std = float(params.get("feature_noise_std", 0.0))
    if noise_std > 0:
        rng = np.random.default_rng(data_seed)
        inputs = inputs + rng.normal(0.0, noise_std, size=inputs.shape)

    mask = generate_mask(_mask_spec(config, inputs.shape[0], mask_seed))
    # Utterances are independent recordings: restart the reservoir for each.
    blocks = []
    for start, stop in dataset.segments:
        states = compute_states(
            config, mask, inputs[:, start:stop], derive_seed(noise_seed, start)
        )
        blocks.append(states.states)
    all_states = np.hstack(blocks)

    classes = dataset.meta["classes"]
    class_index = {c: i for i, c in enumerate(classes)}
    reg = _regression_config(config, washout=0)
    folds = int(params.get("folds", 5))

    def evaluate(train_items, test_items):
        train_cols = np.concatenate(
            [np.arange(*dataset.segments[i]) for i in train_items]
        )
        x_train = all_states[:, train_cols]
        readouts = [
            train_linear(x_train, dataset.targets[c, train_cols], reg)
            for c in range(len(classes))
        ]
        test_cols = np.concatenate(
            [np.arange(*dataset.segments[i]) for i in test_items]
        )
        scores = np.vstack([predict(all_states[:, test_cols], w) for w in readouts])
        local_segments = []
        offset = 0
        for i in test_items:
            start, stop = dataset.segments[i]
            local_segments.append((offset, offset + (stop - start)))
            offset += stop - start
        decided = winner_takes_all(scores, local_segments)
        truth = np.array([class_index[dataset.labels[i]] for i in test_items])
        return MetricReport(
            kind="WER", value=wer(decided, truth), sample_count=len(test_items)
        )

    result = cross_validate(range(len(dataset.segments)), folds, evaluate, seed=cv_seed)
    return result.mean


def run_experiment(
    config: ExperimentConfig, workers: int = 1, overrides: dict | None = None
) -> ResultReport:
    """Run all trials of a configuration and aggregate mean and spread."""
    start = time.perf_counter()
    trial_ids = list(range(config.trials))
    errors = []
    results = []

    def safe_trial(t):
        try:
            return run_trial(config, t)
        except Exception as exc:  # record and continue with remaining trials
            return {"trial": t, "error": f"trial {t}: {type(exc).__name__}: {exc}"}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(safe_trial, trial_ids))
    else:
        outcomes = [safe_trial(t) for t in trial_ids]

    for outcome in outcomes:  # already in trial order
        if "error" in outcome:
            errors.append(outcome["error"])
        else:
            results.append(outcome)

    values = [r["metric"].value for r in results]
    mean = float(np.mean(values)) if values else float("nan")
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    metric_name = results[0]["metric"].kind if results else "none"
    return ResultReport(
        config_echo=config.to_dict(),
        metric_name=metric_name,
        trial_seeds=[r["seed"] for r in results],
        trial_values=values,
        mean=mean,
        std=std,
        runtime_seconds=time.perf_counter() - start,
        regenerations=sum(r["regenerations"] for r in results),
        overrides=dict(overrides or {}),
        errors=errors,
    )


def _apply_override(data: dict, path: str, value):
    section, _, key = path.partition(".")
    if not key or section not in data or not isinstance(data[section], dict):
        raise ParameterError(f"cannot apply sweep override {path!r}")
    data[section] = dict(data[section])
    data[section][key] = value


def sweep(config: ExperimentConfig, workers: int = 1) -> list[ResultReport]:
    """Run the config once per point of its parameter grid."""
    if not config.sweep:
        return [run_experiment(config, workers=workers)]
    axes = []
    for name in sorted(config.sweep):
        path = SWEEP_ALIASES.get(name, name)
        values = config.sweep[name]
        if not isinstance(values, (list, tuple)) or not values:
            raise ParameterError(f"sweep axis {name!r} must be a non-empty list")
        axes.append((path, list(values)))

    reports = []
    for point in itertools.product(*(values for _, values in axes)):
        data = config.to_dict()
        data["sweep"] = {}
        overrides = {}
        for (path, _), value in zip(axes, point):
            _apply_override(data, path, value)
            overrides[path] = value
        point_config = ExperimentConfig.from_dict(data)
        reports.append(run_experiment(point_config, workers=workers, overrides=overrides))
    return reports


def best_points(reports: list[ResultReport]) -> dict:
    """Best report per metric (higher is better only for capacity)."""
    best = {}
    for report in reports:
        if not report.trial_values:
            continue
        name = report.metric_name
        current = best.get(name)
        higher_better = name == "MC"
        if (
            current is None
            or (higher_better and report.mean > current.mean)
            or (not higher_better and report.mean < current.mean)
        ):
            best[name] = report
    return best


def _format_overrides(overrides: dict) -> str:
    return ";".join(f"{k}={overrides[k]!r}" for k in sorted(overrides))


def _row_fields(report: ResultReport) -> dict:
    echo = report.config_echo
    return {
        "task": echo["task"],
        "backend": echo["backend"],
        "N": echo["reservoir"].get("n_nodes", ""),
        "k": echo["reservoir"].get("desync_k", ""),
        "alpha": repr(echo["reservoir"].get("feedback_gain", "")),
        "beta": repr(echo["reservoir"].get("input_gain", "")),
        "lambda": repr(echo["regression"].get("ridge_lambda", 0.0)),
        "overrides": _format_overrides(report.overrides),
    }


def emit_results(reports, out_dir, base_config: ExperimentConfig | None = None) -> dict:
    """Write results.csv (one row per trial), summary.csv, and a config echo.

    Floats are written with repr so re-parsing reproduces them exactly.
    Returns the paths written.
    """
    if isinstance(reports, ResultReport):
        reports = [reports]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    results_path = out / "results.csv"
    with open(results_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        for report in reports:
            fields = _row_fields(report)
            for seed, value in zip(report.trial_seeds, report.trial_values):
                writer.writerow(
                    {
                        **fields,
                        "seed": seed,
                        "metric_name": report.metric_name,
                        "metric_value": repr(value),
                    }
                )

    summary_path = out / "summary.csv"
    summary_columns = (
        "task", "backend", "N", "k", "alpha", "beta", "lambda",
        "metric_name", "mean", "std", "n_trials", "failed_trials", "overrides",
    )
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=summary_columns)
        writer.writeheader()
        for report in reports:
            fields = _row_fields(report)
            writer.writerow(
                {
                    **fields,
                    "metric_name": report.metric_name,
                    "mean": repr(report.mean),
                    "std": repr(report.std),
                    "n_trials": len(report.trial_values),
                    "failed_trials": len(report.errors),
                }
            )

    config_path = out / "config.yaml"
    if base_config is not None:
        base_config.to_file(config_path)
    else:
        with open(config_path, "w") as fh:
            yaml.safe_dump(reports[0].config_echo, fh, sort_keys=True)

    return {"results": results_path, "summary": summary_path, "config": config_path}


def parse_results_csv(path) -> list[dict]:
    """Read back an emitted results.csv; metric_value returns as float."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            row["metric_value"] = float(row["metric_value"])
            row["seed"] = int(row["seed"])
            rows.append(row)
    return rows


def run_bifurcation(config: ExperimentConfig, out_dir=None):
    """Gain scan of the undriven loop, optionally written as CSV."""
    params = config.task_params
    gains = params.get("feedback_gains")
    if gains is None:
        start = float(params.get("gain_start", 0.1))
        stop = float(params.get("gain_stop", 4.2))
        step = float(params.get("gain_step", 0.05))
        gains = np.arange(start, stop + step / 2, step)
    reservoir = dict(config.reservoir)
    reservoir["input_gain"] = 0.0
    physical = PhysicalParams(
        noise_seed=config.master_seed, **reservoir, **config.physical
    )
    transient = params.get("transient_discard")
    results = bifurcation_scan(
        physical,
        gains,
        steps_per_alpha=int(params.get("steps_per_alpha", 2000)),
        transient_discard=int(transient) if transient is not None else None,
        n_bins=int(params.get("n_bins", 200)),
        init_scale=float(params.get("init_scale", 1e-2)),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_scan_csv(results, out / "bifurcation.csv")
    return results
