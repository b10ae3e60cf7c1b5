"""Config-driven experiments: data, grid search, fitting, metrics and reports."""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from nimo.baselines import (
    LassoFit,
    fit_mlp_baseline,
    lasso_null_penalty,
    lasso_path,
    logistic_newton,
    ridge_regression,
)
from nimo.config import Config
from nimo.data import (
    DEFAULT_COUNTS,
    Dataset,
    GeneratorSpec,
    Setting,
    Split,
    fraction_counts,
    generate,
    load_csv,
    setting_effects,
    split,
)
from nimo.errors import ConfigError, ExperimentError, UnknownTableRow
from nimo.mlp import NetworkConfig, OutputRange, first_layer_norms
from nimo.model import (
    ZERO_THRESHOLD,
    FittedModel,
    Task,
    TraceRecord,
    decision_function,
    effective_coefficients,
    predict,
)
from nimo.numerics import STREAM_CELLS, SeededRng, logistic_nll
from nimo.optimize import PenaltyState, TrainConfig, TrainingData, train
from nimo.services.reference_tables import ReferenceQuery, ReferenceTable, lookup


_logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("nimo", "lasso", "logistic", "mlp", "ridge")
REGRESSION_METHODS = {"lasso", "ridge"}
LOGISTIC_METHODS = {"logistic"}
CSV_LEARNING_RATE = 5e-3
CURVE_POINTS = 41

TABLE_ROWS = {
    Setting.REG_VANILLA: "vanilla",
    Setting.REG_TOY: "toy",
    Setting.REG1: "setting1",
    Setting.REG2: "setting2",
    Setting.REG3: "setting3",
    Setting.CLS1: "setting1",
    Setting.CLS2: "setting2",
    Setting.CLS3: "setting3",
}
TABLE_COLUMNS = {"nimo": "nimo", "lasso": "lasso", "logistic": "logistic", "mlp": "nn"}


def _logspace(start: float, stop: float, num: int) -> tuple[float, ...]:
    return tuple(float(v) for v in np.logspace(start, stop, num))


@dataclass(frozen=True)
class ExperimentConfig:
    setting: Optional[Setting] = Setting.REG_TOY
    csv_path: Optional[Path] = None
    target_column: Optional[str] = None
    csv_task: Task = Task.REGRESSION
    methods: tuple[str, ...] = ("nimo", "lasso")
    n: int = sum(DEFAULT_COUNTS)
    counts: tuple[int, int, int] = DEFAULT_COUNTS
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    noise: float = 0.1
    lam_grid: tuple[float, ...] = _logspace(-3, 1, 7)
    mu_grid: tuple[float, ...] = _logspace(-4, 0, 5)
    delta: float = 1.0
    lam_group: float = 0.1
    lasso_fractions: tuple[float, ...] = _logspace(-4, 0, 13)
    logistic_l1_grid: tuple[float, ...] = (0.0, 0.1, 0.3, 1.0, 3.0, 10.0)
    logistic_l2: float = 1e-4
    ridge_grid: tuple[float, ...] = _logspace(-3, 3, 7)
    hidden1: int = 32
    hidden2: int = 32
    noise_scale: float = 0.2
    train: TrainConfig = TrainConfig()
    repeats: int = 5
    seed: int = 0
    output_dir: Path = Path("results")
    workers: int = 1
    trace: bool = False

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if (self.setting is None) == (self.csv_path is None):
            raise ConfigError("give exactly one of a synthetic setting or a CSV path")
        if self.csv_path is not None and not self.target_column:
            raise ConfigError("a CSV dataset needs a target column")
        for name in ("lam_grid", "mu_grid", "lasso_fractions", "logistic_l1_grid", "ridge_grid"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if self.task is Task.LOGISTIC and REGRESSION_METHODS.intersection(self.methods):
            raise ConfigError("lasso and ridge apply to regression tasks only")
        if self.task is Task.REGRESSION and LOGISTIC_METHODS.intersection(self.methods):
            raise ConfigError("logistic applies to classification tasks only")
        if self.setting is not None and self.counts[2] < 1:
            raise ConfigError("the split needs at least one test row")
        if self.setting is not None and sum(self.counts) > self.n:
            raise ConfigError(f"counts {list(self.counts)} need {sum(self.counts)} rows but n is {self.n}")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta must lie in (0, 1], got {self.delta}")
        if min(self.lam_grid) <= 0:
            raise ConfigError("lam_grid values must be positive")
        if min(self.mu_grid) < 0:
            raise ConfigError("mu_grid values must be non-negative")
        if self.lam_group < 0:
            raise ConfigError("lam_group must be non-negative")
        if self.workers == 0:
            raise ConfigError("workers must be non-zero")

    @property
    def task(self) -> Task:
        if self.setting is not None:
            return GeneratorSpec(self.setting).task
        return self.csv_task

    @property
    def source(self) -> str:
        return self.setting.value if self.setting is not None else str(self.csv_path)

    def to_dict(self) -> dict[str, object]:
        """Everything that affects results; the output directory is left out."""
        return {
            "source": self.source,
            "target_column": self.target_column,
            "task": self.task.value,
            "methods": list(self.methods),
            "n": self.n,
            "counts": list(self.counts),
            "fractions": list(self.fractions),
            "noise": self.noise,
            "lam_grid": list(self.lam_grid),
            "mu_grid": list(self.mu_grid),
            "delta": self.delta,
            "lam_group": self.lam_group,
            "lasso_fractions": list(self.lasso_fractions),
            "logistic_l1_grid": list(self.logistic_l1_grid),
            "logistic_l2": self.logistic_l2,
            "ridge_grid": list(self.ridge_grid),
            "network": {"hidden1": self.hidden1, "hidden2": self.hidden2, "noise_scale": self.noise_scale},
            "train": self.train.to_dict(),
            "repeats": self.repeats,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> "ExperimentConfig":
        """Build a config from a JSON document; environment values fill the gaps."""
        known = {f.name for f in fields(cls)} | {"csv", "network", "task"}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")

        values = {k: v for k, v in payload.items() if k not in {"csv", "network", "task", "train"}}
        values.setdefault("seed", Config.SEED)
        values.setdefault("output_dir", Config.OUTPUT_DIR)
        values.setdefault("workers", Config.WORKERS)
        values.setdefault("trace", Config.TRACE)
        values.update(payload.get("network", {}))

        csv_path = payload.get("csv", payload.get("csv_path"))
        if csv_path is not None:
            values["csv_path"] = Path(csv_path)
            values["setting"] = payload.get("setting")
            values["csv_task"] = Task(payload.get("task", payload.get("csv_task", "regression")))
        if values.get("setting") is not None:
            values["setting"] = Setting.parse(str(values["setting"]))
        values["output_dir"] = Path(values["output_dir"])

        train_payload = dict(payload.get("train", {}))
        if csv_path is not None:
            train_payload.setdefault("learning_rate", CSV_LEARNING_RATE)
        try:
            values["train"] = TrainConfig.from_dict(train_payload)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid train section: {err}") from err

        for name in ("methods", "counts", "fractions", "lam_grid", "mu_grid",
                     "lasso_fractions", "logistic_l1_grid", "ridge_grid"):
            if name in values:
                values[name] = tuple(values[name])
        try:
            return cls(**values)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path} is not valid JSON: {err}") from err
        return cls.from_dict(payload)


@dataclass(frozen=True)
class FeatureSparsity:
    feature: str
    abs_coefficient: float
    is_zero: bool
    group_norm: float


@dataclass(frozen=True)
class EffectPoint:
    """Learned coefficient of `coefficient` as `driver` moves, others at their means."""

    coefficient: str
    driver: str
    x: float
    learned: float
    truth: Optional[float] = None


@dataclass
class RepetitionResult:
    method: str
    repetition: int
    metric: float
    hyperparameters: dict[str, float]
    y_true: np.ndarray
    prediction: np.ndarray
    intercept: Optional[float] = None
    coefficients: Optional[np.ndarray] = None
    raw_coefficients: Optional[np.ndarray] = None
    sparsity: list[FeatureSparsity] = field(default_factory=list)
    effects: list[EffectPoint] = field(default_factory=list)
    history: tuple[TraceRecord, ...] = ()
    model: Optional[FittedModel] = None
    flags: dict[str, bool] = field(default_factory=dict)

    def to_dict(self, names: Sequence[str], task: Task) -> dict[str, object]:
        payload: dict[str, object] = {
            "repetition": self.repetition,
            "metric": self.metric,
            "hyperparameters": self.hyperparameters,
            "flags": self.flags,
        }
        if self.coefficients is not None:
            payload["intercept"] = self.intercept
            payload["coefficients"] = dict(zip(names, map(float, self.coefficients)))
            if self.raw_coefficients is not None:
                payload["raw_coefficients"] = dict(zip(names, map(float, self.raw_coefficients)))
            payload["support"] = [
                name for name, value in zip(names, self.coefficients) if abs(value) >= ZERO_THRESHOLD
            ]
            if task is Task.LOGISTIC:
                payload["normalized_coefficients"] = dict(
                    zip(names, map(float, normalize_coefficients(self.coefficients)))
                )
        if self.sparsity:
            payload["first_layer_norms"] = {s.feature: s.group_norm for s in self.sparsity}
        return payload


@dataclass
class MethodSummary:
    method: str
    metric: str
    mean: float
    std: float
    values: list[float]
    repetitions: list[dict[str, object]]
    reference: Optional[float] = None
    ratio: Optional[float] = None


@dataclass
class MetricsReport:
    source: str
    setting: Optional[str]
    task: str
    metric: str
    feature_names: list[str]
    truth: Optional[list[float]]
    methods: dict[str, MethodSummary]
    config: dict[str, object]
    schema_version: int = SCHEMA_VERSION
    reference_table: Optional[str] = None
    reference_row: Optional[dict[str, float]] = None
    citation: Optional[str] = None

    def to_dict(self) -> dict[str, object]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def normalize_coefficients(coefficients: np.ndarray) -> np.ndarray:
    """Coefficients divided by their largest magnitude (zeros stay zero)."""
    largest = float(np.max(np.abs(coefficients), initial=0.0))
    return coefficients / largest if largest > 0 else np.zeros_like(coefficients)


def report_sparsity(model: FittedModel, threshold: float = ZERO_THRESHOLD) -> list[FeatureSparsity]:
    norms = first_layer_norms(model.params)
    return [
        FeatureSparsity(name, float(abs(value)), bool(abs(value) < threshold), float(norm))
        for name, value, norm in zip(model.names(), model.coefficients, norms)
    ]


def effect_curves(
    model: FittedModel,
    X_reference: np.ndarray,
    setting: Optional[Setting] = None,
    points: int = CURVE_POINTS,
) -> list[EffectPoint]:
    """Raw-scale effective coefficients β_j(1 + g) along a grid over each other feature.

    The grid spans the observed range of ``X_reference``; every other
    feature sits at its mean. With a synthetic ``setting`` the true
    coefficient at the same points is attached.
    """
    X_reference = np.asarray(X_reference, dtype=np.float64)
    names = model.names()
    support = model.support()
    base = X_reference.mean(axis=0)
    curves = []
    for k, driver in enumerate(names):
        coefficients = [j for j in support if j != k]
        if not coefficients:
            continue
        grid = np.linspace(X_reference[:, k].min(), X_reference[:, k].max(), points)
        X = np.tile(base, (points, 1))
        X[:, k] = grid
        learned = effective_coefficients(model, X).values / model.stats.stddevs
        truth = setting_effects(setting, X) if setting is not None else None
        for j in coefficients:
            for row, x in enumerate(grid):
                curves.append(EffectPoint(
                    names[j], driver, float(x), float(learned[row, j]),
                    None if truth is None else float(truth[row, j]),
                ))
    return curves


def compute_metric(task: Task, y_true: np.ndarray, prediction: np.ndarray) -> float:
    """Test MSE for regression, accuracy at 0.5 for probabilities."""
    if task is Task.LOGISTIC:
        return float(np.mean((prediction >= 0.5) == (y_true == 1.0)))
    return float(np.mean((y_true - prediction) ** 2))


def _metric_name(task: Task) -> str:
    return "accuracy" if task is Task.LOGISTIC else "mse"


# ---------------------------------------------------------------------------
# per-method fitting


def _selection_rows(dataset: Dataset) -> Split:
    if dataset.count(Split.VAL) > 0:
        return Split.VAL
    _logger.warning("no validation rows: selecting hyperparameters on training rows")
    return Split.TRAIN


def _selection_loss(task: Task, y: np.ndarray, eta: np.ndarray) -> float:
    if task is Task.LOGISTIC:
        return logistic_nll(y, eta) / len(y)
    return float(np.mean((y - eta) ** 2))


def _seed(config: ExperimentConfig, repetition: int) -> int:
    return config.seed + repetition


def _train_config(config: ExperimentConfig, repetition: int) -> TrainConfig:
    return replace(config.train, task=config.task, seed=_seed(config, repetition), trace_path=None)


def cell_seed(seed: int, cell: int) -> int:
    """Training seed for one grid cell, so cells draw their own init and noise."""
    return int(SeededRng(seed, STREAM_CELLS).derive(cell).generator.integers(2**31 - 1))


def _nimo_cell(
    data: TrainingData,
    cfg: NetworkConfig,
    train_cfg: TrainConfig,
    lam: float,
    mu: float,
    delta: float,
    lam_group: float,
) -> FittedModel:
    penalty = PenaltyState.initial(cfg.input_dim, lam=lam, mu=mu, delta=delta, lam_group=lam_group)
    return train(data, cfg, train_cfg, penalty)


def _fit_nimo(config: ExperimentConfig, dataset: Dataset, repetition: int) -> RepetitionResult:
    output_range = OutputRange.CLASSIFICATION if config.task is Task.LOGISTIC else OutputRange.REGRESSION
    cfg = NetworkConfig(dataset.d, config.hidden1, config.hidden2, config.noise_scale, output_range)
    train_cfg = _train_config(config, repetition)
    data = dataset.training_data()
    cells = [(lam, mu) for lam in config.lam_grid for mu in config.mu_grid]

    models = Parallel(n_jobs=config.workers)(
        delayed(_nimo_cell)(
            data, cfg, replace(train_cfg, seed=cell_seed(train_cfg.seed, cell)),
            lam, mu, config.delta, config.lam_group,
        )
        for cell, (lam, mu) in enumerate(cells)
    )

    X_sel, y_sel = dataset.rows(_selection_rows(dataset), standardized=False)
    losses = [_selection_loss(config.task, y_sel, decision_function(m, X_sel)) for m in models]
    best = int(np.argmin(losses))
    model = models[best]
    lam, mu = cells[best]
    _logger.info("nimo repetition %d: best cell lam=%g mu=%g", repetition, lam, mu)

    X_test, y_test = dataset.rows(Split.TEST, standardized=False)
    prediction = predict(model, X_test)
    return RepetitionResult(
        method="nimo",
        repetition=repetition,
        metric=compute_metric(config.task, y_test, prediction),
        hyperparameters={"lam": lam, "mu": mu, "selection_loss": losses[best]},
        y_true=y_test,
        prediction=prediction,
        intercept=model.intercept,
        coefficients=model.coefficients,
        raw_coefficients=model.raw_coefficients(),
        sparsity=report_sparsity(model),
        effects=effect_curves(model, dataset.rows(Split.TRAIN, standardized=False)[0], config.setting),
        history=model.history,
        model=model,
        flags={"degenerate": model.degenerate},
    )


def _fit_lasso(config: ExperimentConfig, dataset: Dataset, repetition: int) -> RepetitionResult:
    X, y = dataset.rows(Split.TRAIN)
    null = lasso_null_penalty(X, y)
    penalties = [fraction * null for fraction in config.lasso_fractions]
    fits = lasso_path(X, y, penalties)
    X_sel, y_sel = dataset.rows(_selection_rows(dataset))
    losses = [_selection_loss(Task.REGRESSION, y_sel, fit.predict(X_sel)) for fit in fits]
    best = int(np.argmin(losses))
    return _linear_result("lasso", config, dataset, repetition, fits[best], {"penalty": penalties[best]})


def _fit_ridge(config: ExperimentConfig, dataset: Dataset, repetition: int) -> RepetitionResult:
    X, y = dataset.rows(Split.TRAIN)
    fits = [ridge_regression(X, y, lam) for lam in config.ridge_grid]
    X_sel, y_sel = dataset.rows(_selection_rows(dataset))
    losses = [_selection_loss(Task.REGRESSION, y_sel, fit.predict(X_sel)) for fit in fits]
    best = int(np.argmin(losses))
    return _linear_result("ridge", config, dataset, repetition, fits[best], {"lam": config.ridge_grid[best]})


def _fit_logistic(config: ExperimentConfig, dataset: Dataset, repetition: int) -> RepetitionResult:
    X, y = dataset.rows(Split.TRAIN)
    fits = [logistic_newton(X, y, l2=config.logistic_l2, l1=l1) for l1 in config.logistic_l1_grid]
    X_sel, y_sel = dataset.rows(_selection_rows(dataset))
    losses = [_selection_loss(Task.LOGISTIC, y_sel, fit.decision_function(X_sel)) for fit in fits]
    best = int(np.argmin(losses))
    hyper = {"l1": config.logistic_l1_grid[best], "l2": config.logistic_l2}
    return _linear_result("logistic", config, dataset, repetition, fits[best], hyper)


def _linear_result(
    method: str,
    config: ExperimentConfig,
    dataset: Dataset,
    repetition: int,
    fit: LassoFit,
    hyperparameters: dict[str, float],
) -> RepetitionResult:
    X_test, y_test = dataset.rows(Split.TEST)
    prediction = fit.predict(X_test, config.task)
    return RepetitionResult(
        method=method,
        repetition=repetition,
        metric=compute_metric(config.task, y_test, prediction),
        hyperparameters={k: float(v) for k, v in hyperparameters.items()},
        y_true=y_test,
        prediction=prediction,
        intercept=fit.intercept,
        coefficients=fit.coefficients,
        raw_coefficients=fit.coefficients / dataset.stats.stddevs,
        flags={"separable": fit.separable},
    )


def _fit_mlp(config: ExperimentConfig, dataset: Dataset, repetition: int) -> RepetitionResult:
    cfg = NetworkConfig(dataset.d, config.hidden1, config.hidden2, 0.0)
    fit = fit_mlp_baseline(dataset.training_data(), cfg, _train_config(config, repetition))
    X_test, y_test = dataset.rows(Split.TEST, standardized=False)
    prediction = fit.predict(X_test)
    return RepetitionResult(
        method="mlp",
        repetition=repetition,
        metric=compute_metric(config.task, y_test, prediction),
        hyperparameters={"dropout": 0.6},
        y_true=y_test,
        prediction=prediction,
        history=fit.history,
    )


FITTERS: dict[str, Callable[[ExperimentConfig, Dataset, int], RepetitionResult]] = {
    "nimo": _fit_nimo,
    "lasso": _fit_lasso,
    "ridge": _fit_ridge,
    "logistic": _fit_logistic,
    "mlp": _fit_mlp,
}


# ---------------------------------------------------------------------------
# orchestration


def _repetition_dataset(config: ExperimentConfig, base: Optional[Dataset], repetition: int) -> Dataset:
    seed = _seed(config, repetition)
    if base is None:
        dataset = generate(GeneratorSpec(config.setting, config.n, config.noise, seed))
        return split(dataset, config.counts, seed)
    return split(base, fraction_counts(base.n, config.fractions), seed)


def _summarize(method: str, task: Task, results: list[RepetitionResult], names: Sequence[str]) -> MethodSummary:
    values = [r.metric for r in results]
    return MethodSummary(
        method=method,
        metric=_metric_name(task),
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        values=values,
        repetitions=[r.to_dict(names, task) for r in results],
    )


def compare_to_reference(report: MetricsReport, table: Optional[ReferenceTable] = None) -> MetricsReport:
    """Attach published values and ratios (ours / published) per method."""
    expected = (
        ReferenceTable.CLASSIFICATION_ACCURACY
        if report.task == Task.LOGISTIC.value
        else ReferenceTable.REGRESSION_MSE
    )
    table = table or expected
    if report.setting is None or table is not expected:
        raise UnknownTableRow(f"{report.source} has no row in {table.value}")

    row_name = TABLE_ROWS[Setting(report.setting)]
    row = lookup(table, row_name, ReferenceQuery.ROW)
    if row is None:
        raise UnknownTableRow(f"{table.value} has no row {row_name}")

    methods = {}
    for name, summary in report.methods.items():
        column = TABLE_COLUMNS.get(name)
        reference = row.get(column) if column else None
        ratio = summary.mean / reference if reference else None
        methods[name] = replace(summary, reference=reference, ratio=ratio)
    return replace(
        report,
        methods=methods,
        reference_table=table.value,
        reference_row=row,
        citation=lookup(table, row_name, ReferenceQuery.CITATION),
    )


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def write_outputs(
    report: MetricsReport,
    results: dict[str, list[RepetitionResult]],
    directory: Path,
    trace: bool = False,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "report.json").write_text(report.to_json(), encoding="utf-8")

    names = report.feature_names
    truth = report.truth or [None] * len(names)
    metric_rows, coefficient_rows, norm_rows, prediction_rows, effect_rows = [], [], [], [], []
    for method, runs in results.items():
        for run in runs:
            metric_rows.append([method, run.repetition, report.metric, repr(run.metric)])
            for row, (target, value) in enumerate(zip(run.y_true, run.prediction)):
                prediction_rows.append([method, run.repetition, row, repr(float(target)), repr(float(value))])
            if run.coefficients is not None:
                normalized = normalize_coefficients(run.coefficients)
                raw = run.raw_coefficients if run.raw_coefficients is not None else [None] * len(names)
                for name, value, scaled, unscaled, true in zip(names, run.coefficients, normalized, raw, truth):
                    coefficient_rows.append([
                        method, run.repetition, name, repr(float(value)), repr(float(scaled)),
                        "" if unscaled is None else repr(float(unscaled)),
                        "" if true is None else true, int(abs(value) < ZERO_THRESHOLD),
                    ])
            for entry in run.sparsity:
                norm_rows.append([
                    method, run.repetition, entry.feature, repr(entry.abs_coefficient),
                    int(entry.is_zero), repr(entry.group_norm),
                ])
            for point in run.effects:
                effect_rows.append([
                    method, run.repetition, point.coefficient, point.driver, repr(point.x), repr(point.learned),
                    "" if point.truth is None else repr(point.truth),
                ])
            if run.model is not None:
                models = directory / "models"
                models.mkdir(exist_ok=True)
                run.model.save(models / f"{method}_rep{run.repetition}.json")
            if trace and run.history:
                traces = directory / "traces"
                traces.mkdir(exist_ok=True)
                with (traces / f"{method}_rep{run.repetition}.jsonl").open("w", encoding="utf-8") as handle:
                    for record in run.history:
                        handle.write(json.dumps(record.to_dict()) + "\n")

    _write_csv(directory / "metrics.csv", ["method", "repetition", "metric", "value"], metric_rows)
    _write_csv(
        directory / "coefficients.csv",
        ["method", "repetition", "feature", "coefficient", "normalized", "raw_coefficient", "truth", "is_zero"],
        coefficient_rows,
    )
    _write_csv(
        directory / "norms.csv",
        ["method", "repetition", "feature", "abs_coefficient", "is_zero", "group_norm"],
        norm_rows,
    )
    _write_csv(
        directory / "predictions.csv",
        ["method", "repetition", "row", "y_true", "prediction"],
        prediction_rows,
    )
    if effect_rows:
        _write_csv(
            directory / "effects.csv",
            ["method", "repetition", "coefficient", "driver", "x", "learned", "truth"],
            effect_rows,
        )


def run(config: ExperimentConfig) -> MetricsReport:
    """Run every method for ``config.repeats`` seeded repetitions and write the report."""
    base = None
    if config.csv_path is not None:
        base = load_csv(config.csv_path, config.target_column, config.csv_task)

    results: dict[str, list[RepetitionResult]] = {method: [] for method in config.methods}
    dataset = None
    for repetition in range(config.repeats):
        dataset = _repetition_dataset(config, base, repetition)
        for method in config.methods:
            try:
                result = FITTERS[method](config, dataset, repetition)
            except Exception as exc:
                raise ExperimentError(method, repetition, exc) from exc
            results[method].append(result)
            _logger.info(
                "%s repetition %d: %s = %.6g",
                method, repetition, _metric_name(config.task), result.metric,
            )

    names = list(dataset.feature_names)
    report = MetricsReport(
        source=config.source,
        setting=config.setting.value if config.setting is not None else None,
        task=config.task.value,
        metric=_metric_name(config.task),
        feature_names=names,
        truth=None if dataset.truth is None else [float(v) for v in dataset.truth],
        methods={m: _summarize(m, config.task, results[m], names) for m in config.methods},
        config=config.to_dict(),
    )
    try:
        report = compare_to_reference(report)
    except UnknownTableRow as exc:
        _logger.info("No reference values: %s", exc)

    write_outputs(report, results, config.output_dir, trace=config.trace)
    return report
