"""Synthetic benchmark generators, splitting and CSV ingestion."""

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from nimo.errors import InsufficientRows, MissingColumn, ParseError, StaleCache, UnknownSetting
from nimo.model import Task
from nimo.numerics import (
    STREAM_DATA,
    STREAM_SPLIT,
    SeededRng,
    StandardizationStats,
    as_matrix,
    sigmoid,
    standardize,
)
from nimo.optimize import TrainingData


_logger = logging.getLogger(__name__)

FEATURE_LOW = -2.0
FEATURE_HIGH = 2.0
DEFAULT_NOISE = 0.1
DEFAULT_COUNTS = (200, 100, 100)
CACHE_VERSION = 1


class Setting(Enum):
    REG_TOY = "reg_toy"
    REG1 = "reg1"
    REG2 = "reg2"
    REG3 = "reg3"
    REG_VANILLA = "reg_vanilla"
    CLS1 = "cls1"
    CLS2 = "cls2"
    CLS3 = "cls3"

    @classmethod
    def parse(cls, name: str) -> "Setting":
        try:
            return cls(name)
        except ValueError:
            raise UnknownSetting(f"unknown setting {name!r}") from None


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNUSED = "unused"


def _col(X: np.ndarray, k: int) -> np.ndarray:
    # features are numbered from 1 in the formulas
    return X[:, k - 1]


def _toy(X: np.ndarray) -> np.ndarray:
    x1, x2 = _col(X, 1), _col(X, 2)
    return 3 * x1 * (1 + np.tanh(10 * x2)) - 3 * x2 * (1 + np.sin(-2 * x1))


def _reg1(X: np.ndarray) -> np.ndarray:
    x1, x2, x3 = _col(X, 1), _col(X, 2), _col(X, 3)
    return 3 * x1 * (1 + (2 * sigmoid(x2 * x3) - 1)) - 2 * x2 + 2 * x3


def _reg2(X: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = (_col(X, k) for k in (1, 2, 3, 4))
    return (
        x1 * (1 + np.tanh(x2 * x3 + np.sin(x4)))
        + 2 * x2 * (1 + np.sin(2 * x1))
        - x3 * (1 + (2 / np.pi) * np.arctan(x2 * x4))
    )


def _reg3(X: np.ndarray, scale: Sequence[float] = (-2, 2, 3, -1)) -> np.ndarray:
    x1, x2, x4, x5 = (_col(X, k) for k in (1, 2, 4, 5))
    a, b, c, e = scale
    return (
        a * x1 * (1 + np.tanh(x2 * x4))
        + b * x2 * (1 + (2 / np.pi) * np.arctan(x4 - x5))
        + c * x4 * (1 + np.tanh(x2 + np.sin(x5)))
        + e * x5 * (1 + (2 * sigmoid(x1 * x4) - 1))
    )


def _vanilla(X: np.ndarray) -> np.ndarray:
    return X @ np.arange(-5.0, 5.0)


def _cls1(X: np.ndarray) -> np.ndarray:
    x1, x2 = _col(X, 1), _col(X, 2)
    return (
        2 * x1 * (1 + 2 * np.tanh(x2))
        - 2 * x2 * (1 + 3 * np.sin(2 * x1) + np.tanh(2 * x1))
        + 1
    )


def _cls2(X: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = (_col(X, k) for k in (1, 2, 3, 4))
    return (
        10 * x1 * (1 + 2 * np.tanh(2 * x2) + np.sin(x4))
        + 20 * x2 * (1 + 2 * np.cos(2 * x1))
        - 20 * x3 * (1 + 2 * np.arctan(x2 * x4))
        + 10 * x4
        - 10
    )


def _cls3(X: np.ndarray) -> np.ndarray:
    return _reg3(X, scale=(-20, 20, 30, -10))


def _effects(X: np.ndarray, columns: dict[int, np.ndarray]) -> np.ndarray:
    # per-sample coefficient of feature k: the factor multiplying x_k
    effects = np.zeros_like(X)
    for k, values in columns.items():
        effects[:, k - 1] = values
    return effects


def _toy_effects(X: np.ndarray) -> np.ndarray:
    x1, x2 = _col(X, 1), _col(X, 2)
    return _effects(X, {1: 3 * (1 + np.tanh(10 * x2)), 2: -3 * (1 + np.sin(-2 * x1))})


def _reg1_effects(X: np.ndarray) -> np.ndarray:
    x2, x3 = _col(X, 2), _col(X, 3)
    return _effects(X, {
        1: 3 * (1 + (2 * sigmoid(x2 * x3) - 1)),
        2: np.full(len(X), -2.0),
        3: np.full(len(X), 2.0),
    })


def _reg2_effects(X: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = (_col(X, k) for k in (1, 2, 3, 4))
    return _effects(X, {
        1: 1 + np.tanh(x2 * x3 + np.sin(x4)),
        2: 2 * (1 + np.sin(2 * x1)),
        3: -(1 + (2 / np.pi) * np.arctan(x2 * x4)),
    })


def _reg3_effects(X: np.ndarray, scale: Sequence[float] = (-2, 2, 3, -1)) -> np.ndarray:
    x1, x2, x4, x5 = (_col(X, k) for k in (1, 2, 4, 5))
    a, b, c, e = scale
    return _effects(X, {
        1: a * (1 + np.tanh(x2 * x4)),
        2: b * (1 + (2 / np.pi) * np.arctan(x4 - x5)),
        4: c * (1 + np.tanh(x2 + np.sin(x5))),
        5: e * (1 + (2 * sigmoid(x1 * x4) - 1)),
    })


def _vanilla_effects(X: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.arange(-5.0, 5.0), X.shape).copy()


def _cls1_effects(X: np.ndarray) -> np.ndarray:
    x1, x2 = _col(X, 1), _col(X, 2)
    return _effects(X, {
        1: 2 * (1 + 2 * np.tanh(x2)),
        2: -2 * (1 + 3 * np.sin(2 * x1) + np.tanh(2 * x1)),
    })


def _cls2_effects(X: np.ndarray) -> np.ndarray:
    x1, x2, x4 = (_col(X, k) for k in (1, 2, 4))
    return _effects(X, {
        1: 10 * (1 + 2 * np.tanh(2 * x2) + np.sin(x4)),
        2: 20 * (1 + 2 * np.cos(2 * x1)),
        3: -20 * (1 + 2 * np.arctan(x2 * x4)),
        4: np.full(len(X), 10.0),
    })


def _cls3_effects(X: np.ndarray) -> np.ndarray:
    return _reg3_effects(X, scale=(-20, 20, 30, -10))


def _padded(values: Sequence[float], d: int) -> tuple[float, ...]:
    return tuple(values) + (0.0,) * (d - len(values))


@dataclass(frozen=True)
class SettingDefinition:
    d: int
    task: Task
    truth: tuple[float, ...]
    intercept: float
    response: Callable[[np.ndarray], np.ndarray]
    effects: Callable[[np.ndarray], np.ndarray]


SETTINGS: dict[Setting, SettingDefinition] = {
    Setting.REG_TOY: SettingDefinition(3, Task.REGRESSION, (3.0, -3.0, 0.0), 0.0, _toy, _toy_effects),
    Setting.REG1: SettingDefinition(5, Task.REGRESSION, _padded((3, -2, 2), 5), 0.0, _reg1, _reg1_effects),
    Setting.REG2: SettingDefinition(10, Task.REGRESSION, _padded((1, 2, -1), 10), 0.0, _reg2, _reg2_effects),
    Setting.REG3: SettingDefinition(50, Task.REGRESSION, _padded((-2, 2, 0, 3, -1), 50), 0.0, _reg3, _reg3_effects),
    Setting.REG_VANILLA: SettingDefinition(
        10, Task.REGRESSION, tuple(float(v) for v in range(-5, 5)), 0.0, _vanilla, _vanilla_effects
    ),
    Setting.CLS1: SettingDefinition(3, Task.LOGISTIC, (2.0, -2.0, 0.0), 1.0, _cls1, _cls1_effects),
    Setting.CLS2: SettingDefinition(10, Task.LOGISTIC, _padded((10, 20, -20, 10), 10), -10.0, _cls2, _cls2_effects),
    Setting.CLS3: SettingDefinition(50, Task.LOGISTIC, _padded((-20, 20, 0, 30, -10), 50), 0.0, _cls3, _cls3_effects),
}


def setting_response(setting: Setting, X: np.ndarray) -> np.ndarray:
    """Noise-free latent response of a synthetic setting."""
    definition = SETTINGS[setting]
    X = as_matrix(X)
    if X.shape[1] != definition.d:
        raise ValueError(f"{setting.value} needs {definition.d} features, got {X.shape[1]}")
    return definition.response(X)


def setting_effects(setting: Setting, X: np.ndarray) -> np.ndarray:
    """True per-sample coefficients: response = intercept + sum of x_k times column k."""
    definition = SETTINGS[setting]
    X = as_matrix(X)
    if X.shape[1] != definition.d:
        raise ValueError(f"{setting.value} needs {definition.d} features, got {X.shape[1]}")
    return definition.effects(X)


@dataclass(frozen=True)
class GeneratorSpec:
    setting: Setting
    n: int = sum(DEFAULT_COUNTS)
    noise: float = DEFAULT_NOISE
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.setting, Setting):
            object.__setattr__(self, "setting", Setting.parse(str(self.setting)))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    @property
    def d(self) -> int:
        return SETTINGS[self.setting].d

    @property
    def task(self) -> Task:
        return SETTINGS[self.setting].task


@dataclass(frozen=True)
class Dataset:
    X_raw: np.ndarray
    y: np.ndarray
    task: Task
    split: np.ndarray
    stats: StandardizationStats
    X_std: np.ndarray
    feature_names: tuple[str, ...]
    truth: Optional[np.ndarray] = None
    truth_intercept: Optional[float] = None
    setting: Optional[Setting] = None
    source: str = "synthetic"

    @property
    def n(self) -> int:
        return self.X_raw.shape[0]

    @property
    def d(self) -> int:
        return self.X_raw.shape[1]

    def mask(self, part: Split) -> np.ndarray:
        return self.split == part.value

    def count(self, part: Split) -> int:
        return int(np.sum(self.mask(part)))

    def rows(self, part: Split, standardized: bool = True) -> tuple[np.ndarray, np.ndarray]:
        rows = self.mask(part)
        X = self.X_std if standardized else self.X_raw
        return X[rows], self.y[rows]

    def training_data(self) -> TrainingData:
        X, y = self.rows(Split.TRAIN)
        X_val, y_val = self.rows(Split.VAL)
        return TrainingData(
            X=X,
            y=y,
            stats=self.stats,
            X_val=X_val if len(X_val) else None,
            y_val=y_val if len(y_val) else None,
            feature_names=self.feature_names,
        )


def _default_names(d: int) -> tuple[str, ...]:
    return tuple(f"x{j + 1}" for j in range(d))


def _assemble(
    X_raw: np.ndarray,
    y: np.ndarray,
    task: Task,
    labels: np.ndarray,
    feature_names: tuple[str, ...],
    **extra: object,
) -> Dataset:
    train = labels == Split.TRAIN.value
    if int(np.sum(train)) < 2:
        raise InsufficientRows("at least two training rows are needed for standardization")
    _, stats = standardize(X_raw[train])
    return Dataset(
        X_raw=X_raw,
        y=y,
        task=task,
        split=labels,
        stats=stats,
        X_std=stats.apply(X_raw),
        feature_names=feature_names,
        **extra,
    )


def generate(spec: GeneratorSpec) -> Dataset:
    """Draw a synthetic dataset; every row starts in the training split."""
    definition = SETTINGS[spec.setting]
    rng = SeededRng(spec.seed, STREAM_DATA)
    X = rng.uniform(FEATURE_LOW, FEATURE_HIGH, (spec.n, definition.d))
    latent = definition.response(X) + spec.noise * rng.normal(spec.n)
    if definition.task is Task.LOGISTIC:
        y = rng.bernoulli(sigmoid(latent))
    else:
        y = latent

    _logger.debug("generated %s with n=%d, seed=%d", spec.setting.value, spec.n, spec.seed)
    return _assemble(
        X,
        y,
        definition.task,
        np.full(spec.n, Split.TRAIN.value, dtype=object),
        _default_names(definition.d),
        truth=np.asarray(definition.truth, dtype=np.float64),
        truth_intercept=definition.intercept,
        setting=spec.setting,
    )


def split(dataset: Dataset, counts: Sequence[int] = DEFAULT_COUNTS, seed: int = 0) -> Dataset:
    """Uniformly random train/val/test assignment; statistics from train rows only."""
    n_train, n_val, n_test = (int(c) for c in counts)
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split counts must be non-negative")
    if n_train + n_val + n_test > dataset.n:
        raise InsufficientRows(
            f"requested {n_train + n_val + n_test} rows but dataset has {dataset.n}"
        )

    order = SeededRng(seed, STREAM_SPLIT).permutation(dataset.n)
    labels = np.full(dataset.n, Split.UNUSED.value, dtype=object)
    labels[order[:n_train]] = Split.TRAIN.value
    labels[order[n_train:n_train + n_val]] = Split.VAL.value
    labels[order[n_train + n_val:n_train + n_val + n_test]] = Split.TEST.value

    rebuilt = _assemble(dataset.X_raw, dataset.y, dataset.task, labels, dataset.feature_names)
    return replace(dataset, split=labels, stats=rebuilt.stats, X_std=rebuilt.X_std)


def fraction_counts(n: int, fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    """Row counts for a fractional split; the remainder goes to train."""
    n_val = int(math.floor(fractions[1] * n))
    n_test = int(math.floor(fractions[2] * n))
    return n - n_val - n_test, n_val, n_test


def _parse_cell(value: str, row: int, column: str) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise ParseError(row, column, value) from None
    if not math.isfinite(parsed):
        raise ParseError(row, column, value)
    return parsed


def load_csv(path: Path, target: str, task: Task = Task.REGRESSION) -> Dataset:
    """Read a numeric CSV with a header row.

    Rows are numbered from 1 after the header in ParseError. Every row
    starts in the training split.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = [name.strip() for name in next(reader, [])]
        if target not in header:
            raise MissingColumn(target)
        target_index = header.index(target)

        records = []
        for row_index, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(row_index, "<row>", f"{len(row)} cells for {len(header)} columns")
            records.append([_parse_cell(cell.strip(), row_index, name) for cell, name in zip(row, header)])

    if not records:
        raise InsufficientRows(f"{path} has no data rows")

    table = np.asarray(records, dtype=np.float64)
    y = table[:, target_index]
    X = np.delete(table, target_index, axis=1)
    if task is Task.LOGISTIC:
        bad = np.flatnonzero((y != 0.0) & (y != 1.0))
        if bad.size:
            raise ParseError(int(bad[0]) + 1, target, str(y[bad[0]]))

    names = tuple(name for k, name in enumerate(header) if k != target_index)
    _logger.info("loaded %s: %d rows, %d features", path.name, *X.shape)
    return _assemble(
        X, y, task, np.full(len(y), Split.TRAIN.value, dtype=object), names, source=str(path)
    )


# ---------------------------------------------------------------------------
# dataset cache: manifest.json + data.csv


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_dataset(dataset: Dataset, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = directory / "data.csv"
    with payload.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([*dataset.feature_names, "target", "split"])
        for features, target, label in zip(dataset.X_raw, dataset.y, dataset.split):
            writer.writerow([*(repr(float(v)) for v in features), repr(float(target)), label])

    manifest = {
        "cache_version": CACHE_VERSION,
        "task": dataset.task.value,
        "setting": dataset.setting.value if dataset.setting else None,
        "source": dataset.source,
        "feature_names": list(dataset.feature_names),
        "truth": None if dataset.truth is None else dataset.truth.tolist(),
        "truth_intercept": dataset.truth_intercept,
        "payload": payload.name,
        "sha256": _digest(payload),
    }
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return manifest_path


def load_dataset(directory: Path) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("cache_version") != CACHE_VERSION:
        raise StaleCache(f"cache version {manifest.get('cache_version')} is not {CACHE_VERSION}")
    payload = directory / manifest["payload"]
    if _digest(payload) != manifest["sha256"]:
        raise StaleCache(f"{payload} does not match its manifest checksum")

    names = tuple(manifest["feature_names"])
    features, targets, labels = [], [], []
    with payload.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader)
        for row_index, row in enumerate(reader, start=1):
            features.append([_parse_cell(cell, row_index, name) for cell, name in zip(row, names)])
            targets.append(_parse_cell(row[len(names)], row_index, "target"))
            labels.append(row[len(names) + 1])

    truth = manifest.get("truth")
    setting = manifest.get("setting")
    return _assemble(
        np.asarray(features, dtype=np.float64),
        np.asarray(targets, dtype=np.float64),
        Task(manifest["task"]),
        np.asarray(labels, dtype=object),
        names,
        truth=None if truth is None else np.asarray(truth, dtype=np.float64),
        truth_intercept=manifest.get("truth_intercept"),
        setting=None if setting is None else Setting(setting),
        source=manifest.get("source", "synthetic"),
    )
