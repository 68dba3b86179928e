"""Surrogate regressors, evaluation metrics, cross-validation, and tuning.

Four algorithms predict discharge capacity from encoded design features:
a CART decision tree (dt), a bagged random forest (rf), stagewise
gradient-boosted trees (gbm), and a small neural network (mlp). The gbm is
the campaign default. Random search samples the tuning ranges below and
scores each candidate by fivefold cross-validated rmse; the mlp keeps fixed
defaults and is not tuned.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import mlp as _mlp
from . import trees as _trees
from .dataset import Dataset
from .design_space import DesignSpace, encode_features, space_from_dict, space_to_dict, validate_point
from .errors import (
    EmptyInput,
    InsufficientData,
    InvalidArgument,
    InvalidHyperparams,
    LengthMismatch,
    SchemaMismatch,
    SpaceMismatch,
)

ALGORITHMS = ("dt", "rf", "gbm", "mlp")

# Random-search sampling ranges (closed; integers sampled inclusive).
GBM_RANGES = {
    "subsample": (0.01, 1.0),
    "n_estimators": (50, 300),
    "max_depth": (3, 8),
    "learning_rate": (0.001, 0.2),
    "min_samples_split": (2, 9),
}
TREE_RANGES = {
    "max_depth": (3, 8),
    "min_samples_split": (2, 9),
}
RF_RANGES = {"n_trees": (50, 300), **TREE_RANGES}


def _check_positive_int(name, value, minimum=1):
    if not isinstance(value, int) or value < minimum:
        raise InvalidHyperparams(f"{name} must be an integer >= {minimum}, got {value!r}")


@dataclass(frozen=True)
class DtHyperParams:
    max_depth: int = 6
    min_samples_split: int = 2

    def __post_init__(self):
        _check_positive_int("max_depth", self.max_depth)
        _check_positive_int("min_samples_split", self.min_samples_split, 2)


@dataclass(frozen=True)
class RfHyperParams:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_split: int = 2
    bootstrap: bool = True
    max_features: int | None = None

    def __post_init__(self):
        _check_positive_int("n_trees", self.n_trees)
        _check_positive_int("max_depth", self.max_depth)
        _check_positive_int("min_samples_split", self.min_samples_split, 2)
        if self.max_features is not None:
            _check_positive_int("max_features", self.max_features)


@dataclass(frozen=True)
class GbmHyperParams:
    subsample: float = 1.0
    n_estimators: int = 150
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_split: int = 2

    def __post_init__(self):
        if not 0.0 < self.subsample <= 1.0:
            raise InvalidHyperparams(f"subsample must be in (0, 1], got {self.subsample!r}")
        _check_positive_int("n_estimators", self.n_estimators)
        _check_positive_int("max_depth", self.max_depth)
        if not self.learning_rate > 0.0:
            raise InvalidHyperparams(f"learning_rate must be positive, got {self.learning_rate!r}")
        _check_positive_int("min_samples_split", self.min_samples_split, 2)

    def in_search_ranges(self) -> bool:
        for name, (lo, hi) in GBM_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                return False
        return True


@dataclass(frozen=True)
class MlpHyperParams:
    hidden_units: int = 64
    learning_rate: float = 0.003
    n_epochs: int = 300
    batch_size: int = 32

    def __post_init__(self):
        _check_positive_int("hidden_units", self.hidden_units)
        _check_positive_int("n_epochs", self.n_epochs)
        _check_positive_int("batch_size", self.batch_size)
        if not self.learning_rate > 0.0:
            raise InvalidHyperparams("learning_rate must be positive")


_HP_TYPES = {
    "dt": DtHyperParams,
    "rf": RfHyperParams,
    "gbm": GbmHyperParams,
    "mlp": MlpHyperParams,
}


def default_hyperparams(algorithm: str):
    if algorithm not in _HP_TYPES:
        raise InvalidArgument(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    return _HP_TYPES[algorithm]()


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    hyperparams: object
    seed: int

    def __post_init__(self):
        if self.algorithm not in _HP_TYPES:
            raise InvalidArgument(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        expected = _HP_TYPES[self.algorithm]
        if not isinstance(self.hyperparams, expected):
            raise InvalidHyperparams(
                f"{self.algorithm} spec needs {expected.__name__}, "
                f"got {type(self.hyperparams).__name__}"
            )

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "hyperparams": asdict(self.hyperparams),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        algo = d["algorithm"]
        if algo not in _HP_TYPES:
            raise InvalidArgument(f"unknown algorithm {algo!r}")
        return cls(algorithm=algo, hyperparams=_HP_TYPES[algo](**d["hyperparams"]), seed=d["seed"])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    rmse: float
    mse: float
    r2: float
    r2_defined: bool = True

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "mse": self.mse, "r2": self.r2, "r2_defined": self.r2_defined}


def compute_metrics(predictions, actuals) -> MetricsRow:
    """rmse, mse, and r2 about the mean of the actuals.

    When the actuals are constant, r2 is 1 for a perfect fit and otherwise
    reported as -inf with r2_defined False.
    """
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise LengthMismatch(f"predictions {p.shape} vs actuals {a.shape}")
    if len(a) == 0:
        raise EmptyInput("metrics need at least one pair")
    err = p - a
    mse = float(np.mean(err * err))
    rmse = math.sqrt(mse)
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        if ss_res == 0.0:
            return MetricsRow(rmse=rmse, mse=mse, r2=1.0)
        return MetricsRow(rmse=rmse, mse=mse, r2=float("-inf"), r2_defined=False)
    return MetricsRow(rmse=rmse, mse=mse, r2=1.0 - ss_res / ss_tot)


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------


class TrainedModel:
    """A fitted surrogate; immutable after fit, safe for concurrent predict."""

    def __init__(self, spec: ModelSpec, space: DesignSpace, state, training_metrics: MetricsRow,
                 staged_training_rmse=None):
        self.spec = spec
        self.space = space
        self._state = state
        self.training_metrics = training_metrics
        # gbm only: training rmse after each boosting stage
        self.staged_training_rmse = staged_training_rmse

    def predict_features(self, X: np.ndarray) -> np.ndarray:
        """Fast path for pre-encoded feature matrices."""
        X = np.asarray(X, dtype=np.float64)
        if self.spec.algorithm == "mlp":
            return _mlp.predict_mlp(self._state, X)
        return self._state.predict(X)


def _design_matrix(space: DesignSpace, records):
    X = np.stack([encode_features(space, r.point) for r in records])
    y = np.asarray([r.discharge_capacity for r in records], dtype=np.float64)
    return X, y


def train(spec: ModelSpec, data: Dataset) -> TrainedModel:
    """Fit the specified regressor on encoded features -> capacity."""
    records = data.capacity_bearing()
    if len(records) < 1:
        raise InsufficientData("training needs at least one capacity-bearing record")
    X, y = _design_matrix(data.space, records)
    hp = spec.hyperparams
    staged = None
    if spec.algorithm == "dt":
        state = _trees.fit_decision_tree(X, y, hp.max_depth, hp.min_samples_split)
    elif spec.algorithm == "rf":
        state = _trees.fit_random_forest(
            X, y, hp.n_trees, hp.max_depth, hp.min_samples_split,
            hp.bootstrap, hp.max_features, spec.seed,
        )
    elif spec.algorithm == "gbm":
        state, staged = _trees.fit_gradient_boosting(
            X, y, hp.n_estimators, hp.learning_rate, hp.max_depth,
            hp.min_samples_split, hp.subsample, spec.seed,
        )
    else:
        if len(records) < 2:
            raise InsufficientData("mlp training needs at least two records")
        state = _mlp.fit_mlp(
            X, y, hp.hidden_units, hp.learning_rate, hp.n_epochs, hp.batch_size, spec.seed
        )

    model = TrainedModel(spec, data.space, state, MetricsRow(0.0, 0.0, 1.0), staged)
    model.training_metrics = compute_metrics(model.predict_features(X), y)
    return model


def predict(model: TrainedModel, points) -> np.ndarray:
    """Predict capacity for a list of design points (validates each point)."""
    points = list(points)
    if not points:
        return np.zeros(0, dtype=np.float64)
    for p in points:
        result = validate_point(model.space, p)
        if not result.ok:
            raise SpaceMismatch(
                f"point invalid in space {model.space.name!r}: {result.violations[0]}"
            )
    X = np.stack([encode_features(model.space, p) for p in points])
    return model.predict_features(X)


# ---------------------------------------------------------------------------
# Cross-validation and random search
# ---------------------------------------------------------------------------


def make_folds(n: int, k: int, seed: int):
    """Shuffle 0..n-1 once and partition into k folds of near-equal size."""
    order = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(order, k)]


def kfold_cv(spec: ModelSpec, data: Dataset, k: int = 5, seed: int = 0):
    """Per-fold held-out metrics plus their mean.

    Every capacity-bearing record is validated exactly once; fold sizes
    differ by at most one.
    """
    records = data.capacity_bearing()
    n = len(records)
    if n < k:
        raise InsufficientData(f"{k}-fold CV needs at least {k} records, have {n}")
    folds = make_folds(n, k, seed)
    rows = []
    for fold in folds:
        held = set(int(i) for i in fold)
        train_records = tuple(r for i, r in enumerate(records) if i not in held)
        test_records = [records[int(i)] for i in fold]
        model = train(spec, Dataset(space=data.space, records=train_records))
        preds = predict(model, [r.point for r in test_records])
        actual = [r.discharge_capacity for r in test_records]
        rows.append(compute_metrics(preds, actual))
    mean_row = MetricsRow(
        rmse=float(np.mean([r.rmse for r in rows])),
        mse=float(np.mean([r.mse for r in rows])),
        r2=float(np.mean([r.r2 for r in rows])),
        r2_defined=all(r.r2_defined for r in rows),
    )
    return rows, mean_row


def sample_hyperparams(algorithm: str, rng: np.random.Generator):
    """Draw one hyperparameter setting from the search ranges.

    Integers are uniform inclusive, reals uniform, and the learning rate
    log-uniform (its range spans two orders of magnitude).
    """
    if algorithm == "gbm":
        lo, hi = GBM_RANGES["learning_rate"]
        return GbmHyperParams(
            subsample=float(rng.uniform(*GBM_RANGES["subsample"])),
            n_estimators=int(rng.integers(GBM_RANGES["n_estimators"][0], GBM_RANGES["n_estimators"][1] + 1)),
            max_depth=int(rng.integers(GBM_RANGES["max_depth"][0], GBM_RANGES["max_depth"][1] + 1)),
            learning_rate=float(np.exp(rng.uniform(np.log(lo), np.log(hi)))),
            min_samples_split=int(rng.integers(GBM_RANGES["min_samples_split"][0], GBM_RANGES["min_samples_split"][1] + 1)),
        )
    if algorithm == "rf":
        return RfHyperParams(
            n_trees=int(rng.integers(RF_RANGES["n_trees"][0], RF_RANGES["n_trees"][1] + 1)),
            max_depth=int(rng.integers(RF_RANGES["max_depth"][0], RF_RANGES["max_depth"][1] + 1)),
            min_samples_split=int(rng.integers(RF_RANGES["min_samples_split"][0], RF_RANGES["min_samples_split"][1] + 1)),
        )
    if algorithm == "dt":
        return DtHyperParams(
            max_depth=int(rng.integers(TREE_RANGES["max_depth"][0], TREE_RANGES["max_depth"][1] + 1)),
            min_samples_split=int(rng.integers(TREE_RANGES["min_samples_split"][0], TREE_RANGES["min_samples_split"][1] + 1)),
        )
    raise InvalidArgument(f"random search supports dt/rf/gbm, not {algorithm!r}")


@dataclass(frozen=True)
class Trial:
    index: int
    spec: ModelSpec
    mean_rmse: float

    def to_dict(self) -> dict:
        return {"index": self.index, "spec": self.spec.to_dict(), "mean_rmse": self.mean_rmse}


def random_search(algorithm: str, data: Dataset, n_trials: int, seed: int):
    """Tune by uniform random sampling, scored by fivefold CV mean rmse.

    Returns (best ModelSpec, trial log). Ties keep the earlier trial. The
    fold assignment is fixed across trials so scores are comparable.
    """
    if n_trials < 1:
        raise InvalidArgument(f"n_trials must be >= 1, got {n_trials}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    log = []
    best = None
    for t in range(n_trials):
        hp = sample_hyperparams(algorithm, rng)
        spec = ModelSpec(algorithm=algorithm, hyperparams=hp, seed=int(rng.integers(0, 2**31 - 1)))
        _, mean_row = kfold_cv(spec, data, k=5, seed=seed)
        trial = Trial(index=t, spec=spec, mean_rmse=mean_row.rmse)
        log.append(trial)
        if best is None or trial.mean_rmse < best.mean_rmse:
            best = trial
    return best.spec, log


# ---------------------------------------------------------------------------
# Model artifact serialization
# ---------------------------------------------------------------------------

_MODEL_FORMAT = "kilnloop-model"
_MODEL_FORMAT_VERSION = 1


def model_to_dict(model: TrainedModel) -> dict:
    if model.spec.algorithm == "mlp":
        state = model._state.to_dict()
    else:
        state = model._state.to_dict()
    return {
        "format": _MODEL_FORMAT,
        "format_version": _MODEL_FORMAT_VERSION,
        "space": space_to_dict(model.space),
        "spec": model.spec.to_dict(),
        "training_metrics": model.training_metrics.to_dict(),
        "staged_training_rmse": model.staged_training_rmse,
        "state": state,
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != _MODEL_FORMAT:
        raise SchemaMismatch("not a kilnloop model artifact")
    spec = ModelSpec.from_dict(d["spec"])
    space = space_from_dict(d["space"])
    if spec.algorithm == "mlp":
        state = _mlp.MlpState.from_dict(d["state"])
    else:
        state = _trees.TreeEnsemble.from_dict(d["state"])
    tm = d["training_metrics"]
    metrics = MetricsRow(tm["rmse"], tm["mse"], tm["r2"], tm["r2_defined"])
    return TrainedModel(spec, space, state, metrics, d.get("staged_training_rmse"))


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
