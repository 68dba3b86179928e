"""Parameter schemas, design points, and grid operations.

A DesignSpace declares the tunable parameters of a campaign: continuous
values on a step grid, categorical levels, and fixed constants. This module
owns point validation, grid snapping, exhaustive enumeration, and the
numeric feature encoding shared by the surrogate models and the optimizer.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import (
    GridTooLarge,
    SchemaMismatch,
    UnknownLevel,
    UnknownParameter,
)

# Relative tolerance for "span is an integer multiple of step".
_SPAN_REL_TOL = 1e-9
# Tolerance for the on-grid check, in units of step.
_GRID_TOL = 1e-6


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class Continuous:
    """A bounded grid of values min, min+step, ..., max."""

    min: float
    max: float
    step: float
    unit: str = ""

    def __post_init__(self):
        for field_name in ("min", "max", "step"):
            v = getattr(self, field_name)
            if not _is_number(v) or not math.isfinite(v):
                raise ValueError(f"continuous {field_name} must be a finite number")
        if not self.min < self.max:
            raise ValueError(f"min ({self.min}) must be strictly below max ({self.max})")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        span = (self.max - self.min) / self.step
        if abs(span - round(span)) > _SPAN_REL_TOL * max(1.0, abs(span)):
            raise ValueError(
                f"(max - min) must be an integer multiple of step "
                f"(got span/step = {span})"
            )

    @property
    def n_steps(self) -> int:
        """Number of step intervals; the grid holds n_steps + 1 values."""
        return int(round((self.max - self.min) / self.step))

    def cardinality(self) -> int:
        return self.n_steps + 1

    def value_at(self, index: int) -> float:
        return self.min + self.step * index

    def grid_values(self) -> np.ndarray:
        return self.min + self.step * np.arange(self.n_steps + 1)

    def index_of(self, value: float):
        """Grid index of an on-grid value, or None if off-grid / out of bounds."""
        k = (value - self.min) / self.step
        kr = round(k)
        if abs(k - kr) > _GRID_TOL:
            return None
        if kr < 0 or kr > self.n_steps:
            return None
        return int(kr)

    def snap_index(self, value: float) -> int:
        """Index of the nearest grid value, clamped into bounds.

        An exact midpoint between two grid values resolves to the lower one.
        """
        k = (value - self.min) / self.step
        idx = math.ceil(k - 0.5)
        return min(max(idx, 0), self.n_steps)


@dataclass(frozen=True)
class Categorical:
    """An ordered set of named levels."""

    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise ValueError("categorical parameter needs at least one level")
        if any(not isinstance(level, str) for level in self.levels):
            raise ValueError("categorical levels must be strings")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError("categorical levels must be unique")

    def cardinality(self) -> int:
        return len(self.levels)

    def index_of(self, value):
        if value in self.levels:
            return self.levels.index(value)
        return None


@dataclass(frozen=True)
class Fixed:
    """A single constant value, numeric or string."""

    value: Union[float, str]

    def __post_init__(self):
        if not (_is_number(self.value) or isinstance(self.value, str)):
            raise ValueError("fixed value must be a number or string")

    @property
    def is_numeric(self) -> bool:
        return _is_number(self.value)

    def cardinality(self) -> int:
        return 1


Kind = Union[Continuous, Categorical, Fixed]


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: Kind

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ValueError("parameter name must be a non-empty string")
        if not isinstance(self.kind, (Continuous, Categorical, Fixed)):
            raise ValueError(f"unsupported parameter kind: {self.kind!r}")

    def cardinality(self) -> int:
        return self.kind.cardinality()

    def grid(self) -> tuple:
        """All admissible values of this parameter, in canonical order."""
        kind = self.kind
        if isinstance(kind, Continuous):
            return tuple(float(v) for v in kind.grid_values())
        if isinstance(kind, Categorical):
            return kind.levels
        return (kind.value,)


@dataclass(frozen=True)
class DesignSpace:
    """An ordered parameter schema; the order is the canonical feature order."""

    name: str
    version: int
    parameters: tuple

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate parameter names: {dupes}")

    def names(self) -> tuple:
        return tuple(p.name for p in self.parameters)

    def parameter(self, name: str) -> ParameterSpec:
        for p in self.parameters:
            if p.name == name:
                return p
        raise UnknownParameter(f"parameter {name!r} is not in space {self.name!r}")

    def has_parameter(self, name: str) -> bool:
        return any(p.name == name for p in self.parameters)


class DesignPoint:
    """A concrete assignment of values, keyed by parameter name."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping):
        self._values = dict(values)

    @property
    def values(self) -> dict:
        return dict(self._values)

    def __getitem__(self, name: str):
        return self._values[name]

    def get(self, name: str, default=None):
        return self._values.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def items(self):
        return self._values.items()

    def __eq__(self, other) -> bool:
        if not isinstance(other, DesignPoint):
            return NotImplemented
        return self._values == other._values

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self._values.items())
        return f"DesignPoint({inner})"


@dataclass(frozen=True)
class Violation:
    parameter: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.parameter}: {self.rule} ({self.detail})"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(self.violations))

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _check_value(spec: ParameterSpec, value) -> Violation | None:
    kind = spec.kind
    if isinstance(kind, Continuous):
        if not _is_number(value) or not math.isfinite(value):
            return Violation(spec.name, "non-numeric", f"got {value!r}")
        if value < kind.min or value > kind.max:
            return Violation(
                spec.name, "out-of-bounds", f"{value} outside [{kind.min}, {kind.max}]"
            )
        if kind.index_of(value) is None:
            return Violation(
                spec.name,
                "off-grid",
                f"{value} is not {kind.min} + k*{kind.step} for integer k",
            )
        return None
    if isinstance(kind, Categorical):
        if kind.index_of(value) is None:
            return Violation(
                spec.name, "unknown-level", f"{value!r} not in {list(kind.levels)}"
            )
        return None
    # Fixed
    if kind.is_numeric:
        if not _is_number(value) or value != kind.value:
            return Violation(
                spec.name, "fixed-value mismatch", f"expected {kind.value}, got {value!r}"
            )
    else:
        if value != kind.value:
            return Violation(
                spec.name, "fixed-value mismatch", f"expected {kind.value!r}, got {value!r}"
            )
    return None


def validate_point(space: DesignSpace, point: DesignPoint) -> ValidationResult:
    """Check a point against the schema; never raises, reports every violation."""
    violations = []
    for spec in space.parameters:
        if spec.name not in point:
            violations.append(Violation(spec.name, "missing", "no value supplied"))
            continue
        v = _check_value(spec, point[spec.name])
        if v is not None:
            violations.append(v)
    known = set(space.names())
    for name in point:
        if name not in known:
            violations.append(Violation(name, "unknown", "not a parameter of this space"))
    return ValidationResult(tuple(violations))


def snap_to_grid(space: DesignSpace, point: DesignPoint) -> DesignPoint:
    """Replace each continuous value by the nearest grid value, clamped into bounds.

    Exact midpoints resolve to the lower grid value. Categorical and fixed
    values pass through unchanged. Raises UnknownParameter for names absent
    from the space.
    """
    out = {}
    for name, value in point.items():
        spec = space.parameter(name)
        kind = spec.kind
        if isinstance(kind, Continuous):
            if not _is_number(value) or not math.isfinite(value):
                raise ValueError(f"cannot snap non-finite value {value!r} for {name!r}")
            out[name] = kind.value_at(kind.snap_index(value))
        else:
            out[name] = value
    return DesignPoint(out)


def grid_cardinality(space: DesignSpace) -> int:
    n = 1
    for p in space.parameters:
        n *= p.cardinality()
    return n


def enumerate_grid(space: DesignSpace, limit: int) -> list:
    """Full Cartesian product of the grid, lexicographic in canonical order."""
    card = grid_cardinality(space)
    if card > limit:
        raise GridTooLarge(card, limit)
    names = space.names()
    grids = [p.grid() for p in space.parameters]
    return [DesignPoint(dict(zip(names, combo))) for combo in itertools.product(*grids)]


def feature_names(space: DesignSpace) -> tuple:
    """Names of the encoded feature vector components, in order.

    Continuous and fixed-numeric parameters contribute one component each;
    categorical parameters contribute one indicator per level; fixed-string
    parameters contribute nothing (zero variance by definition).
    """
    names = []
    for p in space.parameters:
        kind = p.kind
        if isinstance(kind, Continuous):
            names.append(p.name)
        elif isinstance(kind, Categorical):
            names.extend(f"{p.name}={level}" for level in kind.levels)
        elif kind.is_numeric:
            names.append(p.name)
    return tuple(names)


def encode_features(space: DesignSpace, point: DesignPoint) -> np.ndarray:
    """Encode a valid point as a numeric feature vector.

    Continuous and fixed-numeric values map to themselves; categorical values
    map to a one-hot block in level order; fixed-string parameters are
    omitted. The vector length is constant for a given space.
    """
    out = []
    for p in space.parameters:
        kind = p.kind
        if isinstance(kind, Fixed):
            if kind.is_numeric:
                out.append(float(kind.value))
            continue
        if p.name not in point:
            raise UnknownParameter(f"point is missing parameter {p.name!r}")
        value = point[p.name]
        if isinstance(kind, Continuous):
            out.append(float(value))
        else:
            idx = kind.index_of(value)
            if idx is None:
                raise UnknownLevel(
                    f"{value!r} is not a level of {p.name!r} ({list(kind.levels)})"
                )
            block = [0.0] * len(kind.levels)
            block[idx] = 1.0
            out.extend(block)
    return np.asarray(out, dtype=np.float64)


class GridCodec:
    """Vectorized bridge between free-parameter arrays and the grid.

    Free parameters are the non-fixed ones. Each free dimension has a
    continuous box: the [min, max] range for continuous parameters, and
    [0, n_levels - 1] index space for categorical ones. Positions are
    snapped to integer grid indices with the same lower-midpoint rule as
    snap_to_grid, and index matrices encode to the same features as
    encode_features.
    """

    def __init__(self, space: DesignSpace):
        self.space = space
        self.free = tuple(
            p for p in space.parameters if not isinstance(p.kind, Fixed)
        )
        lo, hi, step, base, cards = [], [], [], [], []
        for p in self.free:
            kind = p.kind
            if isinstance(kind, Continuous):
                lo.append(kind.min)
                hi.append(kind.max)
                step.append(kind.step)
                base.append(kind.min)
                cards.append(kind.cardinality())
            else:
                lo.append(0.0)
                hi.append(float(len(kind.levels) - 1))
                step.append(1.0)
                base.append(0.0)
                cards.append(len(kind.levels))
        self.box_low = np.asarray(lo, dtype=np.float64)
        self.box_high = np.asarray(hi, dtype=np.float64)
        self._step = np.asarray(step, dtype=np.float64)
        self._base = np.asarray(base, dtype=np.float64)
        self.cardinalities = np.asarray(cards, dtype=np.int64)

    @property
    def n_free(self) -> int:
        return len(self.free)

    def snap_to_indices(self, positions: np.ndarray) -> np.ndarray:
        """Map a (n, n_free) position matrix to integer grid indices."""
        k = (positions - self._base) / self._step
        idx = np.ceil(k - 0.5).astype(np.int64)
        return np.clip(idx, 0, self.cardinalities - 1)

    def indices_of_point(self, point: DesignPoint, snap: bool = False) -> tuple:
        """Grid-index key of a point's free parameters."""
        key = []
        for j, p in enumerate(self.free):
            value = point[p.name]
            kind = p.kind
            if isinstance(kind, Continuous):
                idx = kind.snap_index(value) if snap else kind.index_of(value)
                if idx is None:
                    raise ValueError(f"{p.name}={value!r} is off-grid")
            else:
                idx = kind.index_of(value)
                if idx is None:
                    raise UnknownLevel(f"{value!r} not a level of {p.name!r}")
            key.append(int(idx))
        return tuple(key)

    def point_from_indices(self, indices: Sequence) -> DesignPoint:
        """Rebuild a full design point (fixed values injected) from free indices."""
        out = {}
        j = 0
        for p in self.space.parameters:
            kind = p.kind
            if isinstance(kind, Fixed):
                out[p.name] = kind.value
                continue
            idx = int(indices[j])
            j += 1
            if isinstance(kind, Continuous):
                out[p.name] = kind.value_at(idx)
            else:
                out[p.name] = kind.levels[idx]
        return DesignPoint(out)

    def encode_indices(self, indices: np.ndarray) -> np.ndarray:
        """Encode a (n, n_free) index matrix into the model feature matrix."""
        n = indices.shape[0]
        cols = []
        j = 0
        for p in self.space.parameters:
            kind = p.kind
            if isinstance(kind, Fixed):
                if kind.is_numeric:
                    cols.append(np.full((n, 1), float(kind.value)))
                continue
            k = indices[:, j]
            j += 1
            if isinstance(kind, Continuous):
                cols.append((kind.min + kind.step * k)[:, None])
            else:
                onehot = np.zeros((n, len(kind.levels)))
                onehot[np.arange(n), k] = 1.0
                cols.append(onehot)
        if not cols:
            return np.zeros((n, 0))
        return np.ascontiguousarray(np.hstack(cols))

    def all_grid_indices(self, limit: int) -> np.ndarray:
        """Index matrix of the full grid, lexicographic in canonical order."""
        card = grid_cardinality(self.space)
        if card > limit:
            raise GridTooLarge(card, limit)
        if self.n_free == 0:
            return np.zeros((1, 0), dtype=np.int64)
        axes = [np.arange(c, dtype=np.int64) for c in self.cardinalities]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

_CONTINUOUS_FIELDS = {"name", "kind", "min", "max", "step", "unit"}
_CATEGORICAL_FIELDS = {"name", "kind", "levels"}
_FIXED_FIELDS = {"name", "kind", "value"}


def _parameter_from_dict(entry: dict) -> ParameterSpec:
    if not isinstance(entry, dict):
        raise SchemaMismatch(f"parameter entry must be an object, got {entry!r}")
    kind = entry.get("kind")
    name = entry.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaMismatch(f"parameter entry missing a name: {entry!r}")
    if kind == "continuous":
        allowed = _CONTINUOUS_FIELDS
    elif kind == "categorical":
        allowed = _CATEGORICAL_FIELDS
    elif kind == "fixed":
        allowed = _FIXED_FIELDS
    else:
        raise SchemaMismatch(f"parameter {name!r}: unknown kind {kind!r}")
    unknown = set(entry) - allowed
    if unknown:
        raise SchemaMismatch(f"parameter {name!r}: unknown fields {sorted(unknown)}")
    missing = allowed - set(entry)
    if missing:
        raise SchemaMismatch(f"parameter {name!r}: missing fields {sorted(missing)}")
    try:
        if kind == "continuous":
            return ParameterSpec(
                name,
                Continuous(
                    min=float(entry["min"]),
                    max=float(entry["max"]),
                    step=float(entry["step"]),
                    unit=str(entry["unit"]),
                ),
            )
        if kind == "categorical":
            return ParameterSpec(name, Categorical(tuple(entry["levels"])))
        value = entry["value"]
        if not (_is_number(value) or isinstance(value, str)):
            raise ValueError("fixed value must be a number or string")
        return ParameterSpec(name, Fixed(value))
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"parameter {name!r}: {exc}") from exc


def _parameter_to_dict(spec: ParameterSpec) -> dict:
    kind = spec.kind
    if isinstance(kind, Continuous):
        return {
            "name": spec.name,
            "kind": "continuous",
            "min": kind.min,
            "max": kind.max,
            "step": kind.step,
            "unit": kind.unit,
        }
    if isinstance(kind, Categorical):
        return {"name": spec.name, "kind": "categorical", "levels": list(kind.levels)}
    return {"name": spec.name, "kind": "fixed", "value": kind.value}


def space_from_dict(data: dict) -> DesignSpace:
    if not isinstance(data, dict):
        raise SchemaMismatch("design space document must be a JSON object")
    unknown = set(data) - {"name", "version", "parameters"}
    if unknown:
        raise SchemaMismatch(f"unknown fields in design space document: {sorted(unknown)}")
    for field_name in ("name", "version", "parameters"):
        if field_name not in data:
            raise SchemaMismatch(f"design space document missing field {field_name!r}")
    if not isinstance(data["version"], int):
        raise SchemaMismatch("design space version must be an integer")
    params = tuple(_parameter_from_dict(e) for e in data["parameters"])
    try:
        return DesignSpace(name=str(data["name"]), version=data["version"], parameters=params)
    except ValueError as exc:
        raise SchemaMismatch(str(exc)) from exc


def space_to_dict(space: DesignSpace) -> dict:
    return {
        "name": space.name,
        "version": space.version,
        "parameters": [_parameter_to_dict(p) for p in space.parameters],
    }


def load_space(path) -> DesignSpace:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: not valid JSON ({exc})") from exc
    return space_from_dict(data)


def save_space(space: DesignSpace, path) -> None:
    Path(path).write_text(
        json.dumps(space_to_dict(space), indent=2) + "\n", encoding="utf-8"
    )
