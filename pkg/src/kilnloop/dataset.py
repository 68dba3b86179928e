"""Experiment records: CSV ingestion, cleaning, splits, and bias diagnostics.

Records keep their full history, including failed and censored trials; a
"capacity-bearing" record is one whose discharge capacity was actually
measured. Cleaning produces a training view and never touches the capacity
field. The bias report surfaces the classic pathologies of heuristically
grown datasets: clustering on a favourite value, parameters frozen at one
setting, and silently censored low performers.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .design_space import (
    Categorical,
    Continuous,
    DesignPoint,
    DesignSpace,
    Fixed,
    snap_to_grid,
    space_from_dict,
    space_to_dict,
    validate_point,
)
from .errors import (
    EmptyDataset,
    InsufficientData,
    InvalidArgument,
    ParseError,
    SchemaMismatch,
)

CAPACITY_COLUMN = "discharge_capacity_mAh_g"
STATUSES = ("complete", "partial", "failed")
PROVENANCES = ("historical", "proposed")

# Parameters fixated this hard get a near-fixation warning; the one_value
# boolean itself stays exact equality to 1.
NEAR_FIXATION_THRESHOLD = 0.95
# |skewness| above this raises the skewed flag in reports.
SKEW_FLAG_THRESHOLD = 1.0


@dataclass(frozen=True)
class ExperimentRecord:
    """One synthesis trial; the capacity field may be absent (censored)."""

    id: str
    point: DesignPoint
    discharge_capacity: float | None
    status: str
    provenance: str = "historical"
    iteration: int | None = None
    notes: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}, got {self.status!r}")
        if self.status == "complete":
            if self.discharge_capacity is None or not self.discharge_capacity > 0:
                raise ValueError(
                    f"complete record {self.id!r} needs a positive capacity, "
                    f"got {self.discharge_capacity!r}"
                )
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if self.provenance == "proposed":
            if not isinstance(self.iteration, int) or self.iteration < 1:
                raise ValueError("proposed records carry an iteration >= 1")
        elif self.iteration is not None:
            raise ValueError("historical records carry no iteration")

    @property
    def capacity_present(self) -> bool:
        return self.discharge_capacity is not None


@dataclass(frozen=True)
class Dataset:
    space: DesignSpace
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate record ids: {dupes}")

    def __len__(self) -> int:
        return len(self.records)

    def capacity_bearing(self) -> tuple:
        return tuple(r for r in self.records if r.capacity_present)


@dataclass(frozen=True)
class IngestIssue:
    row: int
    column: str | None
    message: str

    def __str__(self) -> str:
        where = f"row {self.row}"
        if self.column:
            where += f", column {self.column!r}"
        return f"{where}: {self.message}"


def _required_columns(space: DesignSpace) -> tuple:
    return ("id", "status", CAPACITY_COLUMN) + space.names()


def _parse_status(cell: str, row: int) -> str | None:
    token = cell.strip().lower()
    if token == "":
        return None
    if token not in STATUSES:
        raise ParseError(row, "status", f"expected one of {STATUSES}, got {cell!r}")
    return token


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(row, column, f"not a number: {cell!r}") from None


def ingest_csv(path, space: DesignSpace):
    """Read experiment records from CSV.

    Returns (Dataset, issues). Unparseable cells raise ParseError; rows whose
    present values fail validation are excluded and reported as issues; rows
    with empty design cells are kept (with the field absent) and flagged so a
    later clean() can discard or impute them. An empty capacity cell means the
    outcome was never measured: the record becomes partial unless the status
    column says failed.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        required = _required_columns(space)
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaMismatch(f"{path}: missing required column(s) {missing}")
        allowed = set(required) | {"notes"}
        unexpected = [c for c in header if c not in allowed]
        if unexpected:
            raise SchemaMismatch(f"{path}: unexpected column(s) {unexpected}")
        col = {name: header.index(name) for name in header}

        records = []
        issues = []
        seen_ids = set()
        n_rows = 0
        for line_no, raw in enumerate(reader, start=2):
            if not raw or all(cell.strip() == "" for cell in raw):
                continue
            n_rows += 1
            if len(raw) != len(header):
                raise ParseError(line_no, "<row>", f"expected {len(header)} cells, got {len(raw)}")

            rec_id = raw[col["id"]].strip()
            if not rec_id:
                issues.append(IngestIssue(line_no, "id", "empty id; row skipped"))
                continue
            status = _parse_status(raw[col["status"]], line_no)
            cap_cell = raw[col[CAPACITY_COLUMN]].strip()
            capacity = None if cap_cell == "" else _parse_float(cap_cell, line_no, CAPACITY_COLUMN)

            values = {}
            missing_fields = []
            for p in space.parameters:
                cell = raw[col[p.name]].strip()
                if cell == "":
                    missing_fields.append(p.name)
                    continue
                if isinstance(p.kind, Continuous) or (
                    isinstance(p.kind, Fixed) and p.kind.is_numeric
                ):
                    values[p.name] = _parse_float(cell, line_no, p.name)
                else:
                    values[p.name] = cell
            point = DesignPoint(values)

            result = validate_point(space, point)
            bad = [v for v in result.violations if v.rule != "missing"]
            if bad:
                first = bad[0]
                issues.append(
                    IngestIssue(line_no, first.parameter, f"{first.rule}: {first.detail}; row skipped")
                )
                continue
            for name in missing_fields:
                issues.append(
                    IngestIssue(line_no, name, "empty cell; field absent pending clean()")
                )

            # Reconcile status with the capacity cell.
            if status == "failed":
                if capacity is not None:
                    issues.append(
                        IngestIssue(line_no, CAPACITY_COLUMN, "capacity on failed row ignored")
                    )
                    capacity = None
            elif capacity is None:
                status = "partial"
            elif status is None:
                status = "complete"

            notes_cell = raw[col["notes"]].strip() if "notes" in col else ""
            if rec_id in seen_ids:
                issues.append(IngestIssue(line_no, "id", f"duplicate id {rec_id!r}; row skipped"))
                continue
            try:
                rec = ExperimentRecord(
                    id=rec_id,
                    point=point,
                    discharge_capacity=capacity,
                    status=status,
                    notes=notes_cell or None,
                )
            except ValueError as exc:
                issues.append(IngestIssue(line_no, None, f"{exc}; row skipped"))
                continue
            seen_ids.add(rec_id)
            records.append(rec)

        if n_rows == 0:
            raise EmptyDataset(f"{path}: no data rows")

    return Dataset(space=space, records=tuple(records)), issues


def write_csv(data: Dataset, path) -> None:
    """Write records in the ingestion CSV format (empty cell = absent)."""
    path = Path(path)
    names = data.space.names()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "status", CAPACITY_COLUMN, *names, "notes"])
        for r in data.records:
            cap = "" if r.discharge_capacity is None else repr(r.discharge_capacity)
            row = [r.id, r.status, cap]
            for name in names:
                v = r.point.get(name)
                row.append("" if v is None else (repr(v) if not isinstance(v, str) else v))
            row.append(r.notes or "")
            writer.writerow(row)


def _point_complete(space: DesignSpace, point: DesignPoint) -> bool:
    return all(name in point for name in space.names())


def clean(data: Dataset, policy: str) -> Dataset:
    """Produce a training view per the stated incomplete-entry policy.

    discard_incomplete drops records with absent capacity (and records whose
    points still have absent fields); impute_median fills absent continuous
    design fields with the per-parameter median of present values, snapped to
    grid, and keeps capacity-absent records. Capacity itself is never imputed
    or altered under either policy.
    """
    if policy == "discard_incomplete":
        kept = tuple(
            r
            for r in data.records
            if r.capacity_present and _point_complete(data.space, r.point)
        )
    elif policy == "impute_median":
        medians = {}
        for p in data.space.parameters:
            if not isinstance(p.kind, Continuous):
                continue
            present = [r.point[p.name] for r in data.records if p.name in r.point]
            if present:
                snapped = snap_to_grid(data.space, DesignPoint({p.name: statistics.median(present)}))
                medians[p.name] = snapped[p.name]
        kept_list = []
        for r in data.records:
            values = r.point.values
            dropped = False
            for p in data.space.parameters:
                if p.name in values:
                    continue
                if isinstance(p.kind, Continuous):
                    if p.name not in medians:
                        dropped = True
                        break
                    values[p.name] = medians[p.name]
                elif isinstance(p.kind, Fixed):
                    values[p.name] = p.kind.value
                else:
                    dropped = True  # no defensible imputation for categorical
                    break
            if not dropped:
                kept_list.append(replace(r, point=DesignPoint(values)))
        kept = tuple(kept_list)
    else:
        raise InvalidArgument(
            f"policy must be 'discard_incomplete' or 'impute_median', got {policy!r}"
        )
    if not kept:
        raise EmptyDataset(f"no record survives policy {policy!r}")
    return Dataset(space=data.space, records=kept)


def split(data: Dataset, test_fraction: float, seed: int):
    """Deterministic train/test split over capacity-bearing records."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgument(f"test_fraction must be in (0, 1), got {test_fraction}")
    bearing = data.capacity_bearing()
    n = len(bearing)
    if n < 2:
        raise InsufficientData(f"need at least 2 capacity-bearing records, have {n}")
    n_test = int(np.floor(n * test_fraction + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(int(i) for i in order[:n_test])
    train = tuple(r for i, r in enumerate(bearing) if i not in test_idx)
    test = tuple(r for i, r in enumerate(bearing) if i in test_idx)
    return (
        Dataset(space=data.space, records=train),
        Dataset(space=data.space, records=test),
    )


# ---------------------------------------------------------------------------
# Bias report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasEntry:
    name: str
    count: int
    bin_edges: tuple      # numeric histograms; empty for labelled ones
    bin_labels: tuple     # categorical / fixed-string histograms; else empty
    counts: tuple
    skewness: float
    mode_fraction: float
    one_value: bool


@dataclass(frozen=True)
class BiasReport:
    entries: tuple
    subgroup_counts: dict
    censoring_rate: float

    def entry(self, name: str) -> BiasEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def fixated(self) -> tuple:
        return tuple(e.name for e in self.entries if e.one_value)

    @property
    def near_fixated(self) -> tuple:
        return tuple(
            e.name for e in self.entries if e.mode_fraction > NEAR_FIXATION_THRESHOLD
        )

    @property
    def skewed(self) -> tuple:
        return tuple(
            e.name for e in self.entries if abs(e.skewness) > SKEW_FLAG_THRESHOLD
        )

    def to_json_dict(self) -> dict:
        return {
            "parameters": [
                {
                    "name": e.name,
                    "count": e.count,
                    "histogram": {
                        "bin_edges": list(e.bin_edges),
                        "bin_labels": list(e.bin_labels),
                        "counts": list(e.counts),
                    },
                    "skewness": e.skewness,
                    "mode_fraction": e.mode_fraction,
                    "one_value": e.one_value,
                }
                for e in self.entries
            ],
            "subgroup_counts": dict(self.subgroup_counts),
            "censoring_rate": self.censoring_rate,
            "fixated": list(self.fixated),
            "near_fixated": list(self.near_fixated),
            "skewed": list(self.skewed),
        }


def _sample_skewness(values: np.ndarray) -> float:
    # Bias-uncorrected third standardized moment; 0 for zero-variance samples.
    m = values.mean()
    d = values - m
    m2 = float(np.mean(d * d))
    if m2 <= 0.0:
        return 0.0
    m3 = float(np.mean(d * d * d))
    return m3 / m2**1.5


# Continuous parameters with at most this many grid values double as subgroup
# keys (composition-like settings with a handful of levels).
_SUBGROUP_MAX_CARDINALITY = 10


def bias_report(data: Dataset, bins: int, subgroup_keys=None) -> BiasReport:
    """Per-parameter distribution diagnostics plus censoring rate.

    Histograms for continuous parameters are equal-width over the schema's
    [min, max] with `bins` bins. mode_fraction is the share of records at the
    single most frequent grid value or level; one_value is exact fixation.
    """
    if bins < 1:
        raise InvalidArgument(f"bins must be >= 1, got {bins}")
    if len(data.records) == 0:
        raise EmptyDataset("bias_report needs at least one record")

    if subgroup_keys is None:
        subgroup_keys = [
            p.name
            for p in data.space.parameters
            if isinstance(p.kind, Categorical)
            or (
                isinstance(p.kind, Continuous)
                and p.kind.cardinality() <= _SUBGROUP_MAX_CARDINALITY
            )
        ]

    entries = []
    for p in data.space.parameters:
        present = [r.point[p.name] for r in data.records if p.name in r.point]
        count = len(present)
        kind = p.kind
        if count == 0:
            entries.append(
                BiasEntry(p.name, 0, (), (), (), 0.0, 0.0, False)
            )
            continue
        if isinstance(kind, Continuous):
            arr = np.asarray(present, dtype=np.float64)
            counts, edges = np.histogram(arr, bins=bins, range=(kind.min, kind.max))
            idx = [kind.index_of(v) for v in present]
            # Off-grid values cannot occur in a validated dataset but guard anyway.
            idx = [i if i is not None else -1 for i in idx]
            mode_count = max(np.bincount(np.asarray(idx) + 1)[1:].max(), 0) if idx else 0
            mode_fraction = mode_count / count
            skew = _sample_skewness(arr)
            entries.append(
                BiasEntry(
                    p.name,
                    count,
                    tuple(float(e) for e in edges),
                    (),
                    tuple(int(c) for c in counts),
                    skew,
                    float(mode_fraction),
                    mode_fraction == 1.0,
                )
            )
        elif isinstance(kind, Categorical):
            level_counts = [sum(1 for v in present if v == level) for level in kind.levels]
            mode_fraction = max(level_counts) / count
            entries.append(
                BiasEntry(
                    p.name,
                    count,
                    (),
                    kind.levels,
                    tuple(level_counts),
                    0.0,
                    float(mode_fraction),
                    mode_fraction == 1.0,
                )
            )
        else:  # Fixed
            if kind.is_numeric:
                entries.append(
                    BiasEntry(
                        p.name,
                        count,
                        (float(kind.value), float(kind.value)),
                        (),
                        (count,),
                        0.0,
                        1.0,
                        True,
                    )
                )
            else:
                entries.append(
                    BiasEntry(p.name, count, (), (str(kind.value),), (count,), 0.0, 1.0, True)
                )

    subgroup_counts = {}
    for name in subgroup_keys:
        spec = data.space.parameter(name)
        values = [r.point[name] for r in data.records if name in r.point]
        if isinstance(spec.kind, Categorical):
            for level in spec.kind.levels:
                subgroup_counts[f"{name}={level}"] = sum(1 for v in values if v == level)
        else:
            for gv in spec.grid():
                key = f"{name}={gv!r}" if not isinstance(gv, str) else f"{name}={gv}"
                subgroup_counts[key] = sum(1 for v in values if v == gv)

    n = len(data.records)
    censored = sum(1 for r in data.records if not r.capacity_present)
    return BiasReport(
        entries=tuple(entries),
        subgroup_counts=subgroup_counts,
        censoring_rate=censored / n,
    )


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def record_to_dict(r: ExperimentRecord) -> dict:
    return {
        "id": r.id,
        "status": r.status,
        "discharge_capacity": r.discharge_capacity,
        "provenance": r.provenance,
        "iteration": r.iteration,
        "notes": r.notes,
        "point": r.point.values,
    }


def record_from_dict(d: dict) -> ExperimentRecord:
    return ExperimentRecord(
        id=d["id"],
        point=DesignPoint(d["point"]),
        discharge_capacity=d["discharge_capacity"],
        status=d["status"],
        provenance=d.get("provenance", "historical"),
        iteration=d.get("iteration"),
        notes=d.get("notes"),
    )


def dataset_to_dict(data: Dataset) -> dict:
    return {
        "format": "kilnloop-dataset",
        "format_version": 1,
        "space": space_to_dict(data.space),
        "records": [record_to_dict(r) for r in data.records],
    }


def dataset_from_dict(d: dict) -> Dataset:
    if d.get("format") != "kilnloop-dataset":
        raise SchemaMismatch("not a kilnloop dataset document")
    space = space_from_dict(d["space"])
    return Dataset(space=space, records=tuple(record_from_dict(r) for r in d["records"]))


def save_dataset(data: Dataset, path) -> None:
    Path(path).write_text(
        json.dumps(dataset_to_dict(data), indent=2) + "\n", encoding="utf-8"
    )


def load_dataset(path) -> Dataset:
    return dataset_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
