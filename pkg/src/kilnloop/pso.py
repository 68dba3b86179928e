"""Particle swarm maximization of predicted capacity over the design grid.

Particles move in the continuous box of the free parameters (categorical
levels ride as 0..L-1 indices and are rounded at evaluation). Fitness is
the surrogate prediction at the snapped grid point with fixed values
injected. An archive keeps the predicted value of every distinct snapped
point visited, so the returned top-k is honest about distinctness; a
brute-force enumerator over the same grid serves as the verification
oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design_space import DesignPoint, DesignSpace, GridCodec, snap_to_grid
from .errors import InfeasibleSpace, InvalidArgument, SpaceMismatch
from .surrogate import TrainedModel


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 100
    n_iterations: int = 1000
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    v_max_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1 or self.n_iterations < 1:
            raise InvalidArgument("particle and iteration counts must be >= 1")
        if not 0.0 < self.inertia < 1.0:
            raise InvalidArgument(f"inertia must be in (0, 1), got {self.inertia}")
        if self.cognitive <= 0.0 or self.social <= 0.0:
            raise InvalidArgument("cognitive and social coefficients must be positive")
        if not 0.0 < self.v_max_fraction <= 1.0:
            raise InvalidArgument("v_max_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "n_particles": self.n_particles,
            "n_iterations": self.n_iterations,
            "inertia": self.inertia,
            "cognitive": self.cognitive,
            "social": self.social,
            "v_max_fraction": self.v_max_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PsoConfig":
        return cls(**d)


@dataclass(frozen=True)
class Candidate:
    point: DesignPoint
    predicted_capacity: float
    rank: int


def _check_spaces(model: TrainedModel, space: DesignSpace) -> None:
    if model.space != space:
        raise SpaceMismatch(
            f"model was trained on {model.space.name!r} v{model.space.version}, "
            f"got {space.name!r} v{space.version}"
        )


def _rank_archive(archive: dict, codec: GridCodec, k: int, exclude_keys) -> list:
    items = [(key, value) for key, value in archive.items() if key not in exclude_keys]
    items.sort(key=lambda kv: (-kv[1], kv[0]))
    return [
        Candidate(point=codec.point_from_indices(key), predicted_capacity=value, rank=i + 1)
        for i, (key, value) in enumerate(items[:k])
    ]


def optimize(
    model: TrainedModel,
    space: DesignSpace,
    config: PsoConfig,
    k: int = 10,
    exclude_points=(),
) -> list:
    """Run the swarm and return the top-k distinct on-grid candidates.

    Points listed in exclude_points (compared after snapping) are withheld
    from the ranking; the next-best distinct points take their place.
    Deterministic for a fixed config seed.
    """
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    _check_spaces(model, space)
    codec = GridCodec(space)
    if any(c < 1 for c in codec.cardinalities):
        raise InfeasibleSpace("a free parameter has an empty grid")

    exclude_keys = {
        codec.indices_of_point(snap_to_grid(space, p)) for p in exclude_points
    }

    if codec.n_free == 0:
        indices = np.zeros((1, 0), dtype=np.int64)
        value = float(model.predict_features(codec.encode_indices(indices))[0])
        archive = {(): value}
        return _rank_archive(archive, codec, k, exclude_keys)

    dims = codec.n_free
    box_lo = codec.box_low
    box_hi = codec.box_high
    v_max = config.v_max_fraction * (box_hi - box_lo)

    # One generator per particle so draws are independent of evaluation order.
    streams = [
        np.random.default_rng(child)
        for child in np.random.SeedSequence(config.seed).spawn(config.n_particles)
    ]
    positions = np.stack([rng.uniform(box_lo, box_hi) for rng in streams])
    velocities = np.stack([rng.uniform(-v_max, v_max) for rng in streams])

    archive: dict = {}

    def evaluate(X: np.ndarray) -> np.ndarray:
        K = codec.snap_to_indices(X)
        values = model.predict_features(codec.encode_indices(K))
        for row, v in zip(K, values):
            archive[tuple(int(i) for i in row)] = float(v)
        return values

    fitness = evaluate(positions)
    pbest_pos = positions.copy()
    pbest_fit = fitness.copy()
    g = int(np.argmax(fitness))
    gbest_pos = positions[g].copy()
    gbest_fit = float(fitness[g])

    for _ in range(config.n_iterations):
        r1 = np.stack([rng.random(dims) for rng in streams])
        r2 = np.stack([rng.random(dims) for rng in streams])
        velocities = (
            config.inertia * velocities
            + config.cognitive * r1 * (pbest_pos - positions)
            + config.social * r2 * (gbest_pos - positions)
        )
        np.clip(velocities, -v_max, v_max, out=velocities)
        positions = np.clip(positions + velocities, box_lo, box_hi)
        fitness = evaluate(positions)

        improved = fitness > pbest_fit
        pbest_pos[improved] = positions[improved]
        pbest_fit[improved] = fitness[improved]
        g = int(np.argmax(fitness))
        if float(fitness[g]) > gbest_fit:
            gbest_fit = float(fitness[g])
            gbest_pos = positions[g].copy()

    return _rank_archive(archive, codec, k, exclude_keys)


def brute_force(model: TrainedModel, space: DesignSpace, k: int, limit: int) -> list:
    """Evaluate every grid point; exact top-k, ties lexicographic."""
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    _check_spaces(model, space)
    codec = GridCodec(space)
    K = codec.all_grid_indices(limit)
    values = model.predict_features(codec.encode_indices(K))
    order = np.argsort(-values, kind="stable")[:k]
    return [
        Candidate(
            point=codec.point_from_indices(K[int(i)]),
            predicted_capacity=float(values[int(i)]),
            rank=rank + 1,
        )
        for rank, i in enumerate(order)
    ]


def write_candidates_csv(candidates, space: DesignSpace, path, iteration: int | None = None) -> None:
    """Proposal sheet: rank, predicted capacity, then one column per parameter."""
    names = space.names()
    header = ["rank", "predicted_capacity", *names]
    if iteration is not None:
        header = ["iteration", *header]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for c in candidates:
            row = [c.rank, repr(c.predicted_capacity)]
            for name in names:
                v = c.point[name]
                row.append(v if isinstance(v, str) else repr(v))
            if iteration is not None:
                row = [iteration, *row]
            writer.writerow(row)
