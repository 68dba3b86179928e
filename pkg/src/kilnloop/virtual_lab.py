"""A synthetic experiment oracle for desk-scale closed-loop verification.

Nothing here is chemistry. The capacity surface below is an invented,
fully documented ground truth whose coefficients were calibrated so that
capacities land in a realistic 160-233 mAh/g window, the habitual coating
cluster at 430 C sits about 20 mAh/g below the true coating optimum at
290 C, and the highest nickel fraction wins. The history generator bakes
in the classic human pathologies: one composition heavily favoured, a
near-Gaussian spread of calcination temperatures, a fixated coating
temperature, and silent censoring of low-capacity runs.

Ground-truth surface, verbatim:

    f(p) = -110
           + 360 * ni_fraction
           - 0.002 * (calcination_temp_C - (1650 - 1000 * ni_fraction))**2
           - 0.001 * (coating_temp_C - 290)**2
           + 1200 * d_zr_wtfrac - 120000 * d_zr_wtfrac**2
           + 1000 * d_nb_wtfrac - 100000 * d_nb_wtfrac**2

    measured = f(p) + Normal(0, noise_sigma**2)

Measurements below censor_threshold are, with probability
censor_probability, recorded as status partial with the capacity absent,
mimicking experiments abandoned before characterization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset import Dataset, ExperimentRecord
from .design_space import (
    DesignPoint,
    DesignSpace,
    GridCodec,
    snap_to_grid,
    space_from_dict,
    validate_point,
)
from .errors import InvalidArgument

_BENCHMARK_CACHE = None

# Parameter names the biased history generator relies on.
_BENCHMARK_NAMES = (
    "ni_fraction",
    "calcination_temp_C",
    "coating_temp_C",
    "d_zr_wtfrac",
    "d_nb_wtfrac",
    "atmosphere",
)


def benchmark_space() -> DesignSpace:
    """The 39,123-point benchmark schema shipped with the package."""
    global _BENCHMARK_CACHE
    if _BENCHMARK_CACHE is None:
        text = resources.files("kilnloop.data").joinpath("benchmark_space.json").read_text("utf-8")
        _BENCHMARK_CACHE = space_from_dict(json.loads(text))
    return _BENCHMARK_CACHE


@dataclass(frozen=True)
class OracleConfig:
    space: DesignSpace = field(default_factory=benchmark_space)
    noise_sigma: float = 1.0
    censor_threshold: float = 210.0
    censor_probability: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise InvalidArgument("noise_sigma must be finite and >= 0")
        if not 0.0 <= self.censor_probability <= 1.0:
            raise InvalidArgument("censor_probability must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "noise_sigma": self.noise_sigma,
            "censor_threshold": self.censor_threshold,
            "censor_probability": self.censor_probability,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OracleConfig":
        return cls(**d)


def load_oracle_config(path) -> OracleConfig:
    return OracleConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def true_capacity(point: DesignPoint) -> float:
    """Noise-free surface value; see the module docstring for the formula."""
    ni = point["ni_fraction"]
    t_cal = point["calcination_temp_C"]
    t_coat = point["coating_temp_C"]
    d_zr = point["d_zr_wtfrac"]
    d_nb = point["d_nb_wtfrac"]
    return (
        -110.0
        + 360.0 * ni
        - 0.002 * (t_cal - (1650.0 - 1000.0 * ni)) ** 2
        - 0.001 * (t_coat - 290.0) ** 2
        + 1200.0 * d_zr
        - 120000.0 * d_zr**2
        + 1000.0 * d_nb
        - 100000.0 * d_nb**2
    )


def _surface_columns(by_name: dict) -> np.ndarray:
    ni = by_name["ni_fraction"]
    t_cal = by_name["calcination_temp_C"]
    t_coat = by_name["coating_temp_C"]
    d_zr = by_name["d_zr_wtfrac"]
    d_nb = by_name["d_nb_wtfrac"]
    return (
        -110.0
        + 360.0 * ni
        - 0.002 * (t_cal - (1650.0 - 1000.0 * ni)) ** 2
        - 0.001 * (t_coat - 290.0) ** 2
        + 1200.0 * d_zr
        - 120000.0 * d_zr**2
        + 1000.0 * d_nb
        - 100000.0 * d_nb**2
    )


def measure(
    config: OracleConfig, point: DesignPoint, draw_seed: int, record_id: str | None = None
) -> ExperimentRecord:
    """Simulate one experiment at an on-grid point.

    Deterministic per (config, point, draw_seed). Below the censoring
    threshold the run is, with the configured probability, discontinued:
    status partial with the capacity absent.
    """
    result = validate_point(config.space, point)
    if not result.ok:
        raise InvalidArgument(f"invalid point: {result.violations[0]}")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, draw_seed]))
    noise = rng.normal(0.0, config.noise_sigma) if config.noise_sigma > 0 else 0.0
    censor_draw = rng.random()
    capacity = true_capacity(point) + noise
    rec_id = record_id if record_id is not None else f"vlab_{draw_seed}"
    if capacity < config.censor_threshold and censor_draw < config.censor_probability:
        return ExperimentRecord(
            id=rec_id,
            point=point,
            discharge_capacity=None,
            status="partial",
            notes="discontinued before capacity measurement",
        )
    return ExperimentRecord(
        id=rec_id,
        point=point,
        discharge_capacity=float(capacity),
        status="complete",
    )


def true_optimum(config: OracleConfig):
    """Exact grid argmax of the noise-free surface, by full enumeration."""
    codec = GridCodec(config.space)
    K = codec.all_grid_indices(limit=10_000_000)
    by_name = {}
    j = 0
    for p in config.space.parameters:
        kind = p.kind
        if hasattr(kind, "levels"):
            j += 1
            continue
        if hasattr(kind, "step"):
            by_name[p.name] = kind.min + kind.step * K[:, j]
            j += 1
        else:
            by_name[p.name] = np.full(K.shape[0], float(kind.value))
    values = _surface_columns(by_name)
    best = int(np.argmax(values))
    return codec.point_from_indices(K[best]), float(values[best])


def generate_history(config: OracleConfig, n: int, gen_seed: int) -> Dataset:
    """Draw n records from the deliberately biased sampler.

    ni_fraction is 0.92 with probability 0.95, else 0.94; calcination
    temperature is Normal(730, 15^2) snapped to grid; coating temperature is
    the habitual 430 with probability 0.8, else uniform over the grid;
    the Zr dopant is uniform on the 0..0.005 sub-grid. Each point is then
    measured with a per-index draw seed, so low performers get censored at
    the configured rate.
    """
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    space = config.space
    if space.names() != _BENCHMARK_NAMES:
        raise InvalidArgument(
            "the biased history generator requires the benchmark schema "
            f"{list(_BENCHMARK_NAMES)}"
        )
    t_coat_grid = space.parameter("coating_temp_C").grid()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, gen_seed]))
    records = []
    for i in range(n):
        ni = 0.92 if rng.random() < 0.95 else 0.94
        t_cal_raw = rng.normal(730.0, 15.0)
        if rng.random() < 0.8:
            t_coat = 430.0
        else:
            t_coat = t_coat_grid[int(rng.integers(0, len(t_coat_grid)))]
        d_zr = 0.0005 * int(rng.integers(0, 11))
        point = snap_to_grid(
            space,
            DesignPoint(
                {
                    "ni_fraction": ni,
                    "calcination_temp_C": t_cal_raw,
                    "coating_temp_C": t_coat,
                    "d_zr_wtfrac": d_zr,
                    "d_nb_wtfrac": 0.002,
                    "atmosphere": "Air",
                }
            ),
        )
        draw_seed = gen_seed * 1_000_003 + i
        records.append(measure(config, point, draw_seed, record_id=f"h{i:04d}"))
    return Dataset(space=space, records=tuple(records))
