"""Run configuration: one strict JSON document drives the whole pipeline.

Schema (all keys optional; unknown keys are rejected)::

    {
      "gen":        GenConfig (see evprice.model),
      "stations":   [{"location": [x, y], "capacity": c | [c_0, ..., c_tau-1]}, ...],
      "solver":     {"step", "max_iters", "tolerance", "update_mode", "step_schedule"},
      "pricing":    {"buckets": {...}, "aggregation": {...}, "heuristic": "H1"|"H2",
                     "beta": float},
      "simulation": {"num_scenarios", "eval_days", "seed", "eval_seed_offset",
                     "policies", "oracle", "oracle_budget", "workers"},
      "output_dir": "out",
      "verbose_trace": false
    }

Station ids are their positions in the list.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dual import SolverParams
from .model import ConfigError, GenConfig, StationProfile, config_error
from .pricing import Aggregation, BucketScheme

_strict = ConfigDict(extra="forbid", frozen=True)

DEFAULT_STATION_LOCATIONS = [
    (2.0, 2.0), (5.0, 2.0), (8.0, 2.0),
    (2.0, 5.0), (5.0, 5.0), (8.0, 5.0),
    (2.0, 8.0), (5.0, 8.0), (8.0, 8.0),
    (5.0, 6.5),
]
DEFAULT_STATION_CAPACITY = 3.0


class StationSpec(BaseModel):
    model_config = _strict
    location: tuple[float, float]
    capacity: Union[float, list[float]] = DEFAULT_STATION_CAPACITY

    @model_validator(mode="after")
    def _check(self):
        caps = self.capacity if isinstance(self.capacity, list) else [self.capacity]
        if any(c < 0 for c in caps):
            raise ValueError("capacity entries must be >= 0")
        return self

    def profile(self, station_id: int, horizon: int) -> StationProfile:
        if isinstance(self.capacity, list):
            if len(self.capacity) != horizon:
                raise ConfigError(f"station {station_id}: capacity list length must equal "
                                  f"horizon {horizon}", key=f"stations.{station_id}.capacity")
            caps = tuple(self.capacity)
        else:
            caps = (float(self.capacity),) * horizon
        return StationProfile(station_id, self.location, caps)


def _default_stations() -> list[StationSpec]:
    return [StationSpec(location=loc) for loc in DEFAULT_STATION_LOCATIONS]


class PricingConfig(BaseModel):
    model_config = _strict
    buckets: Optional[BucketScheme] = None
    aggregation: Aggregation = Aggregation()
    heuristic: Literal["H1", "H2"] = "H2"
    beta: float = Field(default=0.5, ge=0)


class SimulationConfig(BaseModel):
    model_config = _strict
    num_scenarios: int = Field(default=200, ge=0)
    eval_days: int = Field(default=200, ge=0)
    seed: int = Field(default=0, ge=0)
    eval_seed_offset: int = Field(default=1_000_000, ge=1)
    policies: list[Literal["priced", "fcfs"]] = ["priced", "fcfs"]
    oracle: bool = False
    oracle_budget: int = Field(default=10**6, ge=1)
    workers: int = Field(default=1, ge=1)

    def train_seeds(self) -> list[int]:
        return [self.seed + k for k in range(self.num_scenarios)]

    def eval_seeds(self) -> list[int]:
        return [self.seed + self.eval_seed_offset + d for d in range(self.eval_days)]


class RunConfig(BaseModel):
    model_config = _strict
    gen: GenConfig = GenConfig()
    stations: list[StationSpec] = Field(default_factory=_default_stations, min_length=1)
    solver: SolverParams = SolverParams()
    pricing: PricingConfig = PricingConfig()
    simulation: SimulationConfig = SimulationConfig()
    output_dir: str = "out"
    verbose_trace: bool = False

    @model_validator(mode="after")
    def _fill_buckets(self):
        if self.pricing.buckets is None:
            scheme = BucketScheme.default_for(self.gen.horizon, self.gen.area.diagonal)
            object.__setattr__(self, "pricing", self.pricing.model_copy(update={"buckets": scheme}))
        return self

    def station_profiles(self) -> list[StationProfile]:
        return [s.profile(k, self.gen.horizon) for k, s in enumerate(self.stations)]

    def expanded(self) -> dict:
        """Defaults-expanded JSON form."""
        return self.model_dump(mode="json")

    def canonical(self) -> dict:
        """Expanded form without execution-only settings (output path, worker count)."""
        doc = self.expanded()
        doc.pop("output_dir", None)
        doc["simulation"].pop("workers", None)
        return doc

    def config_hash(self) -> str:
        """SHA-256 of the canonical config; output path and worker count don't count."""
        doc = self.canonical()
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       policies: Optional[list[str]] = None, oracle: Optional[bool] = None,
                       verbose_trace: Optional[bool] = None) -> "RunConfig":
        doc = self.expanded()
        if seed is not None:
            doc["simulation"]["seed"] = seed
        if policies is not None:
            doc["simulation"]["policies"] = policies
        if oracle is not None:
            doc["simulation"]["oracle"] = oracle
        if output_dir is not None:
            doc["output_dir"] = output_dir
        if verbose_trace is not None:
            doc["verbose_trace"] = verbose_trace
        return parse_config(doc)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise config_error(exc) from None
    cfg.station_profiles()  # per-slot capacity lists must match the horizon
    return cfg


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """Parse and validate a run config; ``None`` gives the documented defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", key=str(path)) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", key=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    return parse_config(data)
