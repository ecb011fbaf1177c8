"""Domain types, derived quantities and seeded scenario generation.

Time is slot-indexed from 0. An EV with arrival ``a`` and departure ``d`` can
charge in the half-open window ``a <= t < d`` (``d - a`` slots), which makes
``energy <= (d - a) * rate`` exactly the schedulability condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Annotated, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

PRNG_ALGORITHM = "numpy.random.PCG64"
MAX_RESAMPLE = 1000


class DomainError(ValueError):
    """An operation was called outside its domain."""


class ConfigError(ValueError):
    """A configuration document failed validation.

    ``key`` names the offending field as a dotted path when known.
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvType:
    id: int
    arrival: int
    departure: int
    energy: float
    rate: float
    location: tuple[float, float]
    elasticity: float

    @property
    def slots_needed(self) -> int:
        return energy_slots(self.energy, self.rate)

    @property
    def window(self) -> range:
        return range(self.arrival, self.departure)

    def validate(self, horizon: int) -> None:
        if not (0 <= self.arrival < self.departure <= horizon):
            raise DomainError(
                f"EV {self.id}: need 0 <= arrival < departure <= {horizon}, "
                f"got ({self.arrival}, {self.departure})"
            )
        if not self.rate > 0:
            raise DomainError(f"EV {self.id}: rate must be positive")
        if self.energy < 0 or self.elasticity < 0:
            raise DomainError(f"EV {self.id}: energy and elasticity must be >= 0")
        if self.energy > (self.departure - self.arrival) * self.rate:
            raise DomainError(f"EV {self.id}: energy need not schedulable in its window")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "arrival": self.arrival,
            "departure": self.departure,
            "energy": self.energy,
            "rate": self.rate,
            "location": list(self.location),
            "elasticity": self.elasticity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvType":
        return cls(
            id=int(d["id"]),
            arrival=int(d["arrival"]),
            departure=int(d["departure"]),
            energy=float(d["energy"]),
            rate=float(d["rate"]),
            location=(float(d["location"][0]), float(d["location"][1])),
            elasticity=float(d["elasticity"]),
        )


@dataclass(frozen=True)
class StationProfile:
    id: int
    location: tuple[float, float]
    capacity: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacity", tuple(float(c) for c in self.capacity))
        if any(c < 0 for c in self.capacity):
            raise DomainError(f"station {self.id}: capacity entries must be >= 0")

    def with_capacity(self, capacity: Sequence[float]) -> "StationProfile":
        return StationProfile(self.id, self.location, tuple(capacity))

    def to_dict(self) -> dict:
        return {"id": self.id, "location": list(self.location), "capacity": list(self.capacity)}

    @classmethod
    def from_dict(cls, d: dict) -> "StationProfile":
        return cls(int(d["id"]), (float(d["location"][0]), float(d["location"][1])),
                   tuple(d["capacity"]))


@dataclass(frozen=True)
class Instance:
    horizon: int
    stations: tuple[StationProfile, ...]
    evs: tuple[EvType, ...]

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "evs", tuple(self.evs))
        if self.horizon < 1:
            raise DomainError("horizon must be >= 1")
        if [s.id for s in self.stations] != list(range(len(self.stations))):
            raise DomainError("station ids must be 0..M-1 in order")
        if [ev.id for ev in self.evs] != list(range(len(self.evs))):
            raise DomainError("EV ids must be 0..N-1 in order")
        for s in self.stations:
            if len(s.capacity) != self.horizon:
                raise DomainError(f"station {s.id}: capacity length != horizon")
        for ev in self.evs:
            ev.validate(self.horizon)

    @property
    def n_evs(self) -> int:
        return len(self.evs)

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    def distances(self) -> np.ndarray:
        """|N| x |M| matrix of EV-target to station distances."""
        out = np.zeros((self.n_evs, self.n_stations))
        for i, ev in enumerate(self.evs):
            for j, st in enumerate(self.stations):
                out[i, j] = distance(ev.location, st.location)
        return out

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "stations": [s.to_dict() for s in self.stations],
            "evs": [ev.to_dict() for ev in self.evs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        return cls(int(d["horizon"]),
                   tuple(StationProfile.from_dict(s) for s in d["stations"]),
                   tuple(EvType.from_dict(e) for e in d["evs"]))


@dataclass(frozen=True)
class Scenario:
    seed: int
    evs: tuple[EvType, ...]
    capacities: Optional[tuple[tuple[float, ...], ...]] = None

    def stations_for(self, stations: Sequence[StationProfile]) -> tuple[StationProfile, ...]:
        """Station profiles with this scenario's sampled capacities applied."""
        if self.capacities is None:
            return tuple(stations)
        return tuple(s.with_capacity(c) for s, c in zip(stations, self.capacities))

    def instance(self, stations: Sequence[StationProfile], horizon: int) -> Instance:
        evs = tuple(
            EvType(k, ev.arrival, ev.departure, ev.energy, ev.rate, ev.location, ev.elasticity)
            for k, ev in enumerate(self.evs)
        )
        return Instance(horizon, self.stations_for(stations), evs)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "prng": PRNG_ALGORITHM,
            "n_evs": len(self.evs),
            "evs": [ev.to_dict() for ev in self.evs],
            "capacities": None if self.capacities is None else [list(c) for c in self.capacities],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        caps = d.get("capacities")
        return cls(
            int(d["seed"]),
            tuple(EvType.from_dict(e) for e in d["evs"]),
            None if caps is None else tuple(tuple(float(x) for x in c) for c in caps),
        )


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------


def energy_slots(energy: float, rate: float) -> int:
    """Number of charging slots needed: ceil(energy / rate)."""
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate}")
    if energy < 0:
        raise DomainError(f"energy must be nonnegative, got {energy}")
    return math.ceil(energy / rate)


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def disutility(elasticity: float, dist: float) -> float:
    return elasticity * dist * dist


# ---------------------------------------------------------------------------
# Generator configuration
# ---------------------------------------------------------------------------

_strict = ConfigDict(extra="forbid", frozen=True)


class Constant(BaseModel):
    model_config = _strict
    family: Literal["constant"] = "constant"
    value: float

    def draw(self, rng: np.random.Generator) -> float:
        return self.value


class Uniform(BaseModel):
    model_config = _strict
    family: Literal["uniform"] = "uniform"
    low: float
    high: float

    @model_validator(mode="after")
    def _check(self):
        if self.high < self.low:
            raise ValueError("uniform requires low <= high")
        return self

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


class UniformInt(BaseModel):
    """Integer uniform on the closed range [low, high]."""

    model_config = _strict
    family: Literal["uniform_int"] = "uniform_int"
    low: int
    high: int

    @model_validator(mode="after")
    def _check(self):
        if self.high < self.low:
            raise ValueError("uniform_int requires low <= high")
        return self

    def draw(self, rng: np.random.Generator) -> float:
        return int(rng.integers(self.low, self.high + 1))


class Choice(BaseModel):
    model_config = _strict
    family: Literal["choice"] = "choice"
    values: list[float] = Field(min_length=1)

    def draw(self, rng: np.random.Generator) -> float:
        return float(self.values[int(rng.integers(len(self.values)))])


class TruncNormal(BaseModel):
    """Normal truncated to [low, high] by rejection."""

    model_config = _strict
    family: Literal["truncnormal"] = "truncnormal"
    mean: float
    std: float = Field(gt=0)
    low: float
    high: float

    @model_validator(mode="after")
    def _check(self):
        if self.high < self.low:
            raise ValueError("truncnormal requires low <= high")
        return self

    def draw(self, rng: np.random.Generator) -> float:
        for _ in range(MAX_RESAMPLE):
            x = float(rng.normal(self.mean, self.std))
            if self.low <= x <= self.high:
                return x
        raise ConfigError("truncnormal: truncation range has negligible mass")


class LogNormal(BaseModel):
    model_config = _strict
    family: Literal["lognormal"] = "lognormal"
    mean: float = 0.0
    sigma: float = Field(default=1.0, gt=0)

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.lognormal(self.mean, self.sigma))


ScalarDist = Annotated[
    Union[Constant, Uniform, UniformInt, Choice, TruncNormal, LogNormal],
    Field(discriminator="family"),
]


class UniformArea(BaseModel):
    model_config = _strict
    family: Literal["uniform"] = "uniform"


class GaussianSpot(BaseModel):
    """Isotropic Gaussian around ``center``, resampled until inside the area."""

    model_config = _strict
    family: Literal["gaussian"] = "gaussian"
    center: tuple[float, float]
    std: float = Field(gt=0)


LocationDist = Annotated[Union[UniformArea, GaussianSpot], Field(discriminator="family")]


class FixedCapacity(BaseModel):
    model_config = _strict
    family: Literal["fixed"] = "fixed"


class UniformCapacity(BaseModel):
    """Each slot's capacity drawn uniformly from [low, high] energy units."""

    model_config = _strict
    family: Literal["uniform"] = "uniform"
    low: float = Field(ge=0)
    high: float

    @model_validator(mode="after")
    def _check(self):
        if self.high < self.low:
            raise ValueError("uniform requires low <= high")
        return self


class UniformFactorCapacity(BaseModel):
    """Station's nominal per-slot capacity scaled by a per-slot U[low, high] factor."""

    model_config = _strict
    family: Literal["uniform_factor"] = "uniform_factor"
    low: float = Field(ge=0)
    high: float

    @model_validator(mode="after")
    def _check(self):
        if self.high < self.low:
            raise ValueError("uniform_factor requires low <= high")
        return self


CapacityDist = Annotated[
    Union[FixedCapacity, UniformCapacity, UniformFactorCapacity], Field(discriminator="family")
]


class Area(BaseModel):
    model_config = _strict
    x_min: float = 0.0
    x_max: float = 10.0
    y_min: float = 0.0
    y_max: float = 10.0

    @model_validator(mode="after")
    def _check(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("area must have positive width and height")
        return self

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    def contains(self, p: Sequence[float]) -> bool:
        return self.x_min <= p[0] <= self.x_max and self.y_min <= p[1] <= self.y_max


class GenConfig(BaseModel):
    """Distributions from which each scenario's EV types (and capacities) are drawn.

    ``arrival`` is a slot index (rounded), ``duration`` a slot count; the
    departure is ``min(arrival + duration, horizon)``. Arrival and duration
    defaults depend on ``horizon`` and are filled in when omitted.
    """

    model_config = _strict

    horizon: int = Field(default=48, ge=1)
    poisson_mean: float = Field(default=40.0, gt=0)
    area: Area = Area()
    arrival: Optional[ScalarDist] = None
    duration: Optional[ScalarDist] = None
    energy: ScalarDist = Uniform(low=4.0, high=16.0)
    rate: ScalarDist = Choice(values=[1.0, 2.0])
    location: LocationDist = UniformArea()
    elasticity: ScalarDist = LogNormal(mean=0.0, sigma=1.0)
    capacity: CapacityDist = FixedCapacity()

    @model_validator(mode="after")
    def _fill_horizon_defaults(self):
        tau = self.horizon
        if self.arrival is None:
            third = max(tau / 3.0 - 1.0, 0.0)
            object.__setattr__(self, "arrival", TruncNormal(
                mean=third / 2.0, std=max(third / 4.0, 0.5), low=0.0, high=third))
        if self.duration is None:
            object.__setattr__(self, "duration", UniformInt(
                low=max(1, tau // 6), high=max(1, tau // 2)))
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise config_error(exc, prefix="") from None

    @classmethod
    def load(cls, path) -> "GenConfig":
        import json

        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}", key=str(path)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        return cls.from_dict(data)


def config_error(exc: ValidationError, prefix: str = "") -> ConfigError:
    err = exc.errors()[0]
    key = ".".join(str(p) for p in err["loc"])
    if prefix:
        key = f"{prefix}.{key}" if key else prefix
    return ConfigError(f"invalid config at '{key}': {err['msg']}", key=key)


# ---------------------------------------------------------------------------
# Scenario sampling
# ---------------------------------------------------------------------------


def _draw_location(config: GenConfig, rng: np.random.Generator) -> tuple[float, float]:
    area = config.area
    loc = config.location
    if isinstance(loc, UniformArea):
        return (float(rng.uniform(area.x_min, area.x_max)),
                float(rng.uniform(area.y_min, area.y_max)))
    for _ in range(MAX_RESAMPLE):
        p = (float(rng.normal(loc.center[0], loc.std)), float(rng.normal(loc.center[1], loc.std)))
        if area.contains(p):
            return p
    raise ConfigError("location: gaussian spot has negligible mass inside the area", "location")


def _draw_ev(config: GenConfig, ev_id: int, rng: np.random.Generator) -> EvType:
    tau = config.horizon
    for _ in range(MAX_RESAMPLE):
        a = int(round(config.arrival.draw(rng)))
        a = min(max(a, 0), tau - 1)
        dur = int(round(config.duration.draw(rng)))
        d = min(a + max(dur, 1), tau)
        energy = config.energy.draw(rng)
        rate = config.rate.draw(rng)
        loc = _draw_location(config, rng)
        theta = config.elasticity.draw(rng)
        if rate <= 0 or energy < 0 or theta < 0:
            raise ConfigError("sampled rate must be > 0, energy and elasticity >= 0")
        if energy <= (d - a) * rate:
            return EvType(ev_id, a, d, float(energy), float(rate), loc, float(theta))
    raise ConfigError(
        f"could not sample a schedulable EV type in {MAX_RESAMPLE} tries; "
        "energy/duration/rate distributions are incompatible"
    )


def _draw_capacities(config: GenConfig, stations: Sequence[StationProfile],
                     rng: np.random.Generator):
    cap = config.capacity
    if isinstance(cap, FixedCapacity):
        return None
    out = []
    for st in stations:
        if isinstance(cap, UniformCapacity):
            row = rng.uniform(cap.low, cap.high, size=config.horizon)
        else:
            row = np.asarray(st.capacity) * rng.uniform(cap.low, cap.high, size=config.horizon)
        out.append(tuple(float(x) for x in row))
    return tuple(out)


def sample_scenario(config: GenConfig, stations: Sequence[StationProfile], seed: int) -> Scenario:
    """Draw one day: a Poisson EV count, then each EV type field independently.

    Types violating ``energy <= (departure - arrival) * rate`` are resampled.
    The result depends only on ``(config, stations, seed)``.
    """
    rng = make_rng(seed)
    n = int(rng.poisson(config.poisson_mean))
    evs = tuple(_draw_ev(config, i, rng) for i in range(n))
    caps = _draw_capacities(config, stations, rng)
    return Scenario(seed, evs, caps)
