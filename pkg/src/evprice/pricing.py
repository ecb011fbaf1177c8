"""Day-ahead price tables learned from Monte-Carlo dual solves.

Each training scenario is solved with the dual solver; every (EV, station)
multiplier becomes a sample keyed by features an operator can observe on
arrival (arrival time, slot demand, distance). Samples are aggregated per
(station, key) into a quote table. Two quoting heuristics are provided:

* ``H1``: static table lookup, bill = price * slots needed.
* ``H2``: H1 scaled by how far the station's live occupancy deviates from the
  Monte-Carlo mean occupancy for that arrival bucket.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .dual import SolverParams, solve_dual
from .model import (PRNG_ALGORITHM, EvType, GenConfig, Scenario, StationProfile, distance,
                    sample_scenario)

TABLE_SCHEMA = "evprice.price_table/v1"


class BucketScheme(BaseModel):
    """Widths and counts of the feature buckets; last bucket absorbs overflow."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    arrival_width: int = Field(default=8, ge=1)
    demand_width: int = Field(default=2, ge=1)
    demand_buckets: int = Field(default=8, ge=1)
    distance_width: float = Field(default=2.8284271247461903, gt=0)
    distance_buckets: int = Field(default=5, ge=1)

    @classmethod
    def default_for(cls, horizon: int, area_diagonal: float) -> "BucketScheme":
        return cls(arrival_width=max(1, horizon // 6), distance_width=area_diagonal / 5)

    def arrival_buckets(self, horizon: int) -> int:
        return -(-horizon // self.arrival_width)


@dataclass(frozen=True, order=True)
class FeatureKey:
    arrival: int
    demand: int
    distance: int


@dataclass(frozen=True)
class MultiplierSample:
    scenario_seed: int
    station: int
    key: FeatureKey
    price: float
    chosen: bool


CSV_FIELDS = ["scenario_seed", "station", "arrival_bucket", "demand_bucket",
              "distance_bucket", "lambda", "chosen"]


def feature_bucket(ev: EvType, station: StationProfile, scheme: BucketScheme) -> FeatureKey:
    # elasticity is never observed by the operator, so it never enters the key
    demand = max(ev.slots_needed - 1, 0) // scheme.demand_width
    dist = int(distance(ev.location, station.location) // scheme.distance_width)
    return FeatureKey(
        ev.arrival // scheme.arrival_width,
        min(demand, scheme.demand_buckets - 1),
        min(dist, scheme.distance_buckets - 1),
    )


def occupancy(evs: Sequence[EvType], choice: Sequence[Optional[int]], n_stations: int,
              horizon: int) -> np.ndarray:
    """Number of EVs present at each station per slot (|M| x tau)."""
    occ = np.zeros((n_stations, horizon))
    for ev, j in zip(evs, choice):
        if j is not None:
            occ[j, ev.arrival:ev.departure] += 1
    return occ


@dataclass
class MonteCarloResult:
    samples: list[MultiplierSample]
    occupancy: np.ndarray  # |M| x tau, mean over scenarios
    n_scenarios: int
    iterations: list[int] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)


def solve_scenario(scenario: Scenario, stations: Sequence[StationProfile], horizon: int,
                   params: SolverParams, scheme: BucketScheme):
    """Samples and per-slot occupancy from one scenario's dual solve."""
    inst = scenario.instance(stations, horizon)
    res = solve_dual(inst, params)
    samples = []
    for i, ev in enumerate(inst.evs):
        for j, st in enumerate(inst.stations):
            samples.append(MultiplierSample(scenario.seed, j, feature_bucket(ev, st, scheme),
                                            float(res.prices[i, j]), bool(res.choice[i] == j)))
    occ = occupancy(inst.evs, res.choice, len(stations), horizon)
    return samples, occ, res


def run_monte_carlo(gen: GenConfig, stations: Sequence[StationProfile], params: SolverParams,
                    num_scenarios: int, seed: int, scheme: Optional[BucketScheme] = None,
                    workers: int = 1) -> MonteCarloResult:
    """Solve scenarios ``seed, seed+1, ...`` and collect their final multipliers.

    With ``workers > 1`` scenarios are solved in a process pool; results are
    always reduced in seed order so the output does not depend on ``workers``.
    """
    if num_scenarios < 0:
        raise ValueError("num_scenarios must be >= 0")
    scheme = scheme or BucketScheme.default_for(gen.horizon, gen.area.diagonal)
    seeds = [seed + k for k in range(num_scenarios)]
    scenarios = (sample_scenario(gen, stations, s) for s in seeds)
    jobs = [(sc, tuple(stations), gen.horizon, params, scheme) for sc in scenarios]
    results = map_ordered(_solve_job, jobs, workers)
    return collect(results, len(stations), gen.horizon)


def _solve_job(job):
    samples, occ, res = solve_scenario(*job)
    return samples, occ, res.iterations, res.converged


def collect(results: Iterable, n_stations: int, horizon: int) -> MonteCarloResult:
    out = MonteCarloResult([], np.zeros((n_stations, horizon)), 0)
    for samples, occ, iters, conv in results:
        out.samples.extend(samples)
        out.occupancy += occ
        out.n_scenarios += 1
        out.iterations.append(int(iters))
        out.converged.append(bool(conv))
    if out.n_scenarios:
        out.occupancy /= out.n_scenarios
    return out


def map_ordered(fn, jobs: list, workers: int = 1) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def samples_to_csv(samples: Sequence[MultiplierSample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for s in samples:
        w.writerow([s.scenario_seed, s.station, s.key.arrival, s.key.demand, s.key.distance,
                    repr(s.price), int(s.chosen)])
    return buf.getvalue()


def samples_from_csv(text: str) -> list[MultiplierSample]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        MultiplierSample(int(r["scenario_seed"]), int(r["station"]),
                         FeatureKey(int(r["arrival_bucket"]), int(r["demand_bucket"]),
                                    int(r["distance_bucket"])),
                         float(r["lambda"]), r["chosen"] == "1")
        for r in rows
    ]


# ---------------------------------------------------------------------------
# Price tables
# ---------------------------------------------------------------------------


class Aggregation(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    method: Literal["mean", "quantile"] = "mean"
    q: float = Field(default=0.5, ge=0, le=1)
    chosen_only: bool = True
    fallback: float = Field(default=0.0, ge=0)


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank quantile: the ceil(q*n)-th order statistic (1-based, at least 1st)."""
    ordered = sorted(values)
    rank = max(1, math.ceil(q * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class PriceTable:
    """Per-(station, key) per-slot prices plus Monte-Carlo occupancy means."""

    prices: dict  # (station, FeatureKey) -> price
    counts: dict  # (station, FeatureKey) -> samples aggregated
    scheme: BucketScheme
    aggregation: Aggregation
    occupancy: Optional[dict] = None  # (station, arrival bucket) -> mean EVs present
    metadata: dict = field(default_factory=dict)

    def lookup(self, station: int, key: FeatureKey) -> float:
        return self.prices.get((station, key), self.aggregation.fallback)

    def mean_occupancy(self, station: int, arrival_bucket: int) -> float:
        if not self.occupancy:
            return 0.0
        return self.occupancy.get((station, arrival_bucket), 0.0)

    def to_dict(self) -> dict:
        entries = [
            {"station": j, "arrival_bucket": k.arrival, "demand_bucket": k.demand,
             "distance_bucket": k.distance, "price": p, "count": self.counts[(j, k)]}
            for (j, k), p in sorted(self.prices.items())
        ]
        occ = [
            {"station": j, "arrival_bucket": b, "mean": v}
            for (j, b), v in sorted((self.occupancy or {}).items())
        ]
        return {
            "schema": TABLE_SCHEMA,
            "metadata": dict(sorted(self.metadata.items())),
            "scheme": self.scheme.model_dump(),
            "aggregation": self.aggregation.model_dump(),
            "entries": entries,
            "occupancy": occ,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriceTable":
        if d.get("schema") != TABLE_SCHEMA:
            raise ValueError(f"unsupported price table schema {d.get('schema')!r}")
        prices, counts = {}, {}
        for e in d["entries"]:
            key = (e["station"], FeatureKey(e["arrival_bucket"], e["demand_bucket"],
                                            e["distance_bucket"]))
            prices[key] = float(e["price"])
            counts[key] = int(e["count"])
        occ = {(o["station"], o["arrival_bucket"]): float(o["mean"]) for o in d["occupancy"]}
        return cls(prices, counts, BucketScheme(**d["scheme"]), Aggregation(**d["aggregation"]),
                   occ, dict(d.get("metadata", {})))


def occupancy_by_bucket(mean_occ: np.ndarray, scheme: BucketScheme) -> dict:
    """Average the per-slot mean occupancy over each arrival bucket's slots."""
    out = {}
    m, tau = mean_occ.shape
    for j in range(m):
        for b in range(scheme.arrival_buckets(tau)):
            chunk = mean_occ[j, b * scheme.arrival_width:(b + 1) * scheme.arrival_width]
            out[(j, b)] = float(chunk.mean())
    return out


def build_price_table(samples: Sequence[MultiplierSample], scheme: BucketScheme,
                      aggregation: Optional[Aggregation] = None,
                      mean_occupancy: Optional[np.ndarray] = None,
                      metadata: Optional[dict] = None) -> PriceTable:
    aggregation = aggregation or Aggregation()
    groups: dict = {}
    for s in samples:
        if aggregation.chosen_only and not s.chosen:
            continue
        groups.setdefault((s.station, s.key), []).append(s.price)
    prices, counts = {}, {}
    for key in sorted(groups):
        vals = groups[key]
        if aggregation.method == "mean":
            prices[key] = math.fsum(vals) / len(vals)
        else:
            prices[key] = nearest_rank(vals, aggregation.q)
        counts[key] = len(vals)
    occ = None if mean_occupancy is None else occupancy_by_bucket(mean_occupancy, scheme)
    meta = {"prng": PRNG_ALGORITHM, **(metadata or {})}
    return PriceTable(prices, counts, scheme, aggregation, occ, meta)


# ---------------------------------------------------------------------------
# Quoting
# ---------------------------------------------------------------------------


def quote(table: PriceTable, ev: EvType, stations: Sequence[StationProfile],
          live_occupancy: Optional[Sequence[float]] = None, heuristic: str = "H2",
          beta: float = 0.5) -> np.ndarray:
    """Bill per station offered to ``ev`` on arrival; fixed once offered.

    ``live_occupancy[j]`` is the number of admitted EVs currently present at
    station j (used by H2 only).
    """
    r = ev.slots_needed
    bills = np.array([table.lookup(st.id, feature_bucket(ev, st, table.scheme)) * r
                      for st in stations], dtype=float)
    if heuristic == "H1":
        return bills
    if heuristic != "H2":
        raise ValueError(f"unknown heuristic {heuristic!r}")
    if live_occupancy is None:
        live_occupancy = np.zeros(len(stations))
    bucket = ev.arrival // table.scheme.arrival_width
    for j, st in enumerate(stations):
        expected = table.mean_occupancy(st.id, bucket)
        factor = 1.0 + beta * (live_occupancy[j] - expected) / max(expected, 1.0)
        bills[j] *= max(0.0, factor)
    return bills
