"""Lagrangian dual decomposition of the EV-to-station assignment problem.

The coupling constraint "EV i receives exactly r_i slots at the station it
chose" is relaxed with per-(EV, station) multipliers ``lam[i, j]``, read as a
per-charging-slot price. The relaxed problem splits into one discrete choice
per EV and one fractional scheduling problem per station.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import _kernels
from .model import DomainError, EvType, Instance, StationProfile

UpdateMode = Literal["projected", "paper-literal"]


class SolverParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    step: float = Field(default=0.1, gt=0)
    max_iters: int = Field(default=5000, ge=1)
    tolerance: float = Field(default=1e-6, ge=0)
    update_mode: UpdateMode = "projected"
    step_schedule: Literal["constant", "diminishing"] = "constant"

    def step_at(self, k: int) -> float:
        """Step size used for the update after iteration ``k`` (1-based)."""
        if self.step_schedule == "diminishing":
            return self.step / math.sqrt(k)
        return self.step


@dataclass
class DualResult:
    prices: np.ndarray  # |N| x |M|
    best_value: float
    trace: list[tuple[float, float]]  # (dual value, max positive violation)
    choice: np.ndarray  # station index per EV
    schedule: np.ndarray  # |N| x |M| x tau, fractional
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def assignment(self) -> np.ndarray:
        return assignment_matrix(self.choice, self.prices.shape[1])

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "iterations": self.iterations,
            "converged": self.converged,
            "best_dual_value": self.best_value,
            "final_dual_value": self.trace[-1][0] if self.trace else None,
            "final_max_violation": self.trace[-1][1] if self.trace else None,
            "choice": [int(j) for j in self.choice],
            "prices": self.prices.tolist(),
            "delivered_slots": self.schedule.sum(axis=2).tolist(),
        }
        if verbose:
            out["trace"] = [{"dual_value": g, "max_violation": v} for g, v in self.trace]
        return out


def assignment_matrix(choice: Sequence[int], n_stations: int) -> np.ndarray:
    xi = np.zeros((len(choice), n_stations))
    xi[np.arange(len(choice)), np.asarray(choice, dtype=int)] = 1.0
    return xi


# ---------------------------------------------------------------------------
# Sub-problems
# ---------------------------------------------------------------------------


def user_choice(ev: EvType, prices_row, distances_row) -> tuple[int, float]:
    """Station minimizing ``theta * l**2 + lam * r`` and the attained value.

    Ties go to the lowest station index.
    """
    prices_row = np.asarray(prices_row, dtype=float)
    distances_row = np.asarray(distances_row, dtype=float)
    if prices_row.size == 0:
        raise DomainError("user_choice needs at least one station")
    cost = ev.elasticity * distances_row**2 + prices_row * ev.slots_needed
    j = int(np.argmin(cost))
    return j, float(cost[j])


def station_relaxed_schedule(station: StationProfile, lam_column, evs: Sequence[EvType]):
    """Fractional schedule maximizing ``sum lam_i * u_i^t`` at one station.

    Every slot is an independent fractional knapsack with weight ``rate`` and
    budget ``capacity[t]``; EVs are filled in descending ``lam / rate`` order
    (ties by index). EVs priced at 0 are left at 0. Returns ``(u, R)`` with u
    of shape |N| x tau.
    """
    lam = np.ascontiguousarray(lam_column, dtype=float)
    tau = len(station.capacity)
    u = np.zeros((len(evs), tau))
    if not evs:
        return u, 0.0
    value = _kernels.schedule_station(
        lam,
        np.array([ev.rate for ev in evs], dtype=float),
        np.array([ev.arrival for ev in evs], dtype=np.int64),
        np.array([ev.departure for ev in evs], dtype=np.int64),
        np.asarray(station.capacity, dtype=float),
        u,
    )
    return u, float(value)


def dual_value(q, r) -> float:
    return float(np.sum(q) - np.sum(r))


def update_multipliers(prices, assignment, schedule, slots_needed, step: float,
                       mode: UpdateMode = "projected") -> np.ndarray:
    """One multiplier step on the coupling violation ``r_i * xi_ij - sum_t u_ij^t``.

    ``schedule`` is either |N| x |M| x tau or already summed over slots.
    ``paper-literal`` adds ``step * max(0, violation)`` so prices never fall;
    ``projected`` takes the signed step and clips the result at 0.
    """
    prices = np.asarray(prices, dtype=float)
    delivered = np.asarray(schedule, dtype=float)
    if delivered.ndim == 3:
        delivered = delivered.sum(axis=2)
    violation = np.asarray(slots_needed, dtype=float)[:, None] * assignment - delivered
    if mode == "paper-literal":
        return prices + step * np.maximum(0.0, violation)
    if mode == "projected":
        return np.maximum(0.0, prices + step * violation)
    raise DomainError(f"unknown update mode {mode!r}")


# ---------------------------------------------------------------------------
# Iterative solver
# ---------------------------------------------------------------------------


def solve_dual(instance: Instance, params: Optional[SolverParams] = None) -> DualResult:
    """Subgradient ascent on the Lagrangian dual, starting from all-zero prices.

    Each iteration solves every EV's choice and every station's relaxed
    schedule at the current prices, records the dual value and the largest
    positive coupling violation, then updates the prices. Stops once that
    violation is within tolerance or after ``max_iters`` iterations; the
    returned prices, choice and schedule belong to the last evaluated iterate.
    """
    params = params or SolverParams()
    n, m, tau = instance.n_evs, instance.n_stations, instance.horizon
    if n == 0 or m == 0:
        return DualResult(np.zeros((n, m)), 0.0, [(0.0, 0.0)], np.zeros(n, dtype=int),
                          np.zeros((n, m, tau)), True)
    theta = np.array([ev.elasticity for ev in instance.evs])
    lam, trace, choice, u, converged = _kernels.subgradient_loop(
        theta[:, None] * instance.distances() ** 2,
        slots_needed_vector(instance.evs),
        np.array([ev.rate for ev in instance.evs], dtype=float),
        np.array([ev.arrival for ev in instance.evs], dtype=np.int64),
        np.array([ev.departure for ev in instance.evs], dtype=np.int64),
        np.array([s.capacity for s in instance.stations], dtype=float).reshape(m, tau),
        float(params.step),
        int(params.max_iters),
        float(params.tolerance),
        params.update_mode == "paper-literal",
        params.step_schedule == "diminishing",
    )
    trace_list = [(float(g), float(v)) for g, v in trace]
    return DualResult(lam, max(g for g, _ in trace_list), trace_list, choice.astype(int),
                      np.ascontiguousarray(u.transpose(1, 0, 2)), bool(converged))


def slots_needed_vector(evs: Sequence[EvType]) -> np.ndarray:
    return np.array([ev.slots_needed for ev in evs], dtype=float)
