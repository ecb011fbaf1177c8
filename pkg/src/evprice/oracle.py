"""Exhaustive ground truth for small instances.

``feasible_schedule`` decides whether a set of EVs can all be fully charged at
one station under binary per-slot charging; ``optimal_assignment`` enumerates
every EV-to-station assignment and returns the cheapest one that schedules.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import EvType, Instance, StationProfile, disutility, distance

DEFAULT_NODE_BUDGET = 10**7
CAP_EPS = 1e-9


class BudgetExceeded(RuntimeError):
    """The exhaustive search hit its node budget before reaching an answer."""


@dataclass(frozen=True)
class BinarySchedule:
    """Charging slots per EV at one station (EV id -> sorted slot tuple)."""

    station: int
    slots: dict

    def matrix(self, ev_ids: Sequence[int], horizon: int) -> np.ndarray:
        out = np.zeros((len(ev_ids), horizon), dtype=int)
        for row, i in enumerate(ev_ids):
            out[row, list(self.slots.get(i, ()))] = 1
        return out

    def to_dict(self) -> dict:
        return {"station": self.station,
                "slots": {str(i): list(s) for i, s in sorted(self.slots.items())}}


@dataclass(frozen=True)
class ExactSolution:
    cost: float
    choice: tuple[int, ...]
    schedules: tuple[BinarySchedule, ...]

    def to_dict(self) -> dict:
        return {"cost": self.cost, "choice": list(self.choice),
                "schedules": [s.to_dict() for s in self.schedules]}


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def tick(self):
        self.used += 1
        if self.used > self.limit:
            raise BudgetExceeded(f"search exceeded budget of {self.limit} nodes")


def feasible_schedule(station: StationProfile, assigned: Sequence[EvType],
                      budget: int = DEFAULT_NODE_BUDGET,
                      _counter: Optional[_Budget] = None) -> Optional[BinarySchedule]:
    """A binary schedule giving every assigned EV its ``slots_needed`` slots, or None.

    Depth-first over EVs in (departure, id) order; each EV picks its slots in
    increasing index order among slots with enough residual capacity. Raises
    BudgetExceeded rather than guessing when the search is too large.
    """
    counter = _counter or _Budget(budget)
    evs = sorted(assigned, key=lambda ev: (ev.departure, ev.id))
    residual = list(station.capacity)
    need = [ev.slots_needed for ev in evs]
    chosen: list[list[int]] = [[] for _ in evs]

    def usable(k: int) -> int:
        ev = evs[k]
        return sum(1 for t in ev.window if residual[t] + CAP_EPS >= ev.rate)

    def rest_ok(k: int) -> bool:
        return all(usable(q) >= need[q] for q in range(k, len(evs)))

    def place(k: int, start: int, left: int) -> bool:
        counter.tick()
        if left == 0:
            if k + 1 == len(evs):
                return True
            if not rest_ok(k + 1):
                return False
            nxt = evs[k + 1]
            return place(k + 1, nxt.arrival, need[k + 1])
        ev = evs[k]
        for t in range(start, ev.departure - left + 1):
            if residual[t] + CAP_EPS < ev.rate:
                continue
            residual[t] -= ev.rate
            chosen[k].append(t)
            if place(k, t + 1, left - 1):
                return True
            chosen[k].pop()
            residual[t] += ev.rate
        return False

    if evs and not (rest_ok(0) and place(0, evs[0].arrival, need[0])):
        return None
    return BinarySchedule(station.id, {ev.id: tuple(chosen[k]) for k, ev in enumerate(evs)})


def assignment_cost(evs: Sequence[EvType], stations: Sequence[StationProfile],
                    choice: Sequence[Optional[int]]) -> float:
    """Sum of theta * l**2 over assigned EVs, in EV order; None entries contribute 0."""
    total = 0.0
    for ev, j in zip(evs, choice):
        if j is not None:
            total += disutility(ev.elasticity, distance(ev.location, stations[j].location))
    return total


def optimal_assignment(instance: Instance,
                       budget: int = DEFAULT_NODE_BUDGET) -> Optional[ExactSolution]:
    """Minimum-disutility assignment whose every station schedules, or None.

    Assignments are tried in (cost, station-index tuple) order so the first
    schedulable one is optimal with lexicographic tie-breaking. Per-station
    feasibility results are cached by EV subset.
    """
    n, m = instance.n_evs, instance.n_stations
    if n == 0:
        return ExactSolution(0.0, (), tuple(BinarySchedule(s.id, {}) for s in instance.stations))
    if m ** n > budget:
        raise BudgetExceeded(f"{m}^{n} assignments exceed budget of {budget}")
    counter = _Budget(budget)
    candidates = []
    for choice in itertools.product(range(m), repeat=n):
        counter.tick()
        candidates.append((assignment_cost(instance.evs, instance.stations, choice), choice))
    candidates.sort()
    cache: dict[tuple[int, frozenset], Optional[BinarySchedule]] = {}
    for cost, choice in candidates:
        schedules = []
        for j, st in enumerate(instance.stations):
            members = frozenset(i for i, c in enumerate(choice) if c == j)
            key = (j, members)
            if key not in cache:
                cache[key] = feasible_schedule(st, [instance.evs[i] for i in sorted(members)],
                                               _counter=counter)
            if cache[key] is None:
                break
            schedules.append(cache[key])
        else:
            return ExactSolution(cost, tuple(choice), tuple(schedules))
    return None


# ---------------------------------------------------------------------------
# Independent constraint checks
# ---------------------------------------------------------------------------


def schedule_violations(station: StationProfile, evs: Sequence[EvType], matrix,
                        require_full: bool = True, tol: float = CAP_EPS) -> list[str]:
    """Problems with a binary |evs| x tau schedule matrix at one station.

    Checks binary entries, per-slot capacity, availability windows, and, when
    ``require_full``, that each EV gets exactly its needed slots (otherwise at
    most that many). Returns an empty list when the schedule is valid.
    """
    u = np.asarray(matrix)
    problems = []
    tau = len(station.capacity)
    if u.shape != (len(evs), tau):
        return [f"shape {u.shape} != {(len(evs), tau)}"]
    if not np.all((u == 0) | (u == 1)):
        problems.append("non-binary entries")
    rates = np.array([ev.rate for ev in evs], dtype=float).reshape(-1, 1)
    load = (u * rates).sum(axis=0)
    for t in range(tau):
        if load[t] > station.capacity[t] + tol:
            problems.append(f"slot {t}: load {load[t]} > capacity {station.capacity[t]}")
    for row, ev in enumerate(evs):
        outside = [t for t in range(tau) if u[row, t] and not ev.arrival <= t < ev.departure]
        if outside:
            problems.append(f"EV {ev.id} charged outside its window at {outside}")
        got = int(u[row].sum())
        if require_full and got != ev.slots_needed:
            problems.append(f"EV {ev.id} got {got} slots, needs {ev.slots_needed}")
        if not require_full and got > ev.slots_needed:
            problems.append(f"EV {ev.id} got {got} slots, more than {ev.slots_needed}")
    return problems


def milp_feasible(station: StationProfile, evs: Sequence[EvType]) -> bool:
    """Exact schedulability of ``evs`` at ``station`` as a 0-1 feasibility program.

    Independent of the depth-first search; solved with HiGHS through scipy.
    """
    from scipy.optimize import Bounds, LinearConstraint, milp

    if not evs:
        return True
    cols = []  # (ev row, slot)
    for row, ev in enumerate(evs):
        for t in ev.window:
            if station.capacity[t] + CAP_EPS >= ev.rate:
                cols.append((row, t))
    for row, ev in enumerate(evs):
        if sum(1 for r, _ in cols if r == row) < ev.slots_needed:
            return False
    slots = sorted({t for _, t in cols})
    a = np.zeros((len(evs) + len(slots), len(cols)))
    pos = {t: k for k, t in enumerate(slots)}
    for c, (row, t) in enumerate(cols):
        a[row, c] = 1.0
        a[len(evs) + pos[t], c] = evs[row].rate
    need = np.array([ev.slots_needed for ev in evs], dtype=float)
    cap = np.array([station.capacity[t] + CAP_EPS for t in slots])
    lo = np.concatenate([need, np.full(len(slots), -np.inf)])
    hi = np.concatenate([need, cap])
    res = milp(np.zeros(len(cols)), constraints=LinearConstraint(a, lo, hi),
               integrality=np.ones(len(cols)), bounds=Bounds(0, 1))
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise RuntimeError(f"MILP feasibility check failed: {res.message}")
