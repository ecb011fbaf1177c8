"""Online replay of one day under a pricing policy or the FCFS benchmark.

EVs arrive in (arrival, id) order. Under ``priced`` each EV sees a bill per
station, picks the station minimizing distance disutility plus bill, and is
accepted unconditionally. Under ``fcfs`` prices are zero and an EV is admitted
at the nearest station that can still schedule everyone it has admitted. At
the end of the day each station realizes a binary schedule by
earliest-deadline-first.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .model import DomainError, EvType, Scenario, StationProfile, disutility, distance
from .oracle import (BudgetExceeded, assignment_cost, feasible_schedule, milp_feasible,
                     optimal_assignment)
from .pricing import PriceTable, quote

INF_RATIO = math.inf


@dataclass(frozen=True)
class PricedPolicy:
    table: PriceTable
    heuristic: str = "H2"
    beta: float = 0.5
    name: str = "priced"


@dataclass(frozen=True)
class FcfsPolicy:
    name: str = "fcfs"


Policy = Union[PricedPolicy, FcfsPolicy]


@dataclass
class StationState:
    station: StationProfile
    admitted: list = field(default_factory=list)

    def present_at(self, t: int) -> int:
        return sum(1 for ev in self.admitted if ev.arrival <= t < ev.departure)


@dataclass
class EvOutcome:
    ev: int
    choice: Optional[int]
    bill: float
    disutility: float
    delivered: int
    unmet: float

    def to_dict(self) -> dict:
        return {"ev": self.ev, "choice": self.choice, "bill": self.bill,
                "disutility": self.disutility, "delivered_slots": self.delivered,
                "unmet": self.unmet}


@dataclass
class DayReport:
    seed: int
    policy: str
    outcomes: list[EvOutcome]
    social_cost: float
    revenue: float
    unmet: float
    schedules: dict  # station id -> {ev id: slot tuple}
    opt_cost: Optional[float] = None
    ratio: Optional[float] = None
    assignment_feasible: Optional[bool] = None

    @property
    def choice(self) -> tuple:
        return tuple(o.choice for o in self.outcomes)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "policy": self.policy,
            "social_cost": self.social_cost,
            "revenue": self.revenue,
            "unmet": self.unmet,
            "opt_cost": self.opt_cost,
            "ratio": _json_ratio(self.ratio),
            "assignment_feasible": self.assignment_feasible,
            "evs": [o.to_dict() for o in self.outcomes],
            "schedules": {str(j): {str(i): list(s) for i, s in sorted(sl.items())}
                          for j, sl in sorted(self.schedules.items())},
        }


def _json_ratio(r):
    if r is None:
        return None
    return "inf" if math.isinf(r) else r


# ---------------------------------------------------------------------------
# Choice rules
# ---------------------------------------------------------------------------


def priced_choose(ev: EvType, quotes, distances_row) -> int:
    cost = ev.elasticity * np.asarray(distances_row, dtype=float) ** 2 + np.asarray(quotes, float)
    return int(np.argmin(cost))


def edf_feasible(station: StationProfile, evs: Sequence[EvType]) -> bool:
    _, unmet = _edf(station, evs)
    return all(v == 0 for v in unmet.values())


def greedy_admissible(station: StationProfile, evs: Sequence[EvType]) -> bool:
    """Necessary condition: per-EV usable slots and per-interval energy fit."""
    cap = station.capacity
    for ev in evs:
        if sum(1 for t in ev.window if cap[t] >= ev.rate) < ev.slots_needed:
            return False
    points = sorted({ev.arrival for ev in evs} | {ev.departure for ev in evs})
    for a in points:
        for d in points:
            if d <= a:
                continue
            need = sum(ev.slots_needed * ev.rate for ev in evs
                       if a <= ev.arrival and ev.departure <= d)
            if need > sum(cap[a:d]) + 1e-9:
                return False
    return True


def schedulable(station: StationProfile, evs: Sequence[EvType]) -> bool:
    """Whether ``evs`` can all be fully charged at ``station``.

    EDF success proves feasibility and failing the greedy bound disproves it;
    the remaining cases are settled exactly by the 0-1 program.
    """
    if edf_feasible(station, evs):
        return True
    if not greedy_admissible(station, evs):
        return False
    return milp_feasible(station, evs)


def fcfs_choose(ev: EvType, states: Sequence[StationState]) -> Optional[int]:
    """Nearest station (ties by id) still able to schedule its admitted set plus ``ev``."""
    order = sorted(range(len(states)),
                   key=lambda j: (distance(ev.location, states[j].station.location), j))
    for j in order:
        if schedulable(states[j].station, states[j].admitted + [ev]):
            return j
    return None


# ---------------------------------------------------------------------------
# Schedule commitment
# ---------------------------------------------------------------------------


def _edf(station: StationProfile, evs: Sequence[EvType]):
    remaining = {ev.id: ev.slots_needed for ev in evs}
    slots = {ev.id: [] for ev in evs}
    order = sorted(evs, key=lambda ev: (ev.departure, ev.id))
    for t in range(len(station.capacity)):
        room = station.capacity[t]
        for ev in order:
            if remaining[ev.id] > 0 and ev.arrival <= t < ev.departure and ev.rate <= room + 1e-9:
                slots[ev.id].append(t)
                remaining[ev.id] -= 1
                room -= ev.rate
    return {i: tuple(s) for i, s in slots.items()}, remaining


def commit_schedules(state: StationState) -> tuple[dict, float]:
    """Earliest-deadline-first binary schedule for the admitted set and its unmet energy.

    At each slot, waiting EVs are considered by (departure, id) and charged
    whenever their rate still fits the slot's residual capacity.
    """
    slots, remaining = _edf(state.station, state.admitted)
    unmet = math.fsum(remaining[ev.id] * ev.rate for ev in state.admitted)
    return slots, unmet


# ---------------------------------------------------------------------------
# Day simulation
# ---------------------------------------------------------------------------


def simulate_day(scenario: Scenario, stations: Sequence[StationProfile], policy: Policy,
                 seed: Optional[int] = None) -> DayReport:
    day_stations = scenario.stations_for(stations)
    states = [StationState(st) for st in day_stations]
    evs = sorted(scenario.evs, key=lambda ev: (ev.arrival, ev.id))
    choice: dict[int, Optional[int]] = {}
    bills: dict[int, float] = {}
    for ev in evs:
        dists = [distance(ev.location, st.location) for st in day_stations]
        if isinstance(policy, PricedPolicy):
            live = [s.present_at(ev.arrival) for s in states]
            quotes = quote(policy.table, ev, day_stations, live, policy.heuristic, policy.beta)
            j = priced_choose(ev, quotes, dists)
            bills[ev.id] = float(quotes[j])
        else:
            j = fcfs_choose(ev, states)
            bills[ev.id] = 0.0
        choice[ev.id] = j
        if j is not None:
            states[j].admitted.append(ev)

    schedules, delivered, unmet_by_ev = {}, {}, {}
    for st, state in zip(day_stations, states):
        slots, remaining = _edf(st, state.admitted)
        schedules[st.id] = slots
        for ev in state.admitted:
            delivered[ev.id] = len(slots[ev.id])
            unmet_by_ev[ev.id] = remaining[ev.id] * ev.rate

    outcomes = []
    for ev in scenario.evs:
        j = choice[ev.id]
        if j is None:
            outcomes.append(EvOutcome(ev.id, None, 0.0, 0.0, 0, ev.energy))
            continue
        d = disutility(ev.elasticity, distance(ev.location, day_stations[j].location))
        outcomes.append(EvOutcome(ev.id, j, bills[ev.id], d, delivered[ev.id], unmet_by_ev[ev.id]))
    return DayReport(
        seed=scenario.seed if seed is None else seed,
        policy=policy.name,
        outcomes=outcomes,
        social_cost=assignment_cost(scenario.evs, day_stations, [o.choice for o in outcomes]),
        revenue=math.fsum(o.bill for o in outcomes),
        unmet=math.fsum(o.unmet for o in outcomes),
        schedules=schedules,
    )


def attach_optimum(report: DayReport, scenario: Scenario, stations: Sequence[StationProfile],
                   horizon: int, solution=None, budget: Optional[int] = None) -> DayReport:
    """Fill in the exact optimum and the competitive ratio of ``report``.

    The ratio is only reported when every EV was assigned and every station's
    assigned set is schedulable (so the day's assignment is feasible for the
    offline problem); otherwise it stays None.
    """
    inst = scenario.instance(stations, horizon)
    if solution is None:
        solution = optimal_assignment(inst) if budget is None else optimal_assignment(inst, budget)
    if solution is None:
        report.assignment_feasible = None
        return report
    report.opt_cost = solution.cost
    choice = report.choice
    feasible = all(c is not None for c in choice)
    if feasible:
        for j, st in enumerate(inst.stations):
            members = [inst.evs[i] for i, c in enumerate(choice) if c == j]
            try:
                if feasible_schedule(st, members) is None:
                    feasible = False
                    break
            except BudgetExceeded:
                feasible = False
                break
    report.assignment_feasible = feasible
    if feasible:
        report.ratio = competitive_ratio(report.social_cost, solution.cost)
    return report


def competitive_ratio(alg: float, opt: float) -> float:
    if opt == 0:
        return 1.0 if alg == 0 else INF_RATIO
    return alg / opt


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def compute_metrics(reports: Sequence[DayReport],
                    opt_costs: Optional[Sequence[Optional[float]]] = None) -> dict:
    """Per-policy summary over days.

    ``opt_costs`` (one per report) overrides the optimum stored on each report
    when given.
    """
    if not reports:
        raise DomainError("compute_metrics needs at least one report")
    if opt_costs is not None:
        if len(opt_costs) != len(reports):
            raise DomainError("opt_costs and reports differ in length")
        for rep, opt in zip(reports, opt_costs):
            rep.opt_cost = opt
            rep.ratio = None if opt is None else competitive_ratio(rep.social_cost, opt)
    summary = {}
    for name in sorted({r.policy for r in reports}):
        rows = [r for r in reports if r.policy == name]
        ratios = [r.ratio for r in rows if r.ratio is not None]
        summary[name] = {
            "days": len(rows),
            "mean_social_cost": math.fsum(r.social_cost for r in rows) / len(rows),
            "mean_unmet": math.fsum(r.unmet for r in rows) / len(rows),
            "mean_revenue": math.fsum(r.revenue for r in rows) / len(rows),
            "ratio_days": len(ratios),
            "mean_ratio": (math.fsum(ratios) / len(ratios)) if ratios else None,
            "max_ratio": max(ratios) if ratios else None,
        }
        for key in ("mean_ratio", "max_ratio"):
            summary[name][key] = _json_ratio(summary[name][key])
    return summary


DAY_CSV_FIELDS = ["seed", "policy", "social_cost", "revenue", "unmet", "ratio"]


def days_to_csv(reports: Sequence[DayReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DAY_CSV_FIELDS)
    for r in reports:
        ratio = "" if r.ratio is None else ("inf" if math.isinf(r.ratio) else repr(r.ratio))
        w.writerow([r.seed, r.policy, repr(r.social_cost), repr(r.revenue), repr(r.unmet), ratio])
    return buf.getvalue()
