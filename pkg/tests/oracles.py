"""Independent reference implementations used as test oracles."""

import itertools

import numpy as np

from evprice.dual import (SolverParams, assignment_matrix, dual_value, station_relaxed_schedule,
                          update_multipliers, user_choice)
from evprice.model import Instance
from evprice.oracle import assignment_cost


def grid_slot_value(values, rates, cap, step=1e-3):
    """Max sum v_i u_i s.t. sum e_i u_i <= cap, u on a ``step`` grid in [0, 1].

    All but the last item are enumerated on the grid; the last takes the
    largest grid point that still fits, which is optimal since its value >= 0.
    """
    k = len(values)
    assert 1 <= k <= 3
    grid = np.round(np.arange(0, 1 + step / 2, step), 12)
    if k > 1:
        mesh = np.array(np.meshgrid(*([grid] * (k - 1)), indexing="ij")).reshape(k - 1, -1)
    else:
        mesh = np.zeros((0, 1))
    room = cap - (np.asarray(rates[:-1])[:, None] * mesh).sum(axis=0)
    last = np.minimum(np.floor(np.clip(room, 0, None) / rates[-1] / step + 1e-9) * step, 1.0)
    val = (np.asarray(values[:-1])[:, None] * mesh).sum(axis=0) + values[-1] * last
    return float(np.max(np.where(room >= -1e-12, val, -np.inf)))


def reference_solve(inst: Instance, params: SolverParams):
    """Plain loop over the public sub-problem functions."""
    n, m = inst.n_evs, inst.n_stations
    lam = np.zeros((n, m))
    dist = inst.distances()
    slots = np.array([e.slots_needed for e in inst.evs], dtype=float)
    trace = []
    for k in range(1, params.max_iters + 1):
        picks = [user_choice(e, lam[i], dist[i]) for i, e in enumerate(inst.evs)]
        choice = [p[0] for p in picks]
        u = np.zeros((n, m, inst.horizon))
        r = []
        for j, s in enumerate(inst.stations):
            uj, rj = station_relaxed_schedule(s, lam[:, j], inst.evs)
            u[:, j, :] = uj
            r.append(rj)
        g = dual_value([p[1] for p in picks], r)
        xi = assignment_matrix(choice, m)
        worst = float(np.max(np.maximum(0, slots[:, None] * xi - u.sum(axis=2))))
        trace.append((g, worst))
        if worst <= params.tolerance or k == params.max_iters:
            break
        lam = update_multipliers(lam, xi, u, slots, params.step_at(k), params.update_mode)
    return lam, trace


def brute_schedulable(station, evs):
    """Try every combination of slot subsets; only for a handful of EVs."""
    options = [list(itertools.combinations(e.window, e.slots_needed)) for e in evs]
    for pick in itertools.product(*options):
        load = np.zeros(len(station.capacity))
        for e, slots in zip(evs, pick):
            load[list(slots)] += e.rate
        if np.all(load <= np.array(station.capacity) + 1e-9):
            return True
    return False


def brute_optimum(inst):
    best = None
    for choice in itertools.product(range(inst.n_stations), repeat=inst.n_evs):
        ok = all(brute_schedulable(s, [e for e, c in zip(inst.evs, choice) if c == j])
                 for j, s in enumerate(inst.stations))
        if ok:
            cost = assignment_cost(inst.evs, inst.stations, choice)
            if best is None or (cost, choice) < best:
                best = (cost, choice)
    return best
