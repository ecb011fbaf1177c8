"""Compiled inner loops of the dual solver."""

import numpy as np
from numba import njit


@njit(cache=True)
def choose_all(dist_cost, lam, slots, choice, values):
    n, m = dist_cost.shape
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(m):
            c = dist_cost[i, j] + lam[i, j] * slots[i]
            if c < best:
                best = c
                arg = j
        choice[i] = arg
        values[i] = best


@njit(cache=True)
def schedule_station(lam_col, rates, arrival, departure, capacity, u):
    """Per-slot greedy fractional knapsack; fills u (|N| x tau) in place, returns R."""
    n = lam_col.shape[0]
    tau = capacity.shape[0]
    u[:, :] = 0.0
    count = 0
    for i in range(n):
        if lam_col[i] > 0.0:
            count += 1
    if count == 0:
        return 0.0
    ids = np.empty(count, dtype=np.int64)
    keys = np.empty(count)
    p = 0
    for i in range(n):
        if lam_col[i] > 0.0:
            ids[p] = i
            keys[p] = -lam_col[i] / rates[i]
            p += 1
    order = np.argsort(keys, kind="mergesort")
    value = 0.0
    for t in range(tau):
        room = capacity[t]
        for q in range(count):
            if room <= 0.0:
                break
            i = ids[order[q]]
            if arrival[i] <= t and t < departure[i]:
                e = rates[i]
                if e <= room:
                    u[i, t] = 1.0
                    room -= e
                else:
                    u[i, t] = room / e
                    room = 0.0
                value += lam_col[i] * u[i, t]
    return value


@njit(cache=True)
def subgradient_loop(dist_cost, slots, rates, arrival, departure, capacity,
                     step, max_iters, tol, literal, diminishing):
    n, m = dist_cost.shape
    tau = capacity.shape[1]
    lam = np.zeros((n, m))
    trace = np.empty((max_iters, 2))
    choice = np.zeros(n, dtype=np.int64)
    q = np.empty(n)
    u = np.zeros((m, n, tau))
    delivered = np.zeros((n, m))
    iters = 0
    converged = False
    for k in range(1, max_iters + 1):
        choose_all(dist_cost, lam, slots, choice, q)
        r_total = 0.0
        for j in range(m):
            r_total += schedule_station(lam[:, j], rates, arrival, departure, capacity[j], u[j])
        q_total = 0.0
        for i in range(n):
            q_total += q[i]
        worst = 0.0
        for i in range(n):
            for j in range(m):
                s = 0.0
                for t in range(arrival[i], departure[i]):
                    s += u[j, i, t]
                delivered[i, j] = s
                need = slots[i] if choice[i] == j else 0.0
                v = need - s
                if v > worst:
                    worst = v
        trace[k - 1, 0] = q_total - r_total
        trace[k - 1, 1] = worst
        iters = k
        if worst <= tol:
            converged = True
            break
        if k == max_iters:
            break
        eps = step / np.sqrt(k) if diminishing else step
        for i in range(n):
            for j in range(m):
                need = slots[i] if choice[i] == j else 0.0
                v = need - delivered[i, j]
                if literal:
                    if v > 0.0:
                        lam[i, j] = lam[i, j] + eps * v
                else:
                    x = lam[i, j] + eps * v
                    lam[i, j] = x if x > 0.0 else 0.0
    return lam, trace[:iters], choice, u, converged
