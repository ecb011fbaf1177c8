import numpy as np
import pytest

from evprice.model import EvType, Instance, StationProfile, make_rng

CRITERIA: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    CRITERIA[criterion] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda s: int(s.split()[0][1:])):
        ok, detail = CRITERIA[name]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def random_instance(seed: int, n_max: int = 5, m_max: int = 3, tau_max: int = 8,
                    tight: bool = True) -> Instance:
    """Small random instance; ``tight`` keeps capacities near one EV per slot."""
    rng = make_rng(seed)
    tau = int(rng.integers(3, tau_max + 1))
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    stations = []
    for j in range(m):
        lo, hi = (1, 4) if tight else (2, 6)
        caps = tuple(float(rng.integers(lo, hi)) for _ in range(tau))
        stations.append(StationProfile(j, (float(rng.uniform(0, 5)), float(rng.uniform(0, 5))),
                                       caps))
    evs = []
    for i in range(n):
        a = int(rng.integers(0, tau - 1))
        d = int(rng.integers(a + 1, tau + 1))
        rate = float(rng.choice([1.0, 2.0]))
        energy = float(rng.uniform(0, (d - a) * rate))
        evs.append(EvType(i, a, d, energy, rate,
                          (float(rng.uniform(0, 5)), float(rng.uniform(0, 5))),
                          float(rng.lognormal(0, 1))))
    return Instance(tau, tuple(stations), tuple(evs))


@pytest.fixture
def line_stations():
    """Two stations at x=1 and x=2 on the axis, ample capacity over 6 slots."""
    return [StationProfile(0, (1.0, 0.0), (10.0,) * 6),
            StationProfile(1, (2.0, 0.0), (10.0,) * 6)]


def ev(i=0, a=0, d=4, energy=2.0, rate=1.0, loc=(0.0, 0.0), theta=1.0) -> EvType:
    return EvType(i, a, d, energy, rate, loc, theta)


@pytest.fixture
def make_ev():
    return ev


def brute_force_argmin(values) -> int:
    best, arg = np.inf, -1
    for j, v in enumerate(values):
        if v < best:
            best, arg = v, j
    return arg
