"""Stage orchestration and artifact emission.

Artifact tree under the output directory::

    config.json                    defaults-expanded config + metadata
    scenarios/scenario_<seed>.json training scenarios         (generate)
    days/day_<seed>.json           evaluation days            (generate)
    solve/samples.csv              multiplier samples         (solve)
    solve/occupancy.json           mean per-slot occupancy    (solve)
    solve/solve_summary.json       per-scenario solver stats  (solve)
    price/price_table.json         quote table                (price)
    simulate/days.csv              per-day rows               (simulate)
    simulate/reports.jsonl         full DayReports            (simulate)
    simulate/summary.json          per-policy summary         (simulate)
    report/summary.json, .csv      rendered summary           (report)

Nothing in an artifact depends on wall-clock time or the output path, so the
same config always yields a byte-identical tree.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig
from .model import PRNG_ALGORITHM, Scenario, sample_scenario
from .online import (FcfsPolicy, PricedPolicy, attach_optimum, compute_metrics,
                     days_to_csv, simulate_day)
from .oracle import BudgetExceeded, optimal_assignment
from .pricing import (MonteCarloResult, PriceTable, build_price_table, collect, map_ordered,
                      samples_from_csv, samples_to_csv, solve_scenario)

log = logging.getLogger(__name__)

STAGES = ("generate", "solve", "price", "simulate", "report")
ARTIFACT_VERSION = "1"
SUMMARY_FIELDS = ["policy", "days", "mean_social_cost", "mean_unmet", "mean_revenue",
                  "ratio_days", "mean_ratio", "max_ratio"]


class StageError(RuntimeError):
    """A stage's input artifacts are missing."""


def metadata(config: RunConfig) -> dict:
    return {
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": config.config_hash(),
        "package_version": __version__,
        "prng": PRNG_ALGORITHM,
        "seed": config.simulation.seed,
    }


def dumps(doc) -> str:
    """Stable JSON: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {path}; run the '{stage}' stage first")
    return path


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_generate(config: RunConfig, out: Path) -> None:
    stations = config.station_profiles()
    for seed in config.simulation.train_seeds():
        sc = sample_scenario(config.gen, stations, seed)
        _write(out / "scenarios" / f"scenario_{seed:08d}.json", dumps(sc.to_dict()))
    for seed in config.simulation.eval_seeds():
        sc = sample_scenario(config.gen, stations, seed)
        _write(out / "days" / f"day_{seed:08d}.json", dumps(sc.to_dict()))


def _load_scenarios(src: Path, sub: str, prefix: str, seeds: Sequence[int]) -> list[Scenario]:
    out = []
    for seed in seeds:
        path = _need(src / sub / f"{prefix}_{seed:08d}.json", "generate")
        out.append(Scenario.from_dict(json.loads(path.read_text())))
    return out


def _solve_job(job):
    scenario, stations, horizon, params, scheme, verbose = job
    samples, occ, res = solve_scenario(scenario, stations, horizon, params, scheme)
    stats = {
        "seed": scenario.seed,
        "n_evs": len(scenario.evs),
        "iterations": res.iterations,
        "converged": res.converged,
        "best_dual_value": res.best_value,
        "final_max_violation": res.trace[-1][1],
    }
    if verbose:
        stats["trace"] = [{"dual_value": g, "max_violation": v} for g, v in res.trace]
    return samples, occ, res.iterations, res.converged, stats


def stage_solve(config: RunConfig, out: Path, src: Path) -> MonteCarloResult:
    scenarios = _load_scenarios(src, "scenarios", "scenario", config.simulation.train_seeds())
    stations = tuple(config.station_profiles())
    jobs = [(sc, stations, config.gen.horizon, config.solver, config.pricing.buckets,
             config.verbose_trace) for sc in scenarios]
    results = map_ordered(_solve_job, jobs, config.simulation.workers)
    mc = collect((r[:4] for r in results), len(stations), config.gen.horizon)
    _write(out / "solve" / "samples.csv", samples_to_csv(mc.samples))
    _write(out / "solve" / "occupancy.json", dumps({
        "metadata": metadata(config),
        "n_scenarios": mc.n_scenarios,
        "mean_occupancy": mc.occupancy.tolist(),
    }))
    _write(out / "solve" / "solve_summary.json", dumps({
        "metadata": metadata(config),
        "solver": config.solver.model_dump(),
        "scenarios": [r[4] for r in results],
    }))
    return mc


def stage_price(config: RunConfig, out: Path, src: Path) -> PriceTable:
    samples = samples_from_csv(_need(src / "solve" / "samples.csv", "solve").read_text())
    occ_doc = json.loads(_need(src / "solve" / "occupancy.json", "solve").read_text())
    occ = np.array(occ_doc["mean_occupancy"], dtype=float)
    meta = metadata(config)
    meta["n_scenarios"] = occ_doc["n_scenarios"]
    table = build_price_table(samples, config.pricing.buckets, config.pricing.aggregation,
                              occ if occ.size else None, meta)
    _write(out / "price" / "price_table.json", dumps(table.to_dict()))
    return table


def _policies(config: RunConfig, table: Optional[PriceTable]):
    out = []
    for name in config.simulation.policies:
        if name == "priced":
            out.append(PricedPolicy(table, config.pricing.heuristic, config.pricing.beta))
        else:
            out.append(FcfsPolicy())
    return out


def _simulate_job(job):
    scenario, stations, horizon, policies, oracle, budget = job
    solution = None
    if oracle:
        try:
            solution = optimal_assignment(scenario.instance(stations, horizon), budget)
        except BudgetExceeded:
            solution = None
    reports = []
    for policy in policies:
        rep = simulate_day(scenario, stations, policy)
        if solution is not None:
            attach_optimum(rep, scenario, stations, horizon, solution)
        reports.append(rep)
    return reports


def stage_simulate(config: RunConfig, out: Path, src: Path) -> dict:
    table = None
    if "priced" in config.simulation.policies:
        path = _need(src / "price" / "price_table.json", "price")
        table = PriceTable.from_dict(json.loads(path.read_text()))
    days = _load_scenarios(src, "days", "day", config.simulation.eval_seeds())
    stations = tuple(config.station_profiles())
    policies = _policies(config, table)
    jobs = [(sc, stations, config.gen.horizon, policies, config.simulation.oracle,
             config.simulation.oracle_budget) for sc in days]
    reports = [r for batch in map_ordered(_simulate_job, jobs, config.simulation.workers)
               for r in batch]
    summary = compute_metrics(reports) if reports else {}
    _write(out / "simulate" / "days.csv", days_to_csv(reports))
    _write(out / "simulate" / "reports.jsonl",
           "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports))
    _write(out / "simulate" / "summary.json",
           dumps({"metadata": metadata(config), "summary": summary}))
    return summary


def stage_report(config: RunConfig, out: Path, src: Path) -> dict:
    doc = json.loads(_need(src / "simulate" / "summary.json", "simulate").read_text())
    summary = doc["summary"]
    meta = metadata(config)
    _write(out / "report" / "summary.json", emit_report(summary, "json", meta))
    _write(out / "report" / "summary.csv", emit_report(summary, "csv", meta))
    return summary


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def emit_report(summary: dict, fmt: str = "json", meta: Optional[dict] = None) -> str:
    """Render a per-policy summary as JSON or CSV with a metadata header.

    CSV metadata goes in leading ``# key=value`` lines before the column row.
    """
    meta = dict(sorted((meta or {}).items()))
    if fmt == "json":
        return dumps({"metadata": meta, "summary": summary})
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for policy in sorted(summary):
        row = summary[policy]
        w.writerow([policy] + [_fmt(row.get(f)) for f in SUMMARY_FIELDS[1:]])
    return buf.getvalue()


def run_pipeline(config: RunConfig, stage: str = "all", out: Optional[Path] = None,
                 stage_input: Optional[Path] = None) -> dict:
    """Run one stage (or all of them in order); returns the simulate summary when produced."""
    out = Path(out or config.output_dir)
    src = Path(stage_input) if stage_input else out
    if stage not in STAGES + ("all",):
        raise ValueError(f"unknown stage {stage!r}")
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.json", dumps({"metadata": metadata(config),
                                       "config": config.canonical()}))
    todo = STAGES if stage == "all" else (stage,)
    result: dict = {}
    for name in todo:
        log.info("stage %s", name)
        if stage == "all":
            src = out
        if name == "generate":
            stage_generate(config, out)
        elif name == "solve":
            stage_solve(config, out, src)
        elif name == "price":
            stage_price(config, out, src)
        elif name == "simulate":
            result = stage_simulate(config, out, src)
        else:
            result = stage_report(config, out, src)
    return result
