"""Command-line entry point: ``evprice <stage> [options]``."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import load_config
from .model import ConfigError, DomainError
from .oracle import BudgetExceeded
from .pipeline import StageError, run_pipeline

EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_RUNTIME = 1


def _fail(kind: str, message: str, code: int, key=None):
    err = {"error": kind, "message": message}
    if key is not None:
        err["key"] = key
    click.echo(json.dumps(err, sort_keys=True), err=True)
    sys.exit(code)


def _run(stage, config, seed, out, stage_input, policy, oracle, verbose_trace):
    try:
        cfg = load_config(config)
        policies = None
        if policy is not None:
            policies = ["priced", "fcfs"] if policy == "both" else [policy]
        cfg = cfg.with_overrides(
            seed=seed, output_dir=out, policies=policies,
            oracle=None if oracle is None else oracle == "on",
            verbose_trace=True if verbose_trace else None,
        )
        summary = run_pipeline(cfg, stage, Path(cfg.output_dir),
                               Path(stage_input) if stage_input else None)
    except ConfigError as exc:
        _fail("config", str(exc), EXIT_CONFIG, exc.key)
    except StageError as exc:
        _fail("stage", str(exc), EXIT_STAGE)
    except (DomainError, BudgetExceeded, OSError, ValueError) as exc:
        _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    if summary:
        click.echo(json.dumps(summary, sort_keys=True, indent=1))


def _options(fn):
    opts = [
        click.option("--config", "config", type=click.Path(), default=None,
                     help="Run config JSON; documented defaults when omitted."),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                     help="Base seed (overrides simulation.seed)."),
        click.option("--out", type=click.Path(), default=None, help="Output directory."),
        click.option("--stage-input", type=click.Path(), default=None,
                     help="Directory holding earlier stages' artifacts (default: --out)."),
        click.option("--policy", type=click.Choice(["priced", "fcfs", "both"]), default=None),
        click.option("--oracle", type=click.Choice(["on", "off"]), default=None,
                     help="Compute exact optima and competitive ratios (small days only)."),
        click.option("--verbose-trace", is_flag=True, help="Keep full dual iteration traces."),
        click.option("-v", "--verbose", is_flag=True, help="Log stage progress."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Day-ahead congestion pricing of EV charging stations."""


def _make(stage: str, doc: str):
    @_options
    def cmd(config, seed, out, stage_input, policy, oracle, verbose_trace, verbose):
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _run(stage, config, seed, out, stage_input, policy, oracle, verbose_trace)

    cmd.__doc__ = doc
    return main.command(name=stage)(cmd)


_make("generate", "Sample training scenarios and evaluation days.")
_make("solve", "Run the dual solver on every training scenario.")
_make("price", "Aggregate multiplier samples into a price table.")
_make("simulate", "Replay evaluation days under each policy.")
_make("report", "Render the simulation summary as JSON and CSV.")
_make("all", "Run every stage in order.")


if __name__ == "__main__":
    main()
