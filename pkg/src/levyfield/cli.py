"""Command-line entry points.

Every experiment subcommand reads one YAML config (``--config``), runs
it, writes CSV/JSON outputs plus a manifest into ``--out``, and exits
0 on pass, 1 on a failed verdict, 2 on error.  ``--seed`` overrides the
config seed, ``--jobs`` the worker count (default from the
``LEVYFIELD_JOBS`` environment variable); results are byte-identical
for any worker count.
"""

from __future__ import annotations

import os
import sys

import click

from . import __version__
from .config import load_config, validate_and_build
from .errors import ConfigurationError
from .runner import ERROR, run_experiment, wasserstein_selftest


def _jobs_default() -> int:
    try:
        return max(1, int(os.environ.get("LEVYFIELD_JOBS", "1")))
    except ValueError:
        return 1


def _run_options(fn):
    fn = click.option("--jobs", type=int, default=None,
                      help="Worker processes (default: LEVYFIELD_JOBS or 1).")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                      help="Output directory (default: out/<kind>).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="YAML experiment config.")(fn)
    return fn


def _execute(kind: str, config_path: str, seed, out_dir, jobs):
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = {**cfg, "seed": seed}
        spec = validate_and_build(cfg)
    except ConfigurationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(ERROR)
    if spec.kind != kind:
        click.echo(f"config kind {spec.kind!r} does not match subcommand {kind!r}", err=True)
        sys.exit(ERROR)
    out = out_dir or os.path.join("out", kind)
    code = run_experiment(spec, out, jobs=jobs if jobs is not None else _jobs_default())
    status = {0: "pass", 1: "fail", 2: "error"}[code]
    click.echo(f"{kind}: {status} (outputs in {out})")
    sys.exit(code)


@click.group()
@click.version_option(__version__)
def main():
    """Mean-field jump-SDE simulation and rate-measurement lab."""


def _subcommand(kind: str, doc: str):
    @main.command(name=kind, help=doc)
    @_run_options
    def cmd(config_path, seed, out_dir, jobs):
        _execute(kind, config_path, seed, out_dir, jobs)

    return cmd


_subcommand("simulate", "Run one interacting particle system and log summary time series.")
_subcommand("picard", "Iterate the law map to its fixed-point flow; write the distance trace.")
_subcommand("poc", "Measure the weak propagation-of-chaos slope against its predicted exponent.")
_subcommand("strong-poc", "Measure the pathwise coupling slope against its predicted exponent.")
_subcommand("moments", "Scale the initial law and check moment-bound ratios stay flat.")
_subcommand("common-noise", "Shared-layer runs: simulate a common-noise system or the conditional chaos slope.")
_subcommand("check-assumptions", "Falsification sweep of the declared coefficient constants.")


@main.command(name="wasserstein-selftest")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--instances", type=int, default=200, show_default=True,
              help="Random instances per check.")
def selftest(seed, instances):
    """Metric sanity battery for the transport-distance implementations."""
    rows = wasserstein_selftest(seed=seed, instances=instances)
    for name, passed, detail in rows:
        click.echo(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    sys.exit(0 if all(p for _, p, _ in rows) else 1)


if __name__ == "__main__":
    main()
