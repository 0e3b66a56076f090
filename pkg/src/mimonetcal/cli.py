"""Command line entry point.

Exit codes: 0 success, 2 usage error, 3 infeasible or unstable result with
``--strict``.
"""

from __future__ import annotations

import logging
import sys

import click

from .cache import CapacityCache, default_cache_path
from .config import ConfigError, blocks_to_rate, config_from_mapping, load_config
from .experiments import PRESETS, preset_config, run_experiment
from .markov import StateSpaceTooLarge, first_order_capacity
from .netcal import BoundEvaluator, PeriodicSource, throughput
from .scenario import build_scenario

EXIT_INFEASIBLE = 3


def scenario_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="Flat TOML file with scenario keys."),
        click.option("--n", type=int, help="Antennas per side."),
        click.option("--snr-db", type=float),
        click.option("--p-gb", type=float),
        click.option("--p-bg", type=float),
        click.option("--kappa", type=float),
        click.option("--eps", type=float, help="Delay violation probability."),
        click.option("--d-guarantee", type=int, help="Delay guarantee in slots."),
        click.option("--tau", type=float, help="Source period in slots."),
        click.option("--method", type=click.IntRange(1, 2), help="1 = full sub-state chain, 2 = DOF chain."),
        click.option("--seed", type=int),
        click.option("--mc-samples", type=int),
        click.option("--trunc", type=int, help="Truncation horizon of the delay-bound sum."),
        click.option("--cache", "cache_path", type=click.Path(dir_okay=False),
                     help="Capacity cache file (JSON lines)."),
        click.option("--no-cache", is_flag=True, help="Keep capacity estimates in memory only."),
        click.option("--strict", is_flag=True, help="Exit 3 on infeasible or unstable results."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


_SCENARIO_KEYS = ("n", "snr_db", "p_gb", "p_bg", "kappa", "eps", "d_guarantee", "tau",
                  "method", "seed", "mc_samples", "trunc")


def _overrides(kwargs):
    return {k: kwargs[k] for k in _SCENARIO_KEYS if kwargs.get(k) is not None}


def _cache(kwargs):
    if kwargs["no_cache"]:
        return CapacityCache()
    return CapacityCache(kwargs["cache_path"] or default_cache_path())


def _file_overrides(kwargs):
    if not kwargs["config_path"]:
        return {}
    cfg = load_config(kwargs["config_path"])
    base = config_from_mapping({})
    # only keys that differ from the defaults count as explicit
    return {k: v for k, v in cfg.echo().items() if k != "units" and v != base.echo()[k]}


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Delay-constrained throughput of correlated MIMO channels."""
    logging.basicConfig(level=logging.WARNING - 10 * verbose, format="%(levelname)s %(name)s: %(message)s")


@main.command()
def presets():
    """List experiment presets."""
    for name, defaults in PRESETS.items():
        click.echo(f"{name}: {defaults}")


@main.command()
@click.option("--preset", required=True, type=click.Choice(sorted(PRESETS)))
@click.option("--out-dir", default=".", show_default=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(1))
@scenario_options
def run(preset, out_dir, jobs, **kwargs):
    """Run an experiment preset and write one CSV per curve."""
    try:
        overrides = {**_file_overrides(kwargs), **_overrides(kwargs)}
        preset_config(preset, overrides)
        result = run_experiment(preset, overrides, out_dir, _cache(kwargs), jobs)
    except (ConfigError, StateSpaceTooLarge) as exc:
        raise click.UsageError(str(exc)) from exc
    for path in result.files:
        click.echo(str(path))
    for issue in result.issues:
        click.echo(f"warning: {issue}", err=True)
    if kwargs["strict"] and result.issues:
        sys.exit(EXIT_INFEASIBLE)


@main.command(name="throughput")
@scenario_options
def throughput_cmd(**kwargs):
    """Delay-constrained throughput of a single scenario."""
    try:
        cfg = load_config(kwargs["config_path"]) if kwargs["config_path"] else config_from_mapping({})
        cfg = config_from_mapping(_overrides(kwargs), cfg)
        chain, prov = build_scenario(cfg, _cache(kwargs))
    except (ConfigError, StateSpaceTooLarge) as exc:
        raise click.UsageError(str(exc)) from exc
    search = cfg.search()
    ev = BoundEvaluator(chain, search.theta_grid, search.trunc, search.refine)
    lam = throughput(chain, cfg.d_guarantee, cfg.eps, cfg.tau, search, evaluator=ev)
    bound = ev.delay_bound(PeriodicSource.from_rate(lam, cfg.tau), cfg.eps)
    c1 = first_order_capacity(chain)
    click.echo(f"states: {chain.k} (method {cfg.method})")
    click.echo(f"rates_blocks_per_slot: {' '.join(f'{r:.9g}' for r in chain.rates[:16])}")
    click.echo(f"c1_bits_per_s_per_hz: {blocks_to_rate(c1, cfg.units):.9g}")
    click.echo(f"lambda_blocks_per_slot: {lam:.9g}")
    click.echo(f"lambda_bits_per_s_per_hz: {blocks_to_rate(lam, cfg.units):.9g}")
    click.echo(f"delay_bound_slots: {bound.d}")
    click.echo(f"theta_star: {bound.theta_star:.9g}")
    click.echo(f"tail_mass: {bound.tail_mass:.9g}")
    click.echo(f"cache: {prov['cache_hits']} hits, {prov['cache_misses']} misses")
    if kwargs["strict"] and (lam == 0.0 or not bound.feasible):
        sys.exit(EXIT_INFEASIBLE)


if __name__ == "__main__":
    main()
