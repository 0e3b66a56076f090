"""Compose channel capacities and Markov chains into a ready-to-use scenario."""

from __future__ import annotations

from .cache import CapacityCache, cache_key
from .channel import capacity_table, ergodic_capacity_mc, variance_matrix
from .config import ScenarioConfig, rate_to_blocks
from .markov import ServiceChain, aggregated_chain, first_order_capacity, full_chain


def substate_capacities(cfg: ScenarioConfig, cache: CapacityCache | None = None):
    """Per-sub-state capacities in bits/s/Hz plus cache hit/miss counts."""
    cache = cache if cache is not None else CapacityCache()
    stats = {"hits": 0, "misses": 0}

    def estimate(pattern):
        key = cache_key(cfg.n, cfg.snr_db, pattern.index, cfg.mc_samples, cfg.seed)
        est = cache.get(key)
        if est is None:
            stats["misses"] += 1
            est = ergodic_capacity_mc(variance_matrix(pattern), cfg.snr_db, cfg.mc_samples, cfg.seed)
            cache.put(key, est)
        else:
            stats["hits"] += 1
        return est

    caps, estimates = capacity_table(cfg.n, cfg.snr_db, estimate=estimate)
    return caps, estimates, stats


def build_scenario(cfg: ScenarioConfig, cache: CapacityCache | None = None) -> tuple[ServiceChain, dict]:
    """Service chain with rates in blocks/slot for the configured method."""
    caps, estimates, stats = substate_capacities(cfg, cache)
    rates = rate_to_blocks(caps, cfg.units)
    ge = cfg.gilbert_elliott()
    if cfg.method == 1:
        chain = full_chain(cfg.n, ge, rates)
    else:
        chain = aggregated_chain(cfg.n, ge, rates, weighting=cfg.weighting)
    chain.provenance.update(
        snr_db=cfg.snr_db,
        mc_samples=cfg.mc_samples,
        seed=cfg.seed,
        capacity_classes=len(estimates),
        max_std_error=max((e.std_error for e in estimates.values()), default=0.0),
        blocks_per_slot_factor=cfg.units.blocks_per_slot_factor,
    )
    provenance = dict(chain.provenance)
    provenance.update(
        cache_hits=stats["hits"],
        cache_misses=stats["misses"],
        c1_blocks_per_slot=first_order_capacity(chain),
    )
    return chain, provenance
