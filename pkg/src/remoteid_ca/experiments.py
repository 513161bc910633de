"""Reusable experiment kernels shared by the CLI and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .delay import compute_link_delay_table, per_uav_mean_delays, system_loss_rate
from .interference import FleetState, LinkBudget, RadioConfig
from .timing import Protocol, TimingConfig

__all__ = ["placed_fleet", "fixed_mode_cell", "AREA_SIDES_DEFAULT"]

AREA_SIDES_DEFAULT = (100.0, 500.0, 1000.0, 3000.0, 5000.0, 10000.0)


def placed_fleet(
    n_uavs: int,
    side: float,
    protocol: Protocol,
    rate: int,
    seed: int,
    budget: LinkBudget | None = None,
    altitude_band: tuple[float, float] = (30.0, 120.0),
) -> FleetState:
    """Uniformly placed fleet with one fixed broadcast mode; seeded substreams
    for placement, shadowing, and Wi-Fi channel draws."""
    ss = np.random.SeedSequence(seed)
    rng_place, rng_shadow, rng_channel = (np.random.default_rng(s) for s in ss.spawn(3))
    xy = rng_place.uniform(0.0, side, size=(n_uavs, 2))
    z = rng_place.uniform(*altitude_band, size=(n_uavs, 1))
    channels = rng_channel.choice((1, 6, 11), size=n_uavs)
    configs = [
        RadioConfig(
            protocol, rate,
            wifi_channel=int(c) if protocol == Protocol.WIFI else None,
        )
        for c in channels
    ]
    fleet = FleetState(
        positions=np.hstack([xy, z]), configs=configs, budget=budget or LinkBudget()
    )
    fleet.draw_shadowing(rng_shadow)
    return fleet


def fixed_mode_cell(
    n_uavs: int,
    side: float,
    protocol: Protocol,
    rate: int,
    seeds,
    timing: TimingConfig | None = None,
    budget: LinkBudget | None = None,
) -> dict:
    """Delay/loss statistics for one (protocol, rate, area) cell over seeds."""
    timing = timing or TimingConfig()
    effective, conditional, losses = [], [], []
    for seed in seeds:
        fleet = placed_fleet(n_uavs, side, protocol, rate, seed, budget)
        table = compute_link_delay_table(fleet, timing)
        effective.append(float(np.mean(per_uav_mean_delays(table))))
        cond = [l.mean_delay_ms for l in table.links if l.mean_delay_ms is not None]
        conditional.append(float(np.mean(cond)) if cond else float("nan"))
        losses.append(system_loss_rate(table))
    with_links = [c for c in conditional if not np.isnan(c)]
    return {
        "protocol": protocol.value,
        "psi": rate,
        "area_side_m": side,
        "n_seeds": len(effective),
        "median_effective_delay_ms": float(np.median(effective)),
        "mean_effective_delay_ms": float(np.mean(effective)),
        "mean_conditional_delay_ms": float(np.mean(with_links)) if with_links else float("nan"),
        "mean_loss_rate": float(np.mean(losses)),
    }
