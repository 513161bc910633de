"""Multi-agent environment for learning broadcast configurations.

Each step: agents pick a (protocol, rate) action, the fleet's link-delay
table is computed, rewards blend each agent's own mean link delay with its
deviation from the fleet average, and positions re-randomize inside the
scenario area. Observations are fixed-length, id-ordered, sentinel-padded
summaries of the agent's own config and its in-range neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delay import (
    LinkDelayTable,
    compute_link_delay_table,
    per_uav_mean_delays,
    validate_radio_constraints,
)
from .interference import FleetState, LinkBudget, RadioConfig, reach_set
from .timing import Protocol, TimingConfig

__all__ = [
    "Action",
    "RewardWeights",
    "EnvConfig",
    "FleetEnv",
    "decode_action",
    "encode_action",
    "observation_size",
]

PROTOCOL_ORDER = (Protocol.BLE4, Protocol.BLE5, Protocol.WIFI)
DISTANCE_SENTINEL = -1.0  # padded neighbor slots
DISTANCE_SCALE = 1000.0  # meters per observation unit


@dataclass(frozen=True)
class Action:
    protocol: Protocol
    rate: int


def decode_action(index: int, psi_max: int) -> Action:
    """Flat action index -> (protocol, rate); constraint-satisfying by construction."""
    if not 0 <= index < 3 * psi_max:
        raise ValueError(f"action index {index} outside [0, {3 * psi_max})")
    return Action(protocol=PROTOCOL_ORDER[index // psi_max], rate=index % psi_max + 1)


def encode_action(action: Action, psi_max: int) -> int:
    if not 1 <= action.rate <= psi_max:
        raise ValueError(f"rate {action.rate} outside [1, {psi_max}]")
    return PROTOCOL_ORDER.index(action.protocol) * psi_max + action.rate - 1


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0  # own mean link delay
    beta: float = 1.0  # deviation from the fleet average


def observation_size(n_uavs: int) -> int:
    # own: protocol one-hot (3) + last-used rate per protocol (3)
    # per neighbor slot: distance + protocol one-hot (3) + rate
    return 6 + (n_uavs - 1) * 5


@dataclass
class EnvConfig:
    n_uavs: int = 10
    area_sides: tuple[float, ...] = (100.0, 500.0, 1000.0, 3000.0, 5000.0, 10000.0)
    area_mode: str = "static"  # "static" uses area_sides[0]; "dynamic" samples per episode
    area_as_surface: bool = False  # True reads the sizes as areas (side = sqrt(size))
    altitude_band: tuple[float, float] = (30.0, 120.0)
    psi_max: int = 10
    weights: RewardWeights = field(default_factory=RewardWeights)
    seed: int = 0
    frozen_positions: bool = False  # debug: suppress per-step repositioning
    check_reward_identity: bool = True

    def side_length(self, size: float) -> float:
        return float(np.sqrt(size)) if self.area_as_surface else float(size)


class FleetEnv:
    """Single-stepper environment over a fleet of broadcasting UAVs."""

    def __init__(self, config: EnvConfig, timing: TimingConfig | None = None,
                 budget: LinkBudget | None = None):
        if config.n_uavs < 1:
            raise ValueError("need at least one UAV")
        self.config = config
        self.timing = timing or TimingConfig()
        self.budget = budget or LinkBudget()
        self.n_actions = 3 * config.psi_max
        ss = np.random.SeedSequence(config.seed)
        self._rng_place, self._rng_shadow, self._rng_channel, self._rng_area = (
            np.random.default_rng(s) for s in ss.spawn(4)
        )
        self._last_rates = np.ones((config.n_uavs, 3), dtype=int)
        self._configs: list[RadioConfig] = [
            RadioConfig(Protocol.BLE4, 1) for _ in range(config.n_uavs)
        ]
        self._side = config.side_length(config.area_sides[0])
        self._fleet: FleetState | None = None
        self.last_table: LinkDelayTable | None = None
        self._place()

    # -- internals ---------------------------------------------------------

    def _place(self):
        n = self.config.n_uavs
        lo_alt, hi_alt = self.config.altitude_band
        xy = self._rng_place.uniform(0.0, self._side, size=(n, 2))
        z = self._rng_place.uniform(lo_alt, hi_alt, size=(n, 1))
        positions = np.hstack([xy, z])
        self._fleet = FleetState(positions=positions, configs=list(self._configs), budget=self.budget)
        self._fleet.draw_shadowing(self._rng_shadow)

    def _apply_actions(self, actions):
        n = self.config.n_uavs
        if len(actions) != n:
            raise ValueError(f"need {n} actions, got {len(actions)}")
        new_configs = []
        for k, idx in enumerate(actions):
            act = decode_action(int(idx), self.config.psi_max)
            prev = self._configs[k]
            if act.protocol == Protocol.WIFI:
                changed = prev.protocol != Protocol.WIFI or prev.rate != act.rate
                channel = (
                    int(self._rng_channel.choice((1, 6, 11)))
                    if changed or prev.wifi_channel is None
                    else prev.wifi_channel
                )
            else:
                channel = None
            new_configs.append(
                RadioConfig(act.protocol, act.rate, tx_power_dbm=prev.tx_power_dbm,
                            wifi_channel=channel)
            )
            self._last_rates[k, PROTOCOL_ORDER.index(act.protocol)] = act.rate
        self._configs = new_configs
        self._fleet = FleetState(
            positions=self._fleet.positions, configs=new_configs,
            budget=self.budget, shadow_db=self._fleet.shadow_db,
        )

    # -- public API ----------------------------------------------------------

    def reset(self, area_side: float | None = None) -> list[np.ndarray]:
        if area_side is not None:
            self._side = area_side
        elif self.config.area_mode == "dynamic":
            self._side = self.config.side_length(
                float(self._rng_area.choice(self.config.area_sides))
            )
        else:
            self._side = self.config.side_length(self.config.area_sides[0])
        self._place()
        return [self.observe(j) for j in range(self.config.n_uavs)]

    @property
    def current_side(self) -> float:
        return self._side

    @property
    def fleet(self) -> FleetState:
        return self._fleet

    def observe(self, j: int) -> np.ndarray:
        """Fixed-length local observation for UAV ``j`` over the frozen snapshot."""
        cfg = self._configs[j]
        n = self.config.n_uavs
        own_proto = np.zeros(3)
        own_proto[PROTOCOL_ORDER.index(cfg.protocol)] = 1.0
        own_rates = self._last_rates[j] / self.config.psi_max
        neighbors = sorted(
            set().union(*(reach_set(self._fleet, j, p) for p in PROTOCOL_ORDER))
        )
        slots = []
        for k in range(n):
            if k == j:
                continue
            if k in neighbors:
                d = self._fleet.distance(k, j) / DISTANCE_SCALE
                proto = np.zeros(3)
                proto[PROTOCOL_ORDER.index(self._configs[k].protocol)] = 1.0
                rate = self._configs[k].rate / self.config.psi_max
                slots.append(np.concatenate(([d], proto, [rate])))
            else:
                slots.append(np.concatenate(([DISTANCE_SENTINEL], np.zeros(3), [0.0])))
        return np.concatenate([own_proto, own_rates] + slots) if slots else np.concatenate(
            [own_proto, own_rates]
        )

    def rewards_from_table(self, table: LinkDelayTable) -> np.ndarray:
        """Local/global blended rewards (negative milliseconds)."""
        w = self.config.weights
        per_uav = per_uav_mean_delays(table)
        global_mean = float(np.mean(per_uav))
        rewards = np.zeros(self.config.n_uavs)
        for j in range(self.config.n_uavs):
            local = -per_uav[j]
            global_term = global_mean - per_uav[j] if table.by_sender(j) else 0.0
            rewards[j] = w.alpha * local + w.beta * global_term
        if self.config.check_reward_identity:
            lhs = float(np.sum(per_uav))
            rhs = self.config.n_uavs * global_mean
            if abs(lhs - rhs) > 1e-6 * max(1.0, abs(rhs)):
                raise AssertionError("reward bookkeeping identity violated")
        return rewards

    def step(self, actions) -> tuple[np.ndarray, list[np.ndarray], LinkDelayTable]:
        """Apply actions, compute rewards, re-randomize placement, observe.

        Returns (per-UAV rewards, next observations, the step's delay table).
        """
        self._apply_actions(actions)
        validate_radio_constraints(self._fleet, self.config.psi_max)
        table = compute_link_delay_table(self._fleet, self.timing)
        self.last_table = table
        rewards = self.rewards_from_table(table)
        if not self.config.frozen_positions:
            self._place()
        observations = [self.observe(j) for j in range(self.config.n_uavs)]
        return rewards, observations, table
