"""Closed-loop delay-aware avoidance simulation.

Each GNSS cycle every UAV broadcasts its sampled state; copies reach each
receiver after a per-message delay (uniform interval, protocol-model draw,
or instantaneous "exact" exchange). Each decision cycle a UAV extrapolates
its delayed neighbor tracks to the present, builds avoidance half-spaces for
predicted conflicts, and otherwise recovers onto its planned trajectory after
a run of clear cycles. Kinematics are a point model integrated at a fixed
substep; separations and deliveries are logged for analysis.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .avoidance import (
    AvoidanceConfig,
    HalfSpace,
    TimedTrajectory,
    UavState,
    conflict_halfspace_raw,
    nearest_trajectory_point,
    optimal_velocity,
    recovery_velocity,
)
from .delay import sample_message_delay
from .interference import FleetState, RadioConfig, collision_survival, recv_set
from .timing import TimingConfig
from .tracks import NeighborTrack, RemoteIdMessage, live_tracks, predict_state, update_track
from .trajectories import Waypoint, canned_five_uav_waypoints, generate_trajectory

__all__ = [
    "DelayModel",
    "Scenario",
    "SeparationTrace",
    "SimResult",
    "run_scenario",
    "separation_metrics",
    "canned_scenario",
    "random_encounter_scenario",
]


@dataclass(frozen=True)
class DelayModel:
    """Per-message delay source.

    kind: "uniform" draws from [lo, hi] seconds; "exact" bypasses messaging
    (decisions see ground truth); "protocol" samples a delivery walk from the
    broadcast timing + interference model (losses possible).
    """

    kind: str = "uniform"
    lo: float = 0.0
    hi: float = 1.0
    radio_configs: tuple[RadioConfig, ...] = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "exact", "protocol"):
            raise ValueError(f"unknown delay model kind {self.kind!r}")
        if self.kind == "uniform" and not (0 <= self.lo <= self.hi):
            raise ValueError("need 0 <= lo <= hi")


@dataclass
class Scenario:
    plans: list[list[Waypoint]]
    v_max: float = 5.0
    physical_radius: float = 1.0
    conflict_radius: float = 5.0
    duration: float = 500.0
    physics_dt: float = 0.1
    gnss_period: float = 1.0
    delay_model: DelayModel = field(default_factory=DelayModel)
    avoidance: AvoidanceConfig = field(default_factory=AvoidanceConfig)
    seed: int = 0

    def __post_init__(self):
        t_end = max(w.t for plan in self.plans for w in plan)
        if self.duration < t_end:
            raise ValueError(f"duration {self.duration} shorter than plan horizon {t_end}")


@dataclass
class SeparationTrace:
    times: np.ndarray  # (T,)
    pairs: list[tuple[int, int]]
    distances: np.ndarray  # (T, n_pairs) meters
    conflict_threshold: float
    collision_threshold: float

    def pair_minima(self) -> dict[tuple[int, int], float]:
        return {
            pair: float(self.distances[:, k].min()) for k, pair in enumerate(self.pairs)
        }

    def min_separation(self) -> float:
        return float(self.distances.min())


@dataclass
class SimResult:
    trace: SeparationTrace
    trajectory_log: np.ndarray  # (T, M, 3)
    delay_log: list[tuple[float, int, int, float]]  # (sent_t, sender, receiver, delay_s)
    lost_messages: int
    mean_prediction_error: float
    conflict_events: int
    collision_events: int
    max_step_displacement: float
    final_path_distance: np.ndarray  # (M,) meters from own planned path at end


def separation_metrics(trace: SeparationTrace) -> dict:
    """Per-pair minima plus threshold statistics over the whole trace."""
    minima = trace.pair_minima()
    below_conflict = {
        pair: float(np.mean(trace.distances[:, k] < trace.conflict_threshold))
        for k, pair in enumerate(trace.pairs)
    }
    return {
        "pair_minima": minima,
        "min_separation": trace.min_separation(),
        "pairs_below_conflict": sorted(
            p for p, v in minima.items() if v < trace.conflict_threshold
        ),
        "pairs_below_collision": sorted(
            p for p, v in minima.items() if v < trace.collision_threshold
        ),
        "time_fraction_below_conflict": below_conflict,
    }


CANNED_AVOIDANCE = AvoidanceConfig(tau=12.0, vo_radius_margin=1.25)


def canned_scenario(delay_model: DelayModel | None = None, seed: int = 0, **kwargs) -> Scenario:
    """The five-UAV converging benchmark over a 1 km square."""
    kwargs.setdefault("avoidance", CANNED_AVOIDANCE)
    return Scenario(
        plans=canned_five_uav_waypoints(),
        delay_model=delay_model or DelayModel(kind="uniform", lo=0.0, hi=1.0),
        seed=seed,
        **kwargs,
    )


def random_encounter_scenario(rng: np.random.Generator, duration: float = 80.0) -> Scenario:
    """Two-UAV converging encounter with randomized crossing geometry.

    Starts are kept apart on the ring (a meaningful encounter begins
    separated); the paths still cross near the origin mid-flight.
    """
    # cruise at ~3/4 of the speed cap so mid-point jitter stays feasible
    span = 0.72 * 5.0 * (duration / 2.0)
    theta = rng.uniform(0, 2 * math.pi)
    min_angle = 40.0 / span  # radians keeping the spawn gap well above 2 m
    phi = theta + rng.uniform(min_angle, 2 * math.pi - min_angle)
    alt = 100.0
    a_start = (span * math.cos(theta), span * math.sin(theta), alt + rng.uniform(-3, 3))
    a_end = (-span * math.cos(theta), -span * math.sin(theta), alt + rng.uniform(-3, 3))
    b_start = (span * math.cos(phi), span * math.sin(phi), alt + rng.uniform(-3, 3))
    b_end = (-span * math.cos(phi), -span * math.sin(phi), alt + rng.uniform(-3, 3))
    t_cross = duration * 0.5
    mid_jitter = rng.uniform(-4, 4, size=2)
    plans = [
        [
            Waypoint(0.0, a_start),
            Waypoint(t_cross, (mid_jitter[0], 0.0, alt + rng.uniform(-1, 1))),
            Waypoint(duration, a_end),
        ],
        [
            Waypoint(0.0, b_start),
            Waypoint(t_cross, (0.0, mid_jitter[1], alt + rng.uniform(-1, 1))),
            Waypoint(duration, b_end),
        ],
    ]
    return Scenario(
        plans=plans,
        duration=duration,
        delay_model=DelayModel(kind="exact"),
        seed=int(rng.integers(0, 2**31)),
    )


class _Agent:
    """Per-UAV mutable loop state: tracks, avoidance mode, timetable offset."""

    __slots__ = ("state", "tracks", "clear_cycles", "time_offset", "commanded")

    def __init__(self, state: UavState, n_noncollide: int):
        self.state = state
        self.tracks: dict[int, NeighborTrack] = {}
        self.clear_cycles = n_noncollide  # start clear: follow the plan immediately
        self.time_offset = 0.0
        self.commanded = state.velocity.copy()


def _protocol_delay_sampler(scenario: Scenario, timing: TimingConfig):
    """Returns sampler(sender, receiver, positions, rng) -> delay_s | None."""
    configs = list(scenario.delay_model.radio_configs)

    def sampler(j: int, i: int, positions: np.ndarray, rng: np.random.Generator):
        fleet = FleetState(positions=positions, configs=configs)
        if i not in recv_set(fleet, j, configs[j].protocol):
            return None
        bundle = collision_survival(fleet, j, i, timing)
        ms = sample_message_delay(timing, configs[j], bundle, rng)
        return None if ms is None else ms / 1000.0

    return sampler


def run_scenario(scenario: Scenario, timing: TimingConfig | None = None) -> SimResult:
    """Run the observe/orient/decide loop over the full scenario horizon."""
    m = len(scenario.plans)
    cfg = scenario.avoidance
    dt = scenario.physics_dt
    n_steps = int(round(scenario.duration / dt))
    decision_every = max(1, int(round(cfg.t_orca / dt)))
    gnss_every = max(1, int(round(scenario.gnss_period / dt)))

    # plans are piecewise linear, so a coarse sampling is exact and keeps the
    # nearest-point search cheap inside the loop
    trajectories = [
        generate_trajectory(plan, scenario.v_max, sample_dt=5.0) for plan in scenario.plans
    ]
    agents = []
    for k, traj in enumerate(trajectories):
        state = UavState(
            id=k,
            position=traj.points[0].copy(),
            velocity=traj.velocity_at(traj.t_start),
            physical_radius=scenario.physical_radius,
            conflict_radius=scenario.conflict_radius,
            v_max=scenario.v_max,
            planned_trajectory=traj,
        )
        agents.append(_Agent(state, cfg.n_noncollide))

    ss = np.random.SeedSequence(scenario.seed)
    delay_rng, proto_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    proto_sampler = None
    if scenario.delay_model.kind == "protocol":
        if len(scenario.delay_model.radio_configs) != m:
            raise ValueError("protocol delay model needs one RadioConfig per UAV")
        proto_sampler = _protocol_delay_sampler(scenario, timing or TimingConfig())

    pairs = list(itertools.combinations(range(m), 2))
    pair_i = np.array([i for i, _ in pairs], dtype=int)
    pair_j = np.array([j for _, j in pairs], dtype=int)
    distances = np.zeros((n_steps + 1, len(pairs)))
    traj_log = np.zeros((n_steps + 1, m, 3))
    mailbox: list[tuple[float, int, int, RemoteIdMessage]] = []  # (due, seq, receiver, msg)
    seq = itertools.count()
    delay_log: list[tuple[float, int, int, float]] = []
    lost = 0
    pred_err_sum, pred_err_n = 0.0, 0
    conflict_events = collision_events = 0
    max_disp = 0.0

    def log_step(row: int):
        pos = np.array([ag.state.position for ag in agents])
        traj_log[row] = pos
        diffs = pos[pair_i] - pos[pair_j]
        distances[row] = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))

    log_step(0)

    for step in range(n_steps):
        t = step * dt

        # --- observe: GNSS sampling and broadcast -------------------------
        if step % gnss_every == 0 and scenario.delay_model.kind != "exact":
            positions = np.array([ag.state.position for ag in agents])
            for j, ag in enumerate(agents):
                msg = RemoteIdMessage(
                    sender_id=j,
                    position=ag.state.position.copy(),
                    velocity=ag.state.velocity.copy(),
                    timestamp=t,
                )
                for i in range(m):
                    if i == j:
                        continue
                    if proto_sampler is not None:
                        d = proto_sampler(j, i, positions, proto_rng)
                    else:
                        d = float(delay_rng.uniform(scenario.delay_model.lo, scenario.delay_model.hi))
                    if d is None:
                        lost += 1
                        continue
                    heapq.heappush(mailbox, (t + d, next(seq), i, msg))
                    delay_log.append((t, j, i, d))

        # deliveries due by now (never before timestamp + delay)
        while mailbox and mailbox[0][0] <= t:
            _, _, i, msg = heapq.heappop(mailbox)
            update_track(agents[i].tracks, msg, t)

        # --- orient + decide at the decision cadence ----------------------
        if step % decision_every == 0:
            vo_radius = 2 * scenario.conflict_radius + cfg.vo_radius_margin
            new_velocities = []
            for k, ag in enumerate(agents):
                me = ag.state
                if scenario.delay_model.kind == "exact":
                    neighbors = [
                        (agents[i].state.position, agents[i].state.velocity)
                        for i in range(m)
                        if i != k
                    ]
                else:
                    neighbors = []
                    for i, track in live_tracks(ag.tracks, t, scenario.gnss_period).items():
                        pos, vel = predict_state(track, t)
                        neighbors.append((pos, vel))
                        err = pos - agents[i].state.position
                        pred_err_sum += math.sqrt(float(err @ err))
                        pred_err_n += 1
                halfspaces: list[HalfSpace] = []
                for pos, vel in neighbors:
                    out = conflict_halfspace_raw(
                        me.position, me.velocity, pos, vel, vo_radius, cfg.tau,
                        escape_time=cfg.t_orca,
                    )
                    if out is not None:
                        halfspaces.append(HalfSpace(anchor=out[0], normal=out[1]))
                if halfspaces:
                    ag.clear_cycles = 0
                    res = optimal_velocity(halfspaces, me.velocity, me.v_max)
                    new_velocities.append(res.velocity)
                else:
                    ag.clear_cycles += 1
                    if ag.clear_cycles >= cfg.n_noncollide:
                        rec = recovery_velocity(me, t, ag.time_offset)
                        if rec.clamped:
                            ag.time_offset += (rec.speed_ratio - 1.0) * (decision_every * dt)
                        new_velocities.append(rec.velocity)
                    else:
                        new_velocities.append(me.velocity.copy())
            for ag, v in zip(agents, new_velocities):
                ag.commanded = v

        # --- integrate -----------------------------------------------------
        for ag in agents:
            ag.state.velocity = ag.commanded
            disp = ag.state.velocity * dt
            max_disp = max(max_disp, math.sqrt(float(disp @ disp)))
            ag.state.position = ag.state.position + disp
        log_step(step + 1)
        row = distances[step + 1]
        conflict_events += int(np.sum(row < 2 * scenario.conflict_radius))
        collision_events += int(np.sum(row < 2 * scenario.physical_radius))

    final_path_distance = np.zeros(m)
    for k, ag in enumerate(agents):
        point, _ = nearest_trajectory_point(ag.state.planned_trajectory, ag.state.position)
        final_path_distance[k] = float(np.linalg.norm(point - ag.state.position))

    trace = SeparationTrace(
        times=np.arange(n_steps + 1) * dt,
        pairs=pairs,
        distances=distances,
        conflict_threshold=2 * scenario.conflict_radius,
        collision_threshold=2 * scenario.physical_radius,
    )
    return SimResult(
        trace=trace,
        trajectory_log=traj_log,
        delay_log=delay_log,
        lost_messages=lost,
        mean_prediction_error=(pred_err_sum / pred_err_n) if pred_err_n else 0.0,
        conflict_events=conflict_events,
        collision_events=collision_events,
        max_step_displacement=max_disp,
        final_path_distance=final_path_distance,
    )
