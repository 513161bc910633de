"""Waypoint trajectory generation and the canned converging-fleet scenario."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .avoidance import TimedTrajectory

__all__ = [
    "Waypoint",
    "generate_trajectory",
    "canned_five_uav_waypoints",
    "CANNED_AREA_SIDE_M",
    "CANNED_DURATION_S",
]

CANNED_AREA_SIDE_M = 1000.0
CANNED_DURATION_S = 500.0
CANNED_CONVERGE_T_S = 250.0
# fleet paths converge inside this centered box at the convergence time
CANNED_BOX_XY_M = 500.0
CANNED_BOX_Z_M = 300.0


@dataclass(frozen=True)
class Waypoint:
    t: float
    position: tuple[float, float, float]


def generate_trajectory(
    waypoints: list[Waypoint],
    v_max: float,
    sample_dt: float = 0.5,
    recovery_interval: float = 5.0,
) -> TimedTrajectory:
    """Densely sampled piecewise-linear trajectory through timed waypoints.

    Rejects plans whose implied segment speed exceeds ``v_max``, naming the
    offending segment.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least 2 waypoints")
    times = np.array([w.t for w in waypoints], dtype=float)
    pts = np.array([w.position for w in waypoints], dtype=float)
    if not np.all(np.diff(times) > 0):
        raise ValueError("waypoint times must be strictly increasing")
    for k in range(len(waypoints) - 1):
        seg = pts[k + 1] - pts[k]
        speed = float(np.linalg.norm(seg)) / (times[k + 1] - times[k])
        if speed > v_max * (1 + 1e-9):
            raise ValueError(
                f"segment {k} ({waypoints[k].t:.1f}s -> {waypoints[k+1].t:.1f}s) "
                f"requires {speed:.2f} m/s > v_max {v_max:.2f} m/s"
            )
    n = max(2, int(math.ceil((times[-1] - times[0]) / sample_dt)) + 1)
    ts = np.linspace(times[0], times[-1], n)
    samples = np.column_stack([np.interp(ts, times, pts[:, k]) for k in range(3)])
    return TimedTrajectory(times=ts, points=samples, recovery_interval=recovery_interval)


def canned_five_uav_waypoints(
    v_max: float = 5.0,
    area_side: float = CANNED_AREA_SIDE_M,
    duration: float = CANNED_DURATION_S,
    mid_offset: float = 10.0,
    alt_step: float = 2.5,
) -> list[list[Waypoint]]:
    """Five crossing paths over a 1 km square, all meeting near the center at 250 s.

    Each UAV flies from a ring position through a point close to the center
    (offset ``mid_offset`` meters on a small ring, with ``alt_step`` vertical
    spacing, so the unavoided paths conflict) to the antipodal side, at gentle
    cruise speeds well under ``v_max``.
    """
    cx = cy = area_side / 2.0
    t_mid = duration * (CANNED_CONVERGE_T_S / CANNED_DURATION_S)
    radius = 0.38 * area_side
    base_alt = 150.0
    plans: list[list[Waypoint]] = []
    for k in range(5):
        theta = 2.0 * math.pi * k / 5.0
        start = (cx + radius * math.cos(theta), cy + radius * math.sin(theta), base_alt + 2.0 * k)
        end = (cx - radius * math.cos(theta), cy - radius * math.sin(theta), base_alt + 2.0 * ((k + 2) % 5))
        mid = (
            cx + mid_offset * math.cos(theta + math.pi / 2.0),
            cy + mid_offset * math.sin(theta + math.pi / 2.0),
            base_alt + alt_step * k,
        )
        plans.append(
            [
                Waypoint(0.0, start),
                Waypoint(t_mid, mid),
                Waypoint(duration, end),
            ]
        )
    return plans
