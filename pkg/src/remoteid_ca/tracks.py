"""Delayed neighbor tracks from received broadcast messages.

Each receiver keeps the freshest message per sender (by sample timestamp) and
compensates staleness with constant-velocity extrapolation when it orients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RemoteIdMessage",
    "NeighborTrack",
    "update_track",
    "predict_state",
    "live_tracks",
]

DEFAULT_EVICTION_HORIZON = 3.0  # multiples of the GNSS period without reception


@dataclass(frozen=True)
class RemoteIdMessage:
    sender_id: int
    position: np.ndarray
    velocity: np.ndarray
    timestamp: float  # GNSS sample time of the payload

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.timestamp < 0 or not math.isfinite(self.timestamp):
            raise ValueError(f"invalid timestamp {self.timestamp}")
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("non-finite message payload")


@dataclass(frozen=True)
class NeighborTrack:
    last_message: RemoteIdMessage
    receive_time: float

    def __post_init__(self):
        if self.receive_time < self.last_message.timestamp:
            raise ValueError("reception cannot precede the sample timestamp")


def update_track(
    table: dict[int, NeighborTrack], msg: RemoteIdMessage, receive_time: float
) -> dict[int, NeighborTrack]:
    """Insert/refresh the sender's track; stale (not strictly newer) payloads are dropped."""
    existing = table.get(msg.sender_id)
    if existing is None or msg.timestamp > existing.last_message.timestamp:
        table[msg.sender_id] = NeighborTrack(last_message=msg, receive_time=receive_time)
    return table


def predict_state(track: NeighborTrack, t_current: float) -> tuple[np.ndarray, np.ndarray]:
    """Constant-velocity extrapolation of the tracked state to ``t_current``."""
    dt = t_current - track.last_message.timestamp
    if dt < 0:
        raise ValueError(f"cannot predict into the past (dt={dt})")
    msg = track.last_message
    return msg.position + dt * msg.velocity, msg.velocity.copy()


def live_tracks(
    table: dict[int, NeighborTrack],
    t_now: float,
    gnss_period: float = 1.0,
    horizon: float = DEFAULT_EVICTION_HORIZON,
) -> dict[int, NeighborTrack]:
    """Tracks still fresh enough to trust: received within ``horizon`` GNSS periods.

    A neighbor silent longer than that is out of range or failed, and further
    extrapolation is unsafe.
    """
    limit = horizon * gnss_period
    return {k: tr for k, tr in table.items() if t_now - tr.receive_time <= limit}
