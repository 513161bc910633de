"""Reciprocal velocity-obstacle avoidance and trajectory recovery in 3D.

The velocity obstacle of a neighbor is the truncated cone of relative
velocities that close to within the combined radius inside a time window
``tau``. When the current relative velocity is inside it, the minimal
boundary adjustment ``u`` is split half/half between the two UAVs, giving a
linear half-space of permitted velocities per neighbor; the commanded
velocity is the point of the half-space intersection (inside the speed ball)
closest to the preferred velocity.

Recovery steers a UAV back onto its timed trajectory after avoidance,
re-timing the plan when the required speed exceeds the cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "UavState",
    "TimedTrajectory",
    "HalfSpace",
    "AvoidanceConfig",
    "ProjectionResult",
    "RecoveryResult",
    "vo_contains",
    "compute_u_adjustment",
    "orca_halfspace",
    "optimal_velocity",
    "recovery_velocity",
    "nearest_trajectory_point",
]

_FEAS_TOL = 1e-9
_LATERAL_FALLBACK = np.array([1.0, 0.0, 0.0])


def _vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector component: {v}")
    return v


@dataclass
class TimedTrajectory:
    """Timed position samples with linear interpolation between them."""

    times: np.ndarray  # (n,) seconds, strictly increasing
    points: np.ndarray  # (n, 3) meters
    recovery_interval: float = 5.0  # horizon for catching up to the present point

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("trajectory needs at least 2 samples")
        if self.points.shape != (len(self.times), 3):
            raise ValueError("points must be (n, 3) matching times")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be strictly increasing")
        if self.recovery_interval <= 0:
            raise ValueError("recovery interval must be > 0")

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def position_at(self, t: float) -> np.ndarray:
        """Linearly interpolated position; clamped to the end points."""
        return np.array(
            [np.interp(t, self.times, self.points[:, k]) for k in range(3)]
        )

    def velocity_at(self, t: float) -> np.ndarray:
        """Segment velocity at time t (right-continuous; zero past the end)."""
        if t >= self.t_end or t < self.t_start:
            return np.zeros(3)
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        i = max(0, min(i, len(self.times) - 2))
        dt = self.times[i + 1] - self.times[i]
        return (self.points[i + 1] - self.points[i]) / dt


@dataclass
class UavState:
    """Kinematic truth for one UAV."""

    id: int
    position: np.ndarray
    velocity: np.ndarray
    physical_radius: float = 1.0
    conflict_radius: float = 5.0
    v_max: float = 5.0
    planned_trajectory: TimedTrajectory | None = None

    def __post_init__(self):
        self.position = _vec(self.position)
        self.velocity = _vec(self.velocity)
        if not self.v_max > 0:
            raise ValueError("v_max must be > 0")
        if not (self.conflict_radius >= self.physical_radius > 0):
            raise ValueError("need conflict_radius >= physical_radius > 0")


@dataclass(frozen=True)
class HalfSpace:
    """Permitted velocities: {v : (v - anchor) . normal >= 0}."""

    anchor: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "anchor", _vec(self.anchor))
        n = _vec(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("normal must be a unit vector")
        object.__setattr__(self, "normal", n)

    def violation(self, v: np.ndarray) -> float:
        """Positive when v is on the forbidden side."""
        return float(-(v - self.anchor) @ self.normal)


@dataclass(frozen=True)
class AvoidanceConfig:
    tau: float = 10.0  # VO time window, seconds
    t_orca: float = 0.1  # decision period, seconds
    n_noncollide: int = 10  # clear cycles before recovery resumes
    vo_radius_margin: float = 0.0  # meters added to the combined radius in VOs

    def __post_init__(self):
        if not (self.tau > 0 and self.t_orca > 0 and self.n_noncollide >= 1):
            raise ValueError("invalid avoidance configuration")
        if self.vo_radius_margin < 0:
            raise ValueError("vo_radius_margin must be >= 0")


def _vo_contains_raw(p: np.ndarray, v: np.ndarray, r2: float, tau: float) -> bool:
    vv = float(v @ v)
    if vv == 0.0:
        return float(p @ p) <= r2
    t_star = min(max(float(v @ p) / vv, 0.0), tau)
    miss = v * t_star - p
    return float(miss @ miss) <= r2


def vo_contains(rel_position, rel_velocity, combined_radius: float, tau: float) -> bool:
    """Membership of ``rel_velocity`` in the tau-truncated velocity obstacle.

    Closed-form: the squared miss distance ||v t - p||^2 is quadratic in t;
    its minimum over [0, tau] decides membership.
    """
    p = _vec(rel_position)
    v = _vec(rel_velocity)
    if not (tau > 0 and combined_radius > 0):
        raise ValueError("tau and combined_radius must be > 0")
    return _vo_contains_raw(p, v, combined_radius**2, tau)


def compute_u_adjustment(
    rel_velocity,
    rel_position,
    combined_radius: float,
    tau: float,
    escape_time: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimal velocity adjustment onto the VO boundary and its outward normal.

    Requires the relative velocity to be inside the VO. Geometry splits into
    three cases: already overlapping (escape within ``escape_time``, default
    one ``tau``), projection onto the truncation sphere, and projection onto
    the cone side. Degenerate apex/overlap directions fall back to pushing
    along the separation axis (or a fixed lateral axis when coincident).
    """
    v = _vec(rel_velocity)
    p = _vec(rel_position)
    if not vo_contains(p, v, combined_radius, tau):
        raise ValueError("relative velocity is outside the velocity obstacle")
    return _u_and_normal(v, p, float(combined_radius), tau, escape_time)


def _u_and_normal(
    v: np.ndarray, p: np.ndarray, r: float, tau: float, escape_time: float | None
) -> tuple[np.ndarray, np.ndarray]:
    dist_sq = float(p @ p)
    r_sq = r * r

    if dist_sq <= r_sq:
        # already within combined radius: push the relative velocity so the
        # overlap clears within one escape interval
        t_escape = escape_time if escape_time is not None else tau
        w = v - p / t_escape
        w_len = float(np.linalg.norm(w))
        if w_len < 1e-12:
            direction = -p / math.sqrt(dist_sq) if dist_sq > 1e-24 else _LATERAL_FALLBACK
            return (r / t_escape) * direction, direction
        unit_w = w / w_len
        return (r / t_escape - w_len) * unit_w, unit_w

    w = v - p / tau
    w_len_sq = float(w @ w)
    dot = float(w @ p)
    if dot < 0.0 and dot * dot > r_sq * w_len_sq:
        # closest exit is through the truncation sphere at p/tau
        w_len = math.sqrt(w_len_sq)
        if w_len < 1e-12:
            direction = -p / math.sqrt(dist_sq)
            return (r / tau) * direction, direction
        unit_w = w / w_len
        return (r / tau - w_len) * unit_w, unit_w

    # closest exit is through the cone side
    cross = np.cross(p, v)
    a = dist_sq
    b = float(p @ v)
    c = float(v @ v) - float(cross @ cross) / (dist_sq - r_sq)
    disc = b * b - a * c
    t_ray = (b + math.sqrt(max(disc, 0.0))) / a
    ww = v - t_ray * p
    ww_len = float(np.linalg.norm(ww))
    if ww_len < 1e-12 or t_ray <= 0.0:
        # apex-degenerate geometry: deterministic push along the separation axis
        direction = -p / math.sqrt(dist_sq)
        return (r / tau) * direction, direction
    unit_ww = ww / ww_len
    return (r * t_ray - ww_len) * unit_ww, unit_ww


def conflict_halfspace_raw(
    p_self: np.ndarray,
    v_self: np.ndarray,
    p_other: np.ndarray,
    v_other: np.ndarray,
    combined_radius: float,
    tau: float,
    escape_time: float | None = None,
):
    """Unvalidated fast path for the simulation loop; None without conflict."""
    p = p_other - p_self
    v = v_self - v_other
    if not _vo_contains_raw(p, v, combined_radius * combined_radius, tau):
        return None
    u, normal = _u_and_normal(v, p, combined_radius, tau, escape_time)
    return v_self + 0.5 * u, normal


def orca_halfspace(a: UavState, b: UavState, tau: float, escape_time: float | None = None):
    """Permitted-velocity half-space of ``a`` against ``b``; None without conflict.

    The anchor takes half of the boundary adjustment (reciprocal split),
    seeded at ``a``'s current velocity.
    """
    if a.id == b.id:
        raise ValueError("distinct UAVs required")
    out = conflict_halfspace_raw(
        a.position, a.velocity, b.position, b.velocity,
        a.conflict_radius + b.conflict_radius, tau, escape_time,
    )
    if out is None:
        return None
    anchor, normal = out
    return HalfSpace(anchor=anchor, normal=normal)


@dataclass(frozen=True)
class ProjectionResult:
    velocity: np.ndarray
    feasible: bool


def _project_ball(v: np.ndarray, v_max: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v if n <= v_max else v * (v_max / n)


def optimal_velocity(
    halfspaces: list[HalfSpace],
    preferred_velocity,
    v_max: float,
    max_iter: int = 2000,
    tol: float = 1e-11,
) -> ProjectionResult:
    """Closest point to the preferred velocity in the constraint intersection.

    Dykstra's alternating projections onto the speed ball and each half-space
    converge to the exact Euclidean projection for this convex family. An
    empty intersection falls back to minimizing the maximum constraint
    violation inside the ball, flagged infeasible.
    """
    pref = _project_ball(_vec(preferred_velocity), v_max)
    if not halfspaces:
        return ProjectionResult(velocity=pref, feasible=True)
    anchors = np.array([h.anchor for h in halfspaces])
    normals = np.array([h.normal for h in halfspaces])
    if np.all(np.einsum("ij,ij->i", pref[None, :] - anchors, normals) >= 0.0):
        return ProjectionResult(velocity=pref, feasible=True)

    n_sets = len(halfspaces) + 1
    v = pref.copy()
    corrections = np.zeros((n_sets, 3))
    for _ in range(max_iter):
        v_prev = v
        y = v + corrections[0]
        v = _project_ball(y, v_max)
        corrections[0] = y - v
        for k in range(len(halfspaces)):
            y = v + corrections[k + 1]
            gap = float((y - anchors[k]) @ normals[k])
            v = y - gap * normals[k] if gap < 0.0 else y
            corrections[k + 1] = y - v
        d = v - v_prev
        if float(d @ d) < tol * tol:
            break

    gaps = np.einsum("ij,ij->i", v[None, :] - anchors, normals)
    if np.all(gaps >= -_FEAS_TOL) and float(v @ v) <= v_max**2 * (1 + 1e-12) + 1e-12:
        return ProjectionResult(velocity=v, feasible=True)

    return ProjectionResult(velocity=_least_violation(halfspaces, v_max, v), feasible=False)


def _least_violation(halfspaces: list[HalfSpace], v_max: float, v0: np.ndarray) -> np.ndarray:
    """Minimize the maximum half-space violation within the speed ball."""
    from scipy.optimize import minimize

    def objective(x):
        return max(h.violation(x) for h in halfspaces)

    res = minimize(
        objective,
        _project_ball(v0, v_max),
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": lambda x: v_max**2 - float(x @ x)}],
        options={"maxiter": 200, "ftol": 1e-10},
    )
    x = res.x if res.success else v0
    return _project_ball(np.asarray(x, dtype=float), v_max)


def nearest_trajectory_point(traj: TimedTrajectory, p) -> tuple[np.ndarray, float]:
    """Closest point of the interpolated path to ``p``; ties pick the earliest time."""
    q = _vec(p)
    a = traj.points[:-1]
    seg = traj.points[1:] - a
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.einsum("ij,ij->i", q[None, :] - a, seg) / seg_len2
    s = np.where(seg_len2 == 0.0, 0.0, np.clip(s, 0.0, 1.0))
    closest = a + s[:, None] * seg
    d2 = np.einsum("ij,ij->i", closest - q[None, :], closest - q[None, :])
    t_seg = traj.times[:-1] + s * np.diff(traj.times)
    best_d2 = d2.min()
    tied = np.flatnonzero(d2 <= best_d2 + 1e-12)
    i = tied[np.argmin(t_seg[tied])]
    return closest[i].copy(), float(t_seg[i])


@dataclass(frozen=True)
class RecoveryResult:
    velocity: np.ndarray
    clamped: bool
    speed_ratio: float  # required speed / v_max (>1 when clamped)
    terminal: bool


def recovery_velocity(a: UavState, t_current: float, time_offset: float = 0.0) -> RecoveryResult:
    """Velocity steering ``a`` back to its (possibly re-timed) trajectory.

    ``time_offset`` shifts the timetable later (accumulated when past clamps
    forced the UAV to fall behind schedule). When the nearest path point lies
    ahead in time, aim to reach it on time; otherwise aim at the current
    timetable point over the recovery interval. Speeds are capped at v_max;
    callers grow the offset by ``(speed_ratio - 1) * decision_period`` on
    clamped steps.
    """
    traj = a.planned_trajectory
    if traj is None:
        raise ValueError("UAV has no planned trajectory")
    t_eff = t_current - time_offset
    point, t_nearest = nearest_trajectory_point(traj, a.position)

    terminal = t_eff >= traj.t_end
    if terminal:
        target = traj.points[-1]
        horizon = traj.recovery_interval
        desired = (target - a.position) / horizon
    elif t_nearest > t_eff:
        desired = (point - a.position) / (t_nearest - t_eff)
    else:
        # behind (or on) schedule: be at the plan's point one recovery
        # interval from now; on-track this reduces to the local path velocity
        target = traj.position_at(t_eff + traj.recovery_interval)
        desired = (target - a.position) / traj.recovery_interval

    speed = float(np.linalg.norm(desired))
    if speed <= a.v_max:
        return RecoveryResult(velocity=desired, clamped=False,
                              speed_ratio=speed / a.v_max if a.v_max else 0.0,
                              terminal=terminal)
    return RecoveryResult(
        velocity=desired * (a.v_max / speed),
        clamped=True,
        speed_ratio=speed / a.v_max,
        terminal=terminal,
    )
