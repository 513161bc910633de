import numpy as np
import pytest

from remoteid_ca.avoidance import (
    AvoidanceConfig,
    HalfSpace,
    TimedTrajectory,
    UavState,
    compute_u_adjustment,
    nearest_trajectory_point,
    optimal_velocity,
    orca_halfspace,
    recovery_velocity,
    vo_contains,
)


def uav(idx, pos, vel, v_max=5.0, conflict=5.0, traj=None):
    return UavState(
        id=idx,
        position=np.asarray(pos, dtype=float),
        velocity=np.asarray(vel, dtype=float),
        physical_radius=1.0,
        conflict_radius=conflict,
        v_max=v_max,
        planned_trajectory=traj,
    )


# --- vo_contains -----------------------------------------------------------------


def test_vo_membership_examples():
    assert not vo_contains((100, 0, 0), (0, 0, 0), 10, 5)  # static, separated
    assert vo_contains((8, 0, 0), (0, 1, 0), 10, 1)  # overlapping at t=0
    assert vo_contains((50, 0, 0), (10, 0, 0), 10, 10)  # head-on closure


def test_vo_closed_form_matches_grid_scan():
    rng = np.random.default_rng(1)
    for _ in range(300):
        p = rng.uniform(-60, 60, 3)
        v = rng.uniform(-12, 12, 3)
        r, tau = float(rng.uniform(2, 15)), float(rng.uniform(1, 12))
        ts = np.linspace(0, tau, 3000)
        dist = np.linalg.norm(np.outer(ts, v) - p, axis=1)
        grid = bool((dist <= r).any())
        closed = vo_contains(p, v, r, tau)
        if closed != grid:
            # disagreement can only happen within grid resolution of the boundary
            assert abs(dist.min() - r) < 1e-2
        else:
            assert closed == grid


def test_vo_rejects_bad_inputs():
    with pytest.raises(ValueError):
        vo_contains((np.nan, 0, 0), (0, 0, 0), 10, 5)
    with pytest.raises(ValueError):
        vo_contains((1, 0, 0), (0, 0, 0), 10, 0)


# --- compute_u_adjustment -----------------------------------------------------------


def _bisect_rays(p, r, tau, centre, dirs):
    pts = np.empty_like(dirs)
    for k, d in enumerate(dirs):
        lo, hi = 0.0, 1.0
        while vo_contains(p, centre + hi * d, r, tau):
            hi *= 2.0
            if hi > 1e7:
                break
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if vo_contains(p, centre + mid * d, r, tau):
                lo = mid
            else:
                hi = mid
        pts[k] = centre + lo * d
    return pts


def boundary_cloud(rng, p, r, tau, v, n=3000):
    """Bisect rays from the truncation-sphere center to sample the VO boundary,
    then refine directions near the point closest to ``v``."""
    centre = p / tau
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = _bisect_rays(p, r, tau, centre, dirs)
    for _ in range(3):
        best = pts[np.argmin(np.linalg.norm(pts - v, axis=1))]
        axis = best - centre
        axis /= np.linalg.norm(axis)
        local = axis[None, :] + rng.normal(scale=0.05, size=(1500, 3))
        local /= np.linalg.norm(local, axis=1, keepdims=True)
        pts = np.vstack([pts, _bisect_rays(p, r, tau, centre, local)])
    return pts


def test_u_matches_boundary_sampling_oracle():
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 6:
        p = rng.uniform(-50, 50, 3)
        if np.linalg.norm(p) < 15:
            continue
        r, tau = 10.0, 8.0
        v = p / np.linalg.norm(p) * rng.uniform(2, 9) + rng.normal(scale=0.4, size=3)
        if not vo_contains(p, v, r, tau):
            continue
        u, normal = compute_u_adjustment(v, p, r, tau)
        cloud = boundary_cloud(rng, p, r, tau, v)
        oracle = float(np.min(np.linalg.norm(cloud - v, axis=1)))
        assert np.linalg.norm(u) == pytest.approx(oracle, abs=0.02)
        assert np.linalg.norm(normal) == pytest.approx(1.0, abs=1e-9)
        # boundary point sits on the boundary: nudges along +/- normal flip membership
        b = v + u
        assert not vo_contains(p, b + 1e-4 * normal, r, tau)
        assert vo_contains(p, b - 1e-4 * normal, r, tau)
        checked += 1


def test_u_planar_symmetry_head_on():
    # coplanar geometry keeps the adjustment in the same plane
    p = np.array([30.0, 0.0, 0.0])
    v = np.array([6.0, 0.4, 0.0])
    assert vo_contains(p, v, 10.0, 8.0)
    u, normal = compute_u_adjustment(v, p, 10.0, 8.0)
    assert abs(u[2]) < 1e-12 and abs(normal[2]) < 1e-12


def test_u_zero_on_boundary():
    p = np.array([40.0, 0.0, 0.0])
    r, tau = 10.0, 8.0
    # bisect along a ray to land a point numerically on the boundary
    v_in = p / tau
    v_out = v_in + np.array([0.0, 30.0, 0.0])
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if vo_contains(p, v_in + mid * (v_out - v_in), r, tau):
            lo = mid
        else:
            hi = mid
    v_boundary = v_in + lo * (v_out - v_in)
    u, normal = compute_u_adjustment(v_boundary, p, r, tau)
    assert np.linalg.norm(u) < 1e-6
    assert np.linalg.norm(normal) == pytest.approx(1.0, abs=1e-9)


def test_u_rejects_outside_vo():
    with pytest.raises(ValueError, match="outside"):
        compute_u_adjustment((0.0, 0.0, 0.0), (100.0, 0, 0), 5.0, 5.0)


def test_u_overlap_branch_pushes_apart():
    p = np.array([3.0, 0.0, 0.0])  # inside combined radius 10
    v = np.array([0.0, 0.0, 0.0])
    u, normal = compute_u_adjustment(v, p, 10.0, 8.0, escape_time=1.0)
    assert normal @ p < 0  # push away from the neighbor
    assert u @ p < 0


def test_u_coincident_fallback_lateral():
    u, normal = compute_u_adjustment((0.0, 0, 0), (0.0, 0, 0), 5.0, 5.0, escape_time=1.0)
    assert np.linalg.norm(normal) == pytest.approx(1.0)
    assert np.linalg.norm(u) > 0


# --- orca_halfspace -------------------------------------------------------------


def test_halfspace_none_when_clear():
    a = uav(0, (0, 0, 0), (1, 0, 0))
    b = uav(1, (500, 0, 0), (1, 0, 0))
    assert orca_halfspace(a, b, tau=10.0) is None


def test_halfspace_symmetric_pair_mirror():
    a = uav(0, (0, 0, 0), (5, 0, 0))
    b = uav(1, (60, 0, 0), (-5, 0, 0))
    ha = orca_halfspace(a, b, tau=10.0)
    hb = orca_halfspace(b, a, tau=10.0)
    assert ha is not None and hb is not None
    # reciprocity: the u adjustments are negatives, so anchors mirror around
    # the midpoint of the two current velocities
    u_a = 2.0 * (ha.anchor - a.velocity)
    u_b = 2.0 * (hb.anchor - b.velocity)
    assert np.allclose(u_a, -u_b, atol=1e-9)
    # a feasible point for one maps to the other under the symmetry v -> -v
    probe = ha.anchor + ha.normal * 0.7
    assert (probe - ha.anchor) @ ha.normal >= 0
    assert (-probe - hb.anchor) @ hb.normal >= 0


def test_halfspace_overlapping_pair_separates():
    a = uav(0, (0, 0, 0), (0.0, 0, 0))
    b = uav(1, (6.0, 0, 0), (0.0, 0, 0))  # separation 6 < combined radius 10
    h = orca_halfspace(a, b, tau=10.0, escape_time=0.5)
    assert h is not None
    sep_axis = (b.position - a.position) / np.linalg.norm(b.position - a.position)
    assert abs(abs(h.normal @ sep_axis) - 1.0) < 1e-9
    assert h.normal @ sep_axis < 0  # permitted side moves a away from b


def test_halfspace_same_id_rejected():
    a = uav(3, (0, 0, 0), (0, 0, 0))
    with pytest.raises(ValueError):
        orca_halfspace(a, a, tau=5.0)


# --- optimal_velocity -------------------------------------------------------------


def sample_feasible_oracle(halfspaces, pref, v_max, resolution=0.01):
    """Dense grid over the speed ball; closest feasible point to pref."""
    grid = np.arange(-v_max, v_max + resolution / 2, resolution)
    best, best_d = None, np.inf
    for x in grid:
        for y in grid:
            for z in (0.0,):  # planar instances keep the oracle tractable
                v = np.array([x, y, z])
                if v @ v > v_max**2:
                    continue
                if all((v - h.anchor) @ h.normal >= 0 for h in halfspaces):
                    d = np.linalg.norm(v - pref)
                    if d < best_d:
                        best, best_d = v, d
    return best, best_d


def test_projection_empty_and_satisfied():
    pref = np.array([1.0, 2.0, 0.5])
    assert np.allclose(optimal_velocity([], pref, v_max=5.0).velocity, pref)
    h = HalfSpace(anchor=np.array([0.0, 0, 0]), normal=np.array([0.0, 0, 1.0]))
    res = optimal_velocity([h], pref, v_max=5.0)
    assert res.feasible and np.allclose(res.velocity, pref)


def test_projection_two_crossing_halfspaces_matches_sampler():
    rng = np.random.default_rng(4)
    for _ in range(5):
        n1 = np.array([1.0, rng.uniform(-1, 1), 0.0])
        n1 /= np.linalg.norm(n1)
        n2 = np.array([-0.3, 1.0 + rng.uniform(0, 1), 0.0])
        n2 /= np.linalg.norm(n2)
        hs = [
            HalfSpace(anchor=np.array([1.0, 0.5, 0.0]), normal=n1),
            HalfSpace(anchor=np.array([0.5, 1.0, 0.0]), normal=n2),
        ]
        pref = np.array([-2.0, -2.0, 0.0])
        res = optimal_velocity(hs, pref, v_max=4.0)
        oracle, oracle_d = sample_feasible_oracle(hs, pref, v_max=4.0)
        assert oracle is not None
        assert np.linalg.norm(res.velocity - pref) == pytest.approx(oracle_d, abs=0.02)
        assert res.feasible


def test_projection_feasibility_properties_random():
    rng = np.random.default_rng(5)
    for _ in range(60):
        k = int(rng.integers(2, 5))
        hs = []
        for _ in range(k):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            hs.append(HalfSpace(anchor=rng.uniform(-1.5, 1.5, 3), normal=n))
        pref = rng.uniform(-6, 6, 3)
        res = optimal_velocity(hs, pref, v_max=5.0)
        if res.feasible:
            assert all((res.velocity - h.anchor) @ h.normal >= -1e-9 for h in hs)
        assert np.linalg.norm(res.velocity) <= 5.0 + 1e-9


def test_projection_infeasible_flagged():
    n = np.array([1.0, 0.0, 0.0])
    hs = [
        HalfSpace(anchor=np.array([10.0, 0, 0]), normal=n),   # requires x >= 10
        HalfSpace(anchor=np.array([-10.0, 0, 0]), normal=-n),  # requires x <= -10
    ]
    res = optimal_velocity(hs, np.zeros(3), v_max=2.0)
    assert not res.feasible
    assert np.linalg.norm(res.velocity) <= 2.0 + 1e-9


# --- nearest point and recovery -----------------------------------------------------


def straight_traj(speed=2.0, t1=100.0, recovery=5.0):
    times = np.array([0.0, t1])
    points = np.array([[0.0, 0, 0], [speed * t1, 0, 0]])
    return TimedTrajectory(times=times, points=points, recovery_interval=recovery)


def test_nearest_point_on_sample():
    traj = straight_traj()
    point, t = nearest_trajectory_point(traj, np.array([40.0, 0, 0]))
    assert np.allclose(point, [40.0, 0, 0]) and t == pytest.approx(20.0)


def test_nearest_point_tie_prefers_earlier():
    times = np.array([0.0, 10.0, 20.0])
    pts = np.array([[0.0, 0, 0], [10.0, 0, 0], [0.0, 0, 0]])  # out and back
    traj = TimedTrajectory(times=times, points=pts)
    point, t = nearest_trajectory_point(traj, np.array([4.0, 3.0, 0]))
    assert np.allclose(point, [4.0, 0, 0])
    assert t == pytest.approx(4.0)  # not the symmetric return pass at t=16


def test_nearest_point_matches_fine_scan():
    rng = np.random.default_rng(6)
    times = np.array([0.0, 7.0, 19.0, 30.0])
    pts = rng.uniform(-50, 50, size=(4, 3))
    traj = TimedTrajectory(times=times, points=pts)
    q = rng.uniform(-60, 60, 3)
    point, t = nearest_trajectory_point(traj, q)
    ts = np.linspace(0, 30, 30001)
    scan = np.array([traj.position_at(x) for x in ts])
    d = np.linalg.norm(scan - q, axis=1)
    assert np.linalg.norm(point - q) == pytest.approx(d.min(), abs=1e-3)


def test_recovery_on_track_follows_local_velocity():
    traj = straight_traj(speed=2.0)
    a = uav(0, traj.position_at(30.0), (2.0, 0, 0), traj=traj)
    res = recovery_velocity(a, 30.0)
    assert not res.clamped and not res.terminal
    assert np.allclose(res.velocity, [2.0, 0, 0], atol=1e-9)


def test_recovery_reaches_future_point_on_time():
    traj = straight_traj(speed=2.0)
    a = uav(0, (0.0, -6.0, 0.0), (0, 0, 0), v_max=20.0, traj=traj)
    point, t_nearest = nearest_trajectory_point(traj, a.position)
    res = recovery_velocity(a, t_current=t_nearest - 2.0)
    assert np.allclose(res.velocity, (point - a.position) / 2.0)


def test_recovery_clamps_and_reports_deficit():
    times = np.array([0.0, 100.0])
    pts = np.array([[100.0, 0, 0], [100.0, 0, 0]])  # stationary target point
    traj = TimedTrajectory(times=times, points=pts, recovery_interval=2.0)
    a = uav(0, (0.0, 0, 0), (0, 0, 0), v_max=5.0, traj=traj)
    res = recovery_velocity(a, t_current=50.0)
    assert res.clamped
    assert np.allclose(res.velocity, [5.0, 0, 0])
    assert res.speed_ratio == pytest.approx((100.0 / 2.0) / 5.0)


def test_recovery_terminal_flag():
    traj = straight_traj(speed=2.0, t1=10.0)
    a = uav(0, (0.0, 50.0, 0.0), (0, 0, 0), v_max=5.0, traj=traj)
    res = recovery_velocity(a, t_current=25.0)
    assert res.terminal


def test_recovery_closed_loop_converges_monotonically():
    rng = np.random.default_rng(8)
    for _ in range(5):
        traj = straight_traj(speed=1.5, t1=400.0)
        offset = rng.normal(size=3)
        offset = offset / np.linalg.norm(offset) * rng.uniform(5.0, 50.0)
        a = uav(0, traj.position_at(0.0) + offset, (0, 0, 0), v_max=5.0, traj=traj)
        dt = 0.1
        t, time_offset = 0.0, 0.0
        dist_prev = np.inf
        converged = False
        for _ in range(4000):
            res = recovery_velocity(a, t, time_offset)
            if res.clamped:
                time_offset += (res.speed_ratio - 1.0) * dt
            a.velocity = res.velocity
            a.position = a.position + a.velocity * dt
            t += dt
            point, _ = nearest_trajectory_point(traj, a.position)
            dist = float(np.linalg.norm(point - a.position))
            if t % 1.0 < dt / 2:  # per decision-cycle comparison
                assert dist <= dist_prev + 1e-6
                dist_prev = dist
            if dist < 0.5:
                converged = True
                break
        assert converged


# --- uav state and config validation ----------------------------------------------


def test_state_validation():
    with pytest.raises(ValueError):
        uav(0, (0, 0, 0), (0, 0, 0), conflict=0.5)  # conflict < physical
    with pytest.raises(ValueError):
        UavState(id=0, position=np.zeros(3), velocity=np.zeros(3), v_max=0.0)
    with pytest.raises(ValueError):
        AvoidanceConfig(tau=0.0)
    with pytest.raises(ValueError):
        TimedTrajectory(times=np.array([0.0, 0.0]), points=np.zeros((2, 3)))
