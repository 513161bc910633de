"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see them
live). Criteria marked in the module docstrings cover oracle equivalence,
Monte-Carlo agreement, curve shapes, density orderings, loss trends,
closed-loop safety, avoidance properties, desk-scale learning efficacy,
gradient correctness, and CLI determinism.
"""

import logging
import math

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from remoteid_ca.avoidance import HalfSpace, optimal_velocity
from remoteid_ca.cli import main as cli_main
from remoteid_ca.delay import (
    average_link_delay,
    ble5_event_profile,
    ble5_link_delay,
    geometric_retry_delay,
    mc_ble5_delay,
    mc_retry_delay,
    per_uav_mean_delays,
    compute_link_delay_table,
    system_loss_rate,
)
from remoteid_ca.dqn import (
    EpsilonSchedule,
    Hyperparams,
    QNetwork,
    baseline_policy,
    evaluate_policy,
    greedy_policy,
    train,
)
from remoteid_ca.env import EnvConfig, FleetEnv
from remoteid_ca.experiments import fixed_mode_cell
from remoteid_ca.flight_sim import (
    DelayModel,
    canned_scenario,
    random_encounter_scenario,
    run_scenario,
)
from remoteid_ca.interference import FleetState, RadioConfig, SurvivalBundle, collision_survival
from remoteid_ca.timing import (
    Protocol,
    TimingConfig,
    ble4_match_slots,
    ble4_reception_delay,
    ble5_match_slots,
    timeline_oracle,
    wifi_match_slots,
    wifi_reception_delay,
)

logging.disable(logging.WARNING)

CFG = TimingConfig()
SMALL_AREAS = (100.0, 500.0, 1000.0)
LARGE_AREAS = (3000.0, 5000.0, 10000.0)
OPTIMA = {Protocol.WIFI: 10, Protocol.BLE4: 9, Protocol.BLE5: 10}


def report(name: str, passed: bool, detail: str = ""):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f" — {detail}" if detail else ""))
    assert passed, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. CRT oracle equivalence  (runtime budget: < 1 min)
# ---------------------------------------------------------------------------


def test_crt_oracle_equivalence():
    rng = np.random.default_rng(2024)
    mismatches = 0
    cases = 0
    for protocol in list(Protocol):
        for _ in range(100):
            cfg = TimingConfig(
                scan_window_ms=float(rng.choice([1.5, 2.0, 2.5, 3.0])),
                scan_interval_ms=float(rng.choice([6.0, 8.0, 10.0, 12.0])),
                dwell_ms=float(rng.choice([4.0, 6.0, 8.0])),
                switch_ms=float(rng.choice([0.5, 1.0, 2.0])),
            )
            rate = int(rng.integers(1, 11))
            t0 = int(rng.integers(0, cfg.supercycle(protocol)))
            channel = int(rng.choice([1, 6, 11])) if protocol == Protocol.WIFI else None
            if protocol == Protocol.WIFI:
                analytic = wifi_match_slots(t0, channel, cfg, rate)
            elif protocol == Protocol.BLE4:
                analytic = ble4_match_slots(t0, cfg, rate)
            else:
                analytic = ble5_match_slots(t0, cfg, rate)
            oracle = timeline_oracle(t0, cfg, protocol, rate, channel=channel)
            cases += 1
            if analytic.channels != oracle.channels:
                mismatches += 1
    report("CRT-vs-oracle equivalence", mismatches == 0,
           f"{cases} cases, {mismatches} mismatches")


# ---------------------------------------------------------------------------
# 2. Expected-delay Monte Carlo oracle  (runtime budget: < 10 min)
# ---------------------------------------------------------------------------


def test_expected_delay_monte_carlo():
    rng = np.random.default_rng(77)
    trials = 1_000_000
    worst = 0.0
    checked = {p: 0 for p in Protocol}
    while min(checked.values()) < 10:
        protocol = [p for p in Protocol if checked[p] < 10][0]
        rate = int(rng.integers(3, 11))
        t0 = int(rng.integers(0, CFG.supercycle(protocol)))
        p_succ = float(rng.uniform(0.5, 0.99))
        if protocol == Protocol.BLE5:
            n_xi, d_xi = ble5_event_profile(t0, CFG, rate)
            if n_xi.sum() == 0:
                continue
            p_sec = float(rng.uniform(0.7, 1.0))
            analytic, _ = ble5_link_delay(t0, CFG, rate, p_succ, p_sec)
            sim = mc_ble5_delay(n_xi, d_xi, p_succ, p_sec, CFG.gnss_slots, trials, rng)
        else:
            if protocol == Protocol.WIFI:
                ms = wifi_match_slots(t0, 6, CFG, rate)
                delays = [wifi_reception_delay(d, t0, CFG) for d in ms.union]
            else:
                ms = ble4_match_slots(t0, CFG, rate)
                delays = [ble4_reception_delay(d, t0, CFG) for d in ms.union]
            if not delays:
                continue
            analytic, _ = geometric_retry_delay(delays, p_succ, CFG.gnss_slots)
            sim = mc_retry_delay(delays, p_succ, CFG.gnss_slots, trials, rng)
        rel = abs(sim - analytic) / analytic
        worst = max(worst, rel)
        assert rel < 0.01, (protocol, rate, t0, p_succ, analytic, sim)
        checked[protocol] += 1
    report("expected-delay Monte Carlo agreement", worst < 0.01,
           f"30 instances at 1e6 trials, worst rel err {worst:.4%}")


# ---------------------------------------------------------------------------
# 3. Rate-curve shape reproduction
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def rate_curves():
    """Fleet effective delay vs rate at a dense all-in-range cell (10 UAVs).

    Deterministic interferer structure: everyone shares the protocol and the
    sweep rate; Wi-Fi channel draws come from fixed seeds (median of 5)."""
    curves = {}
    for protocol in Protocol:
        vals = []
        for rate in range(1, 11):
            per_seed = []
            for seed in range(5):
                cell = fixed_mode_cell(10, 100.0, protocol, rate, [seed], CFG)
                per_seed.append(cell["mean_effective_delay_ms"])
            vals.append(float(np.median(per_seed)))
        curves[protocol] = vals
    return curves


def sharp_increases(vals, threshold=0.10):
    """Rates whose delay rises by more than ``threshold`` vs the previous rate."""
    return {
        psi
        for psi in range(2, len(vals) + 1)
        if vals[psi - 1] > vals[psi - 2] * (1 + threshold)
    }


def test_rate_curve_shape_ble4(rate_curves):
    vals = rate_curves[Protocol.BLE4]
    spikes = sharp_increases(vals)
    report("rate-curve shape: BLE 4 spikes exactly at {5, 10}", spikes == {5, 10},
           f"sharp increases at {sorted(spikes)}; curve {[round(v) for v in vals]}")


def test_rate_curve_shape_ble5(rate_curves):
    """BLE 5's curve must show no sharp increase anywhere (its pointer/data
    split smooths rate mismatches). The asserted spikes elsewhere are +28%
    to +105% steps; BLE 5's largest intrinsic wiggle is ~+7% (a pointer
    coverage dip at rate 8), an order of magnitude below 'sharp'."""
    vals = rate_curves[Protocol.BLE5]
    spikes = sharp_increases(vals)
    trend_down = vals[-1] < vals[0]
    report("rate-curve shape: BLE 5 smoothly decreasing", not spikes and trend_down,
           f"sharp increases at {sorted(spikes)}; endpoints {vals[0]:.0f} -> {vals[-1]:.0f}")


def test_rate_curve_shape_wifi(rate_curves):
    """EXPECTED RED. The stated Wi-Fi spike set {4, 7, 8} is asserted
    faithfully, but rates 4 and 7 are not reproducible from the slot model
    under any defensible discretization: rate 7's coprime-adjusted interval
    (mod the 168-slot scan rotation) tiles the dwell windows with zero
    undeliverable phases, making it a local *minimum*, and rate 4's rise is
    marginal. The model's sharp increases sit at {6, 8}. Analysis and the
    16-combination discretization sweep are recorded in the decisions ledger.
    """
    vals = rate_curves[Protocol.WIFI]
    spikes = sharp_increases(vals)
    report("rate-curve shape: Wi-Fi spikes at {4, 7, 8}", spikes == {4, 7, 8},
           f"sharp increases at {sorted(spikes)}; curve {[round(v) for v in vals]}")


# ---------------------------------------------------------------------------
# 4 + 5. Density-regime ordering and packet-loss trends  (< 20 min)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def density_cells():
    seeds = list(range(10))
    cells = {}
    for protocol, rate in OPTIMA.items():
        for side in SMALL_AREAS + LARGE_AREAS:
            cells[(protocol, side)] = fixed_mode_cell(10, side, protocol, rate, seeds, CFG)
    return cells


def test_density_regime_ordering(density_cells):
    ok = True
    details = []
    for side in SMALL_AREAS:
        w = density_cells[(Protocol.WIFI, side)]["median_effective_delay_ms"]
        b4 = density_cells[(Protocol.BLE4, side)]["median_effective_delay_ms"]
        b5 = density_cells[(Protocol.BLE5, side)]["median_effective_delay_ms"]
        ok &= w < b4 < b5
        details.append(f"{side:.0f}m: wifi {w:.0f} < ble4 {b4:.0f} < ble5 {b5:.0f}")
    for side in LARGE_AREAS:
        vals = {p: density_cells[(p, side)]["median_effective_delay_ms"] for p in Protocol}
        ok &= vals[Protocol.BLE4] == min(vals.values())
        details.append(
            f"{side:.0f}m: ble4 {vals[Protocol.BLE4]:.0f} lowest of "
            f"{{wifi {vals[Protocol.WIFI]:.0f}, ble5 {vals[Protocol.BLE5]:.0f}}}"
        )
    report("density-regime ordering (10 UAVs, 10 seeds, medians)", ok, "; ".join(details))


def test_packet_loss_trends(density_cells):
    all_sides = SMALL_AREAS + LARGE_AREAS
    ble4 = [density_cells[(Protocol.BLE4, s)]["mean_loss_rate"] for s in all_sides]
    small_strict = all(a > b for a, b in zip(ble4[:3], ble4[1:3]))
    tail_nonincreasing = all(a >= b - 1e-6 for a, b in zip(ble4[2:], ble4[3:]))
    ble5 = [density_cells[(Protocol.BLE5, s)]["mean_loss_rate"] for s in SMALL_AREAS]
    wifi = [density_cells[(Protocol.WIFI, s)]["mean_loss_rate"] for s in SMALL_AREAS]
    ble5_const = max(ble5) - min(ble5) < 0.02
    wifi_const = max(wifi) - min(wifi) < 0.02
    ok = small_strict and tail_nonincreasing and ble5_const and wifi_const
    report(
        "packet-loss trends",
        ok,
        f"ble4 {['%.4f' % v for v in ble4]}, "
        f"ble5 small spread {max(ble5) - min(ble5):.4f}, wifi spread {max(wifi) - min(wifi):.4f}",
    )


# ---------------------------------------------------------------------------
# 6. Closed-loop safety on the canned scenario  (< 10 min)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def dmuca_runs():
    out = {}
    for lo, hi in ((0.0, 1.0), (1.0, 2.0), (2.0, 3.0)):
        out[(lo, hi)] = [
            run_scenario(canned_scenario(DelayModel(kind="uniform", lo=lo, hi=hi), seed=s))
            for s in range(20)
        ]
    return out


def test_dmuca_safety(dmuca_runs):
    low = np.array([r.trace.min_separation() for r in dmuca_runs[(0.0, 1.0)]])
    high = np.array([r.trace.min_separation() for r in dmuca_runs[(2.0, 3.0)]])
    all_clear_low = bool((low > 10.0).all())
    dip_fraction = float(np.mean(high < 10.0))
    floor_ok = bool((high > 2.0).all()) and bool((low > 2.0).all())
    ok = all_clear_low and dip_fraction >= 0.5 and floor_ok
    report(
        "closed-loop safety (20 seeds per regime)",
        ok,
        f"low-delay minima all > 10 m: {all_clear_low} (min {low.min():.2f}); "
        f"high-delay dip fraction {dip_fraction:.2f}; floor {min(low.min(), high.min()):.2f} m > 2",
    )


def test_dmuca_delay_degrades_separation(dmuca_runs):
    medians = [
        float(np.median([r.trace.min_separation() for r in dmuca_runs[reg]]))
        for reg in ((0.0, 1.0), (1.0, 2.0), (2.0, 3.0))
    ]
    ok = medians[0] >= medians[1] >= medians[2]
    report("delay ordering degrades separation (medians)", ok,
           f"medians {[round(m, 2) for m in medians]}")


def test_dmuca_prediction_error_monotone(dmuca_runs):
    errs = [
        float(np.mean([r.mean_prediction_error for r in dmuca_runs[reg]]))
        for reg in ((0.0, 1.0), (1.0, 2.0), (2.0, 3.0))
    ]
    ok = errs[0] <= errs[1] <= errs[2]
    report("prediction error monotone in delay bound", ok,
           f"mean errors {[round(e, 3) for e in errs]} m")


# ---------------------------------------------------------------------------
# 7. Avoidance property suite
# ---------------------------------------------------------------------------


def test_orca_randomized_encounters_no_collisions():
    rng = np.random.default_rng(31)
    violations = 0
    worst = np.inf
    for _ in range(1000):
        sc = random_encounter_scenario(rng, duration=60.0)
        res = run_scenario(sc)
        m = res.trace.min_separation()
        worst = min(worst, m)
        if m <= 2.0:  # sum of physical radii
            violations += 1
    report("no-delay encounter safety (1000 runs)", violations == 0,
           f"violations {violations}, worst separation {worst:.2f} m")


def test_orca_projection_vs_sampler():
    rng = np.random.default_rng(33)
    worst = 0.0
    for _ in range(12):
        k = int(rng.integers(2, 5))
        halfspaces = []
        for _ in range(k):
            n = np.array([rng.normal(), rng.normal(), 0.0])
            n /= np.linalg.norm(n)
            halfspaces.append(HalfSpace(anchor=rng.uniform(-1.0, 1.0, 3) * np.array([1, 1, 0]),
                                        normal=n))
        pref = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0])
        res = optimal_velocity(halfspaces, pref, v_max=4.0)
        if not res.feasible:
            continue
        # planar brute-force sampler at 0.01 m/s resolution
        grid = np.arange(-4.0, 4.0 + 0.005, 0.01)
        xx, yy = np.meshgrid(grid, grid)
        pts = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
        mask = np.einsum("ij,ij->i", pts, pts) <= 16.0
        for h in halfspaces:
            mask &= (pts - h.anchor) @ h.normal >= 0
        if not mask.any():
            continue
        feas = pts[mask]
        best = float(np.min(np.linalg.norm(feas - pref, axis=1)))
        got = float(np.linalg.norm(res.velocity - pref))
        worst = max(worst, abs(got - best))
        assert got <= best + 0.02
    report("projection matches feasible-set sampler", worst <= 0.02,
           f"worst deviation {worst:.4f} m/s (sampler resolution 0.01)")


# ---------------------------------------------------------------------------
# 8. Desk-scale learning efficacy  (< 60 min)
# ---------------------------------------------------------------------------

DESK_PSI_MAX = 5
DESK_N = 5
DESK_EVAL_SEEDS = (201, 202, 203, 204, 205)
# desk-scale hyperparameters: small buffer/warmup so training starts inside the
# episode budget, and a low discount because per-step repositioning makes this
# an effective contextual bandit (bootstrapping through the next random
# placement only adds noise at this scale)
DESK_HP = dict(
    steps_per_episode=100,
    batch_size=128,
    buffer_capacity=6000,
    warmup_transitions=2000,
    learning_rate=5e-4,
    target_retention=0.99,
    gamma=0.2,
    hidden=(128, 64),
)


def desk_env(mode: str, seed: int) -> FleetEnv:
    return FleetEnv(
        EnvConfig(
            n_uavs=DESK_N,
            area_sides=(100.0,) if mode == "static" else
            (100.0, 500.0, 1000.0, 3000.0, 5000.0, 10000.0),
            area_mode="static" if mode == "static" else "dynamic",
            psi_max=DESK_PSI_MAX,
            seed=seed,
        )
    )


def desk_train(mode: str, episodes: int, seed: int):
    hp = Hyperparams(
        episodes=episodes,
        epsilon=EpsilonSchedule(e_init=1.0, e_final=0.05,
                                decay_episodes=int(episodes * 0.75)),
        seed=seed,
        **DESK_HP,
    )
    return train(desk_env(mode, seed=100 + seed), hp)


def desk_medians(agents, mode: str) -> dict[str, float]:
    sets = {"learned": [greedy_policy(a) for a in agents]}
    for proto in Protocol:
        for rate in range(1, DESK_PSI_MAX + 1):
            sets[f"fixed_{proto.value}_{rate}"] = [
                baseline_policy("fixed", proto, rate, DESK_PSI_MAX)
            ] * DESK_N
    out = {}
    for name, pols in sets.items():
        vals = [
            evaluate_policy(desk_env(mode, s), pols, episodes=4, steps=15, seed=s)
            for s in DESK_EVAL_SEEDS
        ]
        out[name] = float(np.median(vals))
    return out


def test_learning_efficacy_static():
    result = desk_train("static", episodes=150, seed=1)
    meds = desk_medians(result.agents, "static")
    fixed = {k: v for k, v in meds.items() if k.startswith("fixed_")}
    best = min(fixed.values())
    ok = meds["learned"] <= 1.10 * best
    report(
        "learning efficacy (a): static small area within 10% of best fixed",
        ok,
        f"learned {meds['learned']:.1f} vs best fixed {best:.1f} "
        f"({min(fixed, key=fixed.get)})",
    )


def test_learning_efficacy_dynamic():
    """EXPECTED RED. The >= 5% margin is asserted faithfully at the stated
    desk scale, but it is unattainable there: with rates capped at 5, the
    per-(area, action) oracle policy itself beats the best fixed policy by
    only +4.6% (the density-adaptation advantage comes from Wi-Fi's high-rate
    regime, which the rate cap removes), so no learner can reach 5%. The
    trained policy does beat every fixed policy, just under the bar. Full
    analysis in the decisions ledger.
    """
    result = desk_train("dynamic", episodes=300, seed=1)
    meds = desk_medians(result.agents, "dynamic")
    fixed = {k: v for k, v in meds.items() if k.startswith("fixed_")}
    margin = min((v - meds["learned"]) / v for v in fixed.values())
    closest = min(fixed, key=lambda k: (fixed[k] - meds["learned"]) / fixed[k])
    ok = margin >= 0.05
    report(
        "learning efficacy (b): dynamic density beats every fixed by >= 5%",
        ok,
        f"learned {meds['learned']:.1f}; tightest margin {margin:+.1%} vs {closest} "
        f"({fixed[closest]:.1f}); adaptive oracle ceiling is +4.6% at this scale",
    )


# ---------------------------------------------------------------------------
# 9. Gradient check
# ---------------------------------------------------------------------------


def test_gradient_finite_differences_ten_networks():
    from test_dqn import finite_difference_check

    rng = np.random.default_rng(93)
    worst = 0.0
    for k in range(10):
        net = QNetwork(
            int(rng.integers(3, 8)), int(rng.integers(2, 7)),
            hidden=(int(rng.integers(6, 20)), int(rng.integers(4, 12))),
            rng=np.random.default_rng(k),
        )
        n_in = net.weights[0].shape[0]
        obs = rng.normal(size=(12, n_in))
        actions = rng.integers(0, net.n_actions, size=12)
        y = rng.normal(size=12)
        worst = max(worst, finite_difference_check(net, obs, actions, y))
    report("analytic gradients vs central differences (10 nets)", worst < 1e-4,
           f"worst relative deviation {worst:.2e}")


# ---------------------------------------------------------------------------
# 10. CLI determinism
# ---------------------------------------------------------------------------


def test_cli_rerun_byte_identical(tmp_path):
    runner = CliRunner()
    cfg = {
        "env": {"n_uavs": 4, "area_sides": [100.0, 3000.0], "psi_max": 5},
        "seeds": [0, 1],
        "rates": [2, 9],
    }
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    outputs = {}
    for cmd, fname in (
        ("delay-sweep", "delay_sweep.csv"),
        ("packet-loss", "packet_loss.csv"),
    ):
        pair = []
        for rep in range(2):
            out = tmp_path / f"{cmd}-{rep}"
            res = runner.invoke(cli_main, [cmd, "--config", str(cfg_path), "--out", str(out)])
            assert res.exit_code == 0, res.output
            pair.append((out / fname).read_bytes())
        outputs[cmd] = pair[0] == pair[1]
    dmuca_pair = []
    for rep in range(2):
        out = tmp_path / f"dmuca-{rep}"
        res = runner.invoke(cli_main, ["dmuca", "--out", str(out), "--seed", "3"])
        assert res.exit_code == 0, res.output
        dmuca_pair.append(
            (out / "separations.csv").read_bytes() + (out / "trajectories.csv").read_bytes()
        )
    outputs["dmuca"] = dmuca_pair[0] == dmuca_pair[1]
    report("CLI reruns byte-identical", all(outputs.values()), str(outputs))
