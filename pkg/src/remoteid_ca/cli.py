"""Command-line entry points: experiment commands with manifested outputs.

Output root comes from ``--out`` or the REMOTEID_CA_OUT environment variable
(default ./results). Exit codes: 0 success, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import csv
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, config_digest, load_config
from .dqn import (
    Hyperparams,
    TrainingDivergence,
    baseline_policy,
    evaluate_policy,
    greedy_policy,
    train,
)
from .env import EnvConfig, FleetEnv
from .experiments import fixed_mode_cell
from .flight_sim import DelayModel, canned_scenario, run_scenario, separation_metrics
from .manifest import RunManifest, write_manifest
from .timing import Protocol

EXIT_CONFIG_ERROR = 2
EXIT_DIVERGENCE = 3

FIXED_OPTIMA = {Protocol.BLE4: 9, Protocol.BLE5: 10, Protocol.WIFI: 10}


def _out_dir(out: str | None) -> Path:
    root = Path(out or os.environ.get("REMOTEID_CA_OUT", "results"))
    root.mkdir(parents=True, exist_ok=True)
    return root


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load(config_path, **overrides) -> RunConfig:
    try:
        return load_config(config_path, overrides or None)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)


@click.group()
def main():
    """Broadcast-timing delay models and the delay-aware avoidance simulator."""


@main.command("delay-sweep")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--seeds", type=int, default=None, help="number of seeds per cell")
def cmd_delay_sweep(config_path, out, seeds):
    """Mean fleet delay per (protocol, rate, area) cell under fixed modes."""
    cfg = _load(config_path)
    seed_list = list(cfg.seeds) if seeds is None else list(range(seeds))
    started = time.time()
    out_dir = _out_dir(out)
    rows = []
    for proto in Protocol:
        for rate in cfg.rates:
            for side in cfg.env.area_sides:
                cell = fixed_mode_cell(
                    cfg.env.n_uavs, cfg.env.side_length(side), proto, rate,
                    seed_list, cfg.timing, cfg.budget,
                )
                rows.append(
                    [
                        cell["protocol"],
                        cell["psi"],
                        f"{cell['area_side_m']:.1f}",
                        cell["n_seeds"],
                        f"{cell['mean_effective_delay_ms']:.6f}",
                        f"{cell['median_effective_delay_ms']:.6f}",
                        f"{cell['mean_conditional_delay_ms']:.6f}",
                    ]
                )
    path = out_dir / "delay_sweep.csv"
    _write_csv(
        path,
        ["protocol", "psi", "area_side_m", "n_seeds",
         "mean_effective_delay_ms", "median_effective_delay_ms", "mean_conditional_delay_ms"],
        rows,
    )
    manifest = RunManifest("delay-sweep", config_digest(cfg), seed_list, [path.name])
    write_manifest(manifest, out_dir, started)
    click.echo(f"wrote {path}")


@main.command("packet-loss")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--seeds", type=int, default=None)
def cmd_packet_loss(config_path, out, seeds):
    """Mean per-message loss probability per (protocol, rate, area) cell."""
    cfg = _load(config_path)
    seed_list = list(cfg.seeds) if seeds is None else list(range(seeds))
    started = time.time()
    out_dir = _out_dir(out)
    rows = []
    for proto in Protocol:
        for rate in cfg.rates:
            for side in cfg.env.area_sides:
                cell = fixed_mode_cell(
                    cfg.env.n_uavs, cfg.env.side_length(side), proto, rate,
                    seed_list, cfg.timing, cfg.budget,
                )
                rows.append(
                    [
                        cell["protocol"],
                        cell["psi"],
                        f"{cell['area_side_m']:.1f}",
                        cell["n_seeds"],
                        f"{cell['mean_loss_rate']:.6f}",
                    ]
                )
    path = out_dir / "packet_loss.csv"
    _write_csv(path, ["protocol", "psi", "area_side_m", "n_seeds", "mean_loss_rate"], rows)
    manifest = RunManifest("packet-loss", config_digest(cfg), seed_list, [path.name])
    write_manifest(manifest, out_dir, started)
    click.echo(f"wrote {path}")


@main.command("dmuca")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--delay-lo", type=float, default=None)
@click.option("--delay-hi", type=float, default=None)
@click.option("--seed", type=int, default=0)
def cmd_dmuca(config_path, out, delay_lo, delay_hi, seed):
    """Run the canned five-UAV avoidance scenario and log its traces."""
    cfg = _load(config_path)
    lo = cfg.delay_lo if delay_lo is None else delay_lo
    hi = cfg.delay_hi if delay_hi is None else delay_hi
    if not 0 <= lo <= hi:
        click.echo(f"config error: need 0 <= delay_lo <= delay_hi, got [{lo}, {hi}]", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    started = time.time()
    out_dir = _out_dir(out)
    scenario = canned_scenario(DelayModel(kind="uniform", lo=lo, hi=hi), seed=seed,
                               avoidance=cfg.avoidance)
    result = run_scenario(scenario, cfg.timing)

    traj_path = out_dir / "trajectories.csv"
    rows = []
    stride = max(1, int(round(1.0 / scenario.physics_dt)))  # 1 Hz logging
    for row in range(0, result.trajectory_log.shape[0], stride):
        t = result.trace.times[row]
        for k in range(result.trajectory_log.shape[1]):
            x, y, z = result.trajectory_log[row, k]
            rows.append([f"{t:.1f}", k, f"{x:.3f}", f"{y:.3f}", f"{z:.3f}"])
    _write_csv(traj_path, ["t", "id", "x", "y", "z"], rows)

    sep_path = out_dir / "separations.csv"
    rows = []
    for row in range(0, result.trace.distances.shape[0], stride):
        t = result.trace.times[row]
        for k, (i, j) in enumerate(result.trace.pairs):
            rows.append([f"{t:.1f}", i, j, f"{result.trace.distances[row, k]:.3f}"])
    _write_csv(sep_path, ["t", "id_a", "id_b", "distance_m"], rows)

    delay_path = out_dir / "message_delays.csv"
    _write_csv(
        delay_path,
        ["sent_t", "sender", "receiver", "delay_s"],
        [[f"{t:.1f}", j, i, f"{d:.6f}"] for t, j, i, d in result.delay_log],
    )

    metrics = separation_metrics(result.trace)
    minima_path = out_dir / "pair_minima.csv"
    _write_csv(
        minima_path,
        ["id_a", "id_b", "min_distance_m", "delay_lo_s", "delay_hi_s"],
        [
            [a, b, f"{metrics['pair_minima'][(a, b)]:.3f}", f"{lo:.1f}", f"{hi:.1f}"]
            for (a, b) in result.trace.pairs
        ],
    )
    manifest = RunManifest(
        "dmuca", config_digest(cfg), [seed],
        [traj_path.name, sep_path.name, delay_path.name, minima_path.name],
        extra={
            "delay_interval_s": [lo, hi],
            "min_separation_m": round(metrics["min_separation"], 3),
            "pairs_below_conflict": [list(p) for p in metrics["pairs_below_conflict"]],
        },
    )
    write_manifest(manifest, out_dir, started)
    click.echo(f"min separation {metrics['min_separation']:.2f} m; wrote {out_dir}")


def _desk_env_factory(cfg: RunConfig):
    def factory(seed: int) -> FleetEnv:
        env_cfg = EnvConfig(
            n_uavs=cfg.env.n_uavs,
            area_sides=cfg.env.area_sides,
            area_mode=cfg.env.area_mode,
            area_as_surface=cfg.env.area_as_surface,
            altitude_band=cfg.env.altitude_band,
            psi_max=cfg.env.psi_max,
            weights=cfg.env.weights,
            seed=seed,
        )
        return FleetEnv(env_cfg, cfg.timing, cfg.budget)

    return factory


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--episodes", type=int, default=None)
def cmd_train(config_path, out, episodes):
    """Train per-UAV Q-networks; persist checkpoints and the reward log."""
    cfg = _load(config_path)
    hp = cfg.hyperparams
    if episodes is not None:
        hp = Hyperparams(**{**hp.__dict__, "episodes": episodes})
    started = time.time()
    out_dir = _out_dir(out)
    env = FleetEnv(cfg.env, cfg.timing, cfg.budget)
    try:
        result = train(env, hp)
    except TrainingDivergence as exc:
        click.echo(f"training diverged: {exc}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    log_path = out_dir / "training_log.csv"
    log_path.write_text(result.log_csv())
    outputs = [log_path.name]
    for k, agent in enumerate(result.agents):
        ckpt = out_dir / f"agent_{k}.npz"
        agent.save(str(ckpt))
        outputs.append(ckpt.name)
    manifest = RunManifest(
        "train", config_digest(cfg), [hp.seed], outputs,
        extra={"mean_decision_latency_ms": round(result.mean_decision_latency_s * 1e3, 4)},
    )
    write_manifest(manifest, out_dir, started)
    click.echo(f"trained {len(result.agents)} agents; wrote {log_path}")


@main.command("evaluate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--checkpoints", type=click.Path(file_okay=False), default=None,
              help="directory of agent_<k>.npz files (defaults to --out)")
@click.option("--episodes", type=int, default=3)
@click.option("--steps", type=int, default=20)
def cmd_evaluate(config_path, out, checkpoints, episodes, steps):
    """Compare the learned policy against fixed and random baselines."""
    cfg = _load(config_path)
    started = time.time()
    out_dir = _out_dir(out)
    ckpt_dir = Path(checkpoints) if checkpoints else out_dir
    factory = _desk_env_factory(cfg)
    psi_max = cfg.env.psi_max
    n = cfg.env.n_uavs

    policy_sets: dict[str, list] = {}
    probe = factory(0)
    obs_dim = len(probe.observe(0))
    learned = None
    if (ckpt_dir / "agent_0.npz").exists():
        from .dqn import Agent

        learned = []
        for k in range(n):
            agent = Agent(obs_dim, 3 * psi_max, cfg.hyperparams, np.random.default_rng(k))
            agent.load(str(ckpt_dir / f"agent_{k}.npz"))
            learned.append(agent)
        policy_sets["learned"] = [greedy_policy(a) for a in learned]
    for proto in Protocol:
        rate = min(FIXED_OPTIMA[proto], psi_max)
        policy_sets[f"fixed_{proto.value}_{rate}"] = [
            baseline_policy("fixed", proto, rate, psi_max) for _ in range(n)
        ]
    policy_sets["random"] = [baseline_policy("random", psi_max=psi_max) for _ in range(n)]

    t_latency = None
    rows = []
    for name, policies in sorted(policy_sets.items()):
        per_seed = []
        for seed in cfg.seeds:
            env = factory(seed)
            per_seed.append(evaluate_policy(env, policies, episodes, steps, seed))
        rows.append([name, len(cfg.seeds), f"{float(np.mean(per_seed)):.6f}",
                     f"{float(np.median(per_seed)):.6f}"])
    if learned is not None:
        t0 = time.perf_counter()
        reps = 200
        obs = probe.observe(0)
        for _ in range(reps):
            learned[0].q.forward(obs)
        t_latency = (time.perf_counter() - t0) / reps * 1e3

    path = out_dir / "evaluation.csv"
    _write_csv(path, ["policy", "n_seeds", "mean_delay_ms", "median_delay_ms"], rows)
    manifest = RunManifest(
        "evaluate", config_digest(cfg), list(cfg.seeds), [path.name],
        extra={} if t_latency is None else {"mean_decision_latency_ms": round(t_latency, 4)},
    )
    write_manifest(manifest, out_dir, started)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
