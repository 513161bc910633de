"""Expected per-link message delays, phase averages, and the fleet objective.

A message broadcast at phase ``t0`` is retried across GNSS cycles until one
copy both lands in a scan window and survives interference; the expected
delay is a geometric series over retry cycles, evaluated in closed form.
A phase with no capture opportunity never delivers ("undeliverable"); the
per-message failure probability over one cycle is the packet-loss metric.

Two aggregates are reported per link:

* ``mean_delay_ms``       expectation conditional on delivery (sentinel
                          phases excluded),
* ``effective_delay_ms``  the loss-folded mean, where each lost message is
                          charged the delay bound (one full GNSS cycle plus
                          the protocol's maximal in-cycle reception tail).

The fleet objective (long-term average message delay) and rewards are built
on the effective delay; the conditional mean is kept alongside for analysis.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .interference import (
    PSI_MAX_DEFAULT,
    FleetState,
    SurvivalBundle,
    collision_survival,
    recv_set,
)
from .timing import (
    MatchSlotSet,
    Protocol,
    TimingConfig,
    ble4_match_slots,
    ble4_reception_delay,
    ble5_match_slots,
    wifi_match_slots,
    wifi_reception_delay,
)

__all__ = [
    "LinkDelay",
    "LinkDelayTable",
    "geometric_retry_delay",
    "ble4_link_delay",
    "ble5_link_delay",
    "wifi_link_delay",
    "average_link_delay",
    "compute_link_delay_table",
    "system_objective",
    "mc_retry_delay",
    "mc_ble5_delay",
    "sample_message_delay",
]

log = logging.getLogger(__name__)

UNDELIVERABLE = None  # sentinel: no delivery possible at this phase

CSV_SCHEMA_VERSION = 1
LINK_CSV_COLUMNS = (
    "sender",
    "receiver",
    "protocol",
    "psi",
    "t0_count",
    "mean_delay_ms",
    "effective_delay_ms",
    "loss_rate",
)


# ---------------------------------------------------------------------------
# per-phase expectations
# ---------------------------------------------------------------------------


def geometric_retry_delay(delays_slots, p_succ: float, gnss_slots: int):
    """Closed-form expected delay (slots) of the cross-cycle retry series.

    ``delays_slots`` are the in-cycle reception delays of the matching
    packets in capture order; each attempt independently survives with
    ``p_succ``. Returns ``(expected_slots | None, cycle_failure_prob)``.
    """
    n = len(delays_slots)
    if n == 0 or p_succ <= 0.0:
        return UNDELIVERABLE, 1.0
    q = 1.0 - p_succ
    q_cycle = q**n
    if q_cycle >= 1.0:
        return UNDELIVERABLE, 1.0
    weights = p_succ * q ** np.arange(n)
    first_cycle = float(weights @ np.asarray(delays_slots, dtype=float))
    expected = first_cycle / (1.0 - q_cycle) + gnss_slots * q_cycle / (1.0 - q_cycle)
    return expected, q_cycle


def truncated_retry_delay(delays_slots, p_succ: float, gnss_slots: int, tail_tol: float = 1e-9):
    """Direct k-summation reference for the closed form (tests/debugging)."""
    n = len(delays_slots)
    if n == 0 or p_succ <= 0.0:
        return UNDELIVERABLE
    q = 1.0 - p_succ
    q_cycle = q**n
    total, mass, k = 0.0, 0.0, 0
    while (1.0 - mass) > tail_tol and k < 100_000:
        for m, d in enumerate(delays_slots):
            w = (q ** (m + n * k)) * p_succ
            total += w * (d + k * gnss_slots)
            mass += w
        k += 1
    if mass <= 0.0:
        return UNDELIVERABLE
    return total / mass  # renormalize the truncated tail


def ble4_link_delay(t0: int, cfg: TimingConfig, rate: int, p_succ: float):
    """Expected slots for one BLE 4 message at phase ``t0``; (delay|None, loss)."""
    ms = ble4_match_slots(t0, cfg, rate)
    delays = [ble4_reception_delay(d, t0, cfg) for d in ms.union]
    return geometric_retry_delay(delays, p_succ, cfg.gnss_slots)


def wifi_link_delay(t0: int, channel: int, cfg: TimingConfig, rate: int, p_succ: float):
    ms = wifi_match_slots(t0, channel, cfg, rate)
    delays = [wifi_reception_delay(d, t0, cfg) for d in ms.union]
    return geometric_retry_delay(delays, p_succ, cfg.gnss_slots)


def ble5_event_profile(t0: int, cfg: TimingConfig, rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-event pointer-match counts and auxiliary delays at phase ``t0``.

    Returns ``(n_xi, d_xi)`` arrays of length ``rate``: how many captured
    pointers fall in each event's interval, and that event's auxiliary
    reception delay in slots.
    """
    ms = ble5_match_slots(t0, cfg, rate)
    interval = cfg.event_interval(Protocol.BLE5, rate)
    union = np.asarray(ms.union, dtype=np.int64)
    n_xi = np.zeros(rate, dtype=np.int64)
    if union.size:
        idx = (union - t0) // interval
        valid = (idx >= 0) & (idx < rate)
        np.add.at(n_xi, idx[valid], 1)
    const = (
        cfg.slots(cfg.aux_offset_ms)
        + cfg.slots(cfg.aux_uncertainty_ms)
        + cfg.slots(cfg.aux_packet_ms)
    )
    d_xi = np.arange(rate, dtype=np.int64) * interval + const
    return n_xi, d_xi


def ble5_link_delay(t0: int, cfg: TimingConfig, rate: int, p_primary: float, p_secondary: float):
    """Expected slots for one BLE 5 message at phase ``t0``; (delay|None, loss).

    Event ``xi`` delivers when at least one of its ``n_xi`` captured pointers
    survives the primary channel and the auxiliary packet survives the
    secondary channel; failures chain geometrically across cycles.
    """
    n_xi, d_xi = ble5_event_profile(t0, cfg, rate)
    p_xi = np.where(n_xi > 0, (1.0 - (1.0 - p_primary) ** n_xi) * p_secondary, 0.0)
    fail_prefix = np.cumprod(1.0 - p_xi)
    h = np.concatenate(([1.0], fail_prefix[:-1]))  # prefix failure within the cycle
    cycle_fail = float(fail_prefix[-1]) if rate else 1.0
    if cycle_fail >= 1.0:
        return UNDELIVERABLE, 1.0
    first_cycle = float(np.sum(h * p_xi * d_xi))
    expected = first_cycle / (1.0 - cycle_fail) + cfg.gnss_slots * cycle_fail / (1.0 - cycle_fail)
    return expected, cycle_fail


# ---------------------------------------------------------------------------
# phase-averaged link delays
# ---------------------------------------------------------------------------


@lru_cache(maxsize=512)
def _ble_delay_matrix(cfg: TimingConfig, protocol: Protocol, rate: int):
    """(supercycle, max_matches) padded in-cycle delay matrix + mask, in slots."""
    sup = cfg.ble_supercycle
    pdu = cfg.pdu_slots(protocol)
    build = ble4_match_slots if protocol == Protocol.BLE4 else ble5_match_slots
    rows = [[d - t0 + pdu for d in build(t0, cfg, rate).union] for t0 in range(sup)]
    width = max((len(r) for r in rows), default=0)
    mat = np.zeros((sup, max(width, 1)))
    mask = np.zeros_like(mat, dtype=bool)
    for r, row in enumerate(rows):
        mat[r, : len(row)] = row
        mask[r, : len(row)] = True
    return mat, mask


@lru_cache(maxsize=512)
def _wifi_delay_matrix(cfg: TimingConfig, rate: int, channel: int):
    sup = cfg.wifi_supercycle
    pdu = cfg.pdu_slots(Protocol.WIFI)
    rows = [
        [d - t0 + pdu for d in wifi_match_slots(t0, channel, cfg, rate).union]
        for t0 in range(sup)
    ]
    width = max((len(r) for r in rows), default=0)
    mat = np.zeros((sup, max(width, 1)))
    mask = np.zeros_like(mat, dtype=bool)
    for r, row in enumerate(rows):
        mat[r, : len(row)] = row
        mask[r, : len(row)] = True
    return mat, mask


@lru_cache(maxsize=512)
def _ble5_event_matrix(cfg: TimingConfig, rate: int):
    sup = cfg.ble_supercycle
    n = np.zeros((sup, rate), dtype=np.int64)
    d = None
    for t0 in range(sup):
        n_xi, d_xi = ble5_event_profile(t0, cfg, rate)
        n[t0] = n_xi
        d = d_xi  # phase-independent
    return n, d


@dataclass(frozen=True)
class LinkDelay:
    """Phase-averaged delay for one ordered link."""

    sender: int
    receiver: int
    protocol: Protocol
    rate: int
    t0_count: int
    mean_delay_ms: float | None  # conditional on delivery; None if never deliverable
    effective_delay_ms: float
    loss_rate: float


def _phase_average(
    expected: np.ndarray,
    first_cycle: np.ndarray,
    fail: np.ndarray,
    cap_slots: float,
    delta_ms: float,
):
    """Aggregate per-phase expectations into the two delay means + loss.

    ``expected`` is the full cross-cycle retry expectation (inf when the
    phase never delivers); ``first_cycle`` the delivered-this-cycle delay
    mass. The effective per-message delay charges the cycle-failure mass the
    delay bound: ``first_cycle + fail * cap``.
    """
    deliverable = np.isfinite(expected)
    loss = float(np.mean(fail))
    effective = float(np.mean(first_cycle + fail * cap_slots)) * delta_ms
    if not deliverable.any():
        return None, effective, loss
    cond_mean = float(np.mean(expected[deliverable])) * delta_ms
    return cond_mean, effective, loss


def average_link_delay(
    cfg: TimingConfig,
    protocol: Protocol,
    rate: int,
    survival: SurvivalBundle,
    wifi_channel: int | None = None,
) -> tuple[float | None, float, float]:
    """Uniform phase average over the protocol's scan supercycle.

    Returns ``(mean_delay_ms | None, effective_delay_ms, loss_rate)``.
    """
    g = cfg.gnss_slots
    cap = g + cfg.max_reception_tail(protocol)
    if protocol == Protocol.BLE5:
        n_mat, d_vec = _ble5_event_matrix(cfg, rate)
        p_xi = np.where(
            n_mat > 0,
            (1.0 - (1.0 - survival.p_primary) ** n_mat) * survival.p_secondary,
            0.0,
        )
        fail_prefix = np.cumprod(1.0 - p_xi, axis=1)
        h = np.concatenate([np.ones((p_xi.shape[0], 1)), fail_prefix[:, :-1]], axis=1)
        cycle_fail = fail_prefix[:, -1]
        first_cycle = np.sum(h * p_xi * d_vec[None, :], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            expected = np.where(
                cycle_fail < 1.0,
                first_cycle / (1.0 - cycle_fail) + g * cycle_fail / (1.0 - cycle_fail),
                np.inf,
            )
        return _phase_average(expected, first_cycle, cycle_fail, cap, cfg.delta_ms)

    p = survival.p_succ
    if protocol == Protocol.WIFI:
        if wifi_channel is None:
            raise ValueError("Wi-Fi link average requires the sender's channel")
        mat, mask = _wifi_delay_matrix(cfg, rate, wifi_channel)
    else:
        mat, mask = _ble_delay_matrix(cfg, protocol, rate)
    n_row = mask.sum(axis=1)
    if p <= 0.0:
        fail = np.ones(mat.shape[0])
        zeros = np.zeros(mat.shape[0])
        return _phase_average(np.full(mat.shape[0], np.inf), zeros, fail, cap, cfg.delta_ms)
    q = 1.0 - p
    rank = np.where(mask, np.cumsum(mask, axis=1) - 1, 0)
    weights = np.where(mask, p * q**rank, 0.0)
    first_cycle = np.sum(weights * mat, axis=1)
    q_cycle = np.where(n_row > 0, q ** n_row.astype(float), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        expected = np.where(
            q_cycle < 1.0,
            first_cycle / (1.0 - q_cycle) + g * q_cycle / (1.0 - q_cycle),
            np.inf,
        )
    return _phase_average(expected, first_cycle, q_cycle, cap, cfg.delta_ms)


# ---------------------------------------------------------------------------
# fleet tables and objective
# ---------------------------------------------------------------------------


@dataclass
class LinkDelayTable:
    """Phase-averaged delays for every deliverable ordered pair in a fleet."""

    links: list[LinkDelay]
    fleet_size: int

    def by_sender(self, j: int) -> list[LinkDelay]:
        return [l for l in self.links if l.sender == j]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LINK_CSV_COLUMNS)
        for l in sorted(self.links, key=lambda x: (x.sender, x.receiver)):
            w.writerow(
                [
                    l.sender,
                    l.receiver,
                    l.protocol.value,
                    l.rate,
                    l.t0_count,
                    "" if l.mean_delay_ms is None else f"{l.mean_delay_ms:.6f}",
                    f"{l.effective_delay_ms:.6f}",
                    f"{l.loss_rate:.6f}",
                ]
            )
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": CSV_SCHEMA_VERSION,
                "fleet_size": self.fleet_size,
                "links": [
                    {
                        "sender": l.sender,
                        "receiver": l.receiver,
                        "protocol": l.protocol.value,
                        "psi": l.rate,
                        "t0_count": l.t0_count,
                        "mean_delay_ms": l.mean_delay_ms,
                        "effective_delay_ms": l.effective_delay_ms,
                        "loss_rate": l.loss_rate,
                    }
                    for l in sorted(self.links, key=lambda x: (x.sender, x.receiver))
                ],
            },
            indent=2,
            sort_keys=True,
        )


def receiver_union(fleet: FleetState, sender: int) -> set[int]:
    """Union of the three protocols' receiver sets (the active one, under
    one-protocol-per-UAV this reduces to the selected protocol's set)."""
    out: set[int] = set()
    for proto in Protocol:
        out |= recv_set(fleet, sender, proto)
    return out


def compute_link_delay_table(fleet: FleetState, timing: TimingConfig | None = None) -> LinkDelayTable:
    timing = timing or TimingConfig()
    links: list[LinkDelay] = []
    for j in range(fleet.size):
        cfg_j = fleet.configs[j]
        for i in sorted(receiver_union(fleet, j)):
            bundle = collision_survival(fleet, j, i, timing)
            mean, effective, loss = average_link_delay(
                timing, cfg_j.protocol, cfg_j.rate, bundle, cfg_j.wifi_channel
            )
            links.append(
                LinkDelay(
                    sender=j,
                    receiver=i,
                    protocol=cfg_j.protocol,
                    rate=cfg_j.rate,
                    t0_count=timing.supercycle(cfg_j.protocol),
                    mean_delay_ms=mean,
                    effective_delay_ms=effective,
                    loss_rate=loss,
                )
            )
    return LinkDelayTable(links=links, fleet_size=fleet.size)


def validate_radio_constraints(fleet: FleetState, psi_max: int = PSI_MAX_DEFAULT) -> None:
    """P0 feasibility: one protocol each (a,b), rate cap (c), positive integer rate (d)."""
    for idx, cfg in enumerate(fleet.configs):
        if not isinstance(cfg.protocol, Protocol):
            raise ValueError(f"constraint (a)/(b) violated: UAV {idx} has no single protocol")
        if cfg.rate > psi_max:
            raise ValueError(f"constraint (c) violated: UAV {idx} rate {cfg.rate} > {psi_max}")
        if not isinstance(cfg.rate, int) or cfg.rate < 1:
            raise ValueError(f"constraint (d) violated: UAV {idx} rate {cfg.rate!r}")


def per_uav_mean_delays(table: LinkDelayTable) -> np.ndarray:
    """Per-sender mean effective delay over its receiver set; 0 when empty."""
    out = np.zeros(table.fleet_size)
    isolated = []
    for j in range(table.fleet_size):
        rows = table.by_sender(j)
        if not rows:
            isolated.append(j)
            continue
        out[j] = float(np.mean([r.effective_delay_ms for r in rows]))
    if isolated:
        log.warning(
            "%d of %d UAVs have no receivers in range and contribute 0 to the objective: %s",
            len(isolated), table.fleet_size, isolated,
        )
    return out


def system_loss_rate(table: LinkDelayTable) -> float:
    """Mean per-message loss probability over all in-range ordered links."""
    if not table.links:
        return 0.0
    return float(np.mean([l.loss_rate for l in table.links]))


def system_objective(
    fleet: FleetState,
    timing: TimingConfig | None = None,
    psi_max: int = PSI_MAX_DEFAULT,
    table: LinkDelayTable | None = None,
) -> float:
    """Fleet-mean of per-UAV mean link delays (ms), the optimization objective."""
    validate_radio_constraints(fleet, psi_max)
    if table is None:
        table = compute_link_delay_table(fleet, timing)
    return float(np.mean(per_uav_mean_delays(table)))


# ---------------------------------------------------------------------------
# Monte Carlo oracle and per-message sampling
# ---------------------------------------------------------------------------


def mc_retry_delay(
    delays_slots,
    p_succ: float,
    gnss_slots: int,
    n_trials: int,
    rng: np.random.Generator,
    max_cycles: int = 4000,
) -> float:
    """Simulated mean delay (slots) of the retry process (BLE 4 / Wi-Fi shape)."""
    delays = np.asarray(delays_slots, dtype=float)
    n = len(delays)
    if n == 0 or p_succ <= 0.0:
        raise ValueError("undeliverable configuration has no finite mean")
    total = 0.0
    remaining = n_trials
    for k in range(max_cycles):
        if remaining == 0:
            break
        hits = rng.random((remaining, n)) < p_succ
        any_hit = hits.any(axis=1)
        first = np.argmax(hits, axis=1)
        total += np.sum(delays[first[any_hit]] + k * gnss_slots)
        remaining = int(np.sum(~any_hit))
    if remaining:
        raise RuntimeError(f"{remaining} trials undelivered after {max_cycles} cycles")
    return total / n_trials


def mc_ble5_delay(
    n_xi,
    d_xi,
    p_primary: float,
    p_secondary: float,
    gnss_slots: int,
    n_trials: int,
    rng: np.random.Generator,
    max_cycles: int = 4000,
) -> float:
    """Simulated mean delay (slots) of the BLE 5 pointer+auxiliary process."""
    n_xi = np.asarray(n_xi, dtype=np.int64)
    d_xi = np.asarray(d_xi, dtype=float)
    occupied = np.flatnonzero(n_xi > 0)
    if occupied.size == 0:
        raise ValueError("undeliverable configuration has no finite mean")
    total = 0.0
    remaining = n_trials
    for k in range(max_cycles):
        if remaining == 0:
            break
        delivered = np.zeros(remaining, dtype=bool)
        delay_k = np.zeros(remaining)
        for xi in occupied:
            pointer_ok = (rng.random((remaining, int(n_xi[xi]))) < p_primary).any(axis=1)
            aux_ok = rng.random(remaining) < p_secondary
            hit = ~delivered & pointer_ok & aux_ok
            delay_k[hit] = d_xi[xi] + k * gnss_slots
            delivered |= hit
        total += delay_k[delivered].sum()
        remaining = int(np.sum(~delivered))
    if remaining:
        raise RuntimeError(f"{remaining} trials undelivered after {max_cycles} cycles")
    return total / n_trials


def sample_message_delay(
    cfg: TimingConfig,
    radio,
    bundle: SurvivalBundle,
    rng: np.random.Generator,
    t0: int | None = None,
    max_cycles: int = 50,
) -> float | None:
    """One stochastic delivery delay (ms) for a single message, or None if lost.

    Draws the broadcast phase uniformly when ``t0`` is None, then walks the
    match sequence with Bernoulli survival per attempt, giving a delay whose
    expectation matches the analytic series (truncated at ``max_cycles``).
    """
    protocol = radio.protocol
    sup = cfg.supercycle(protocol)
    if t0 is None:
        t0 = int(rng.integers(0, sup))
    if protocol == Protocol.BLE5:
        n_xi, d_xi = ble5_event_profile(t0, cfg, radio.rate)
        for k in range(max_cycles):
            for xi in range(radio.rate):
                if n_xi[xi] == 0:
                    continue
                if (rng.random(int(n_xi[xi])) < bundle.p_primary).any() and (
                    rng.random() < bundle.p_secondary
                ):
                    return (d_xi[xi] + k * cfg.gnss_slots) * cfg.delta_ms
        return None
    if protocol == Protocol.WIFI:
        ms = wifi_match_slots(t0, radio.wifi_channel, cfg, radio.rate)
        delays = [wifi_reception_delay(d, t0, cfg) for d in ms.union]
    else:
        ms = ble4_match_slots(t0, cfg, radio.rate)
        delays = [ble4_reception_delay(d, t0, cfg) for d in ms.union]
    if not delays:
        return None
    p = bundle.p_succ
    for k in range(max_cycles):
        for d in delays:
            if rng.random() < p:
                return (d + k * cfg.gnss_slots) * cfg.delta_ms
    return None
