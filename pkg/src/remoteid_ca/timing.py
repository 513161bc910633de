"""Discrete-slot broadcast/scan reception timing for BLE 4, BLE 5 and Wi-Fi beacons.

Time is discretized into slots of ``delta_ms`` (default 0.125 ms). A periodic
broadcaster (advertisement events on BLE channels 37/38/39, or 802.11 beacons
on one of channels 1/6/11) is matched against a periodic passive scanner.
Because both schedules are periodic, the slots where a full packet lands
inside an active scan window follow arithmetic progressions that are computed
with the Chinese remainder theorem (CRT) over coprime periods. A slot-by-slot
``timeline_oracle`` provides an independent check of the same schedule.

All timing arithmetic is in integer slots; conversion to milliseconds happens
only at reporting boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import gcd

import numpy as np

__all__ = [
    "Protocol",
    "TimingConfig",
    "MatchSlotSet",
    "discretize",
    "crt_match",
    "coprime_approx",
    "ble4_match_slots",
    "ble5_match_slots",
    "wifi_match_slots",
    "ble4_reception_delay",
    "ble5_reception_delay",
    "wifi_reception_delay",
    "ble5_aux_delay",
    "timeline_oracle",
]


class Protocol(str, Enum):
    BLE4 = "ble4"
    BLE5 = "ble5"
    WIFI = "wifi"


BLE_CHANNELS = (37, 38, 39)
WIFI_CHANNELS = (1, 6, 11)


def discretize(duration_ms: float, delta_ms: float) -> int:
    """Floor a duration to integer slots of length ``delta_ms``."""
    if duration_ms < 0:
        raise ValueError(f"duration must be >= 0, got {duration_ms}")
    if delta_ms <= 0:
        raise ValueError(f"slot length must be > 0, got {delta_ms}")
    return int(duration_ms / delta_ms)


def crt_match(t1: int, t2: int, s1: int, s2: int) -> tuple[int, int]:
    """Matching slots of two periodic events as (offset, period).

    Events at ``t1 + k*s1`` and ``t2 + m*s2`` coincide exactly at the slots
    ``offset + n*s1*s2``; the periods must be coprime.
    """
    if s1 < 1 or s2 < 1:
        raise ValueError("periods must be positive integers")
    if gcd(s1, s2) != 1:
        raise ValueError(f"CRT requires coprime periods, got {s1} and {s2}")
    inv_s2_mod_s1 = pow(s2, -1, s1) if s1 > 1 else 0
    inv_s1_mod_s2 = pow(s1, -1, s2) if s2 > 1 else 0
    period = s1 * s2
    offset = (t1 * s2 * inv_s2_mod_s1 + t2 * s1 * inv_s1_mod_s2) % period
    return offset, period


def coprime_approx(value: int, modulus: int) -> int:
    """Nearest positive integer to ``value`` coprime with ``modulus``.

    Ties between equally near candidates break downward.
    """
    if value < 1 or modulus < 1:
        raise ValueError("value and modulus must be >= 1")
    d = 0
    while True:
        for cand in (value - d, value + d) if d else (value,):
            if cand >= 1 and gcd(cand, modulus) == 1:
                return cand
        d += 1


@dataclass(frozen=True)
class TimingConfig:
    """Protocol timing constants (milliseconds) and their slot discretizations.

    Defaults are the production broadcast/scan parameters: 0.125 ms slots,
    1 s GNSS sampling period, BLE legacy PDUs of 0.376 ms, BLE extended
    (coded PHY) pointer PDUs of 1.152 ms with 3.328 ms auxiliary packets,
    2 ms scan windows every 8 ms per primary channel, and Wi-Fi beacons of
    0.632 ms against a 6 ms dwell / 1 ms switch passive scan.

    ``aux_uncertainty_ms`` (the scheduling slack between a pointer and its
    auxiliary packet) is not pinned by the standard parameter set; the 2 ms
    default is an explicit assumption and only shifts BLE 5 delays by a
    constant.
    """

    delta_ms: float = 0.125
    gnss_period_ms: float = 1000.0
    ble4_pdu_ms: float = 0.376
    ble5_pdu_ms: float = 1.152
    pdu_gap_ms: float = 0.125
    scan_window_ms: float = 2.0
    scan_interval_ms: float = 8.0
    aux_packet_ms: float = 3.328
    aux_offset_ms: float = 5.0
    aux_uncertainty_ms: float = 2.0
    adv_jitter_ms: float = 5.0
    beacon_ms: float = 0.632
    dwell_ms: float = 6.0
    switch_ms: float = 1.0

    # -- slot-domain views ------------------------------------------------

    def slots(self, duration_ms: float) -> int:
        return discretize(duration_ms, self.delta_ms)

    @property
    def gnss_slots(self) -> int:
        return self.slots(self.gnss_period_ms)

    @property
    def scan_window(self) -> int:
        return self.slots(self.scan_window_ms)

    @property
    def scan_interval(self) -> int:
        return self.slots(self.scan_interval_ms)

    @property
    def pdu_gap(self) -> int:
        return self.slots(self.pdu_gap_ms)

    @property
    def ble_supercycle(self) -> int:
        """Full BLE scan rotation across the three primary channels."""
        return 3 * self.scan_interval

    @property
    def wifi_supercycle(self) -> int:
        """Full Wi-Fi passive-scan rotation: three dwells plus switches."""
        return 3 * (self.slots(self.dwell_ms) + self.slots(self.switch_ms))

    def pdu_slots(self, protocol: Protocol) -> int:
        if protocol == Protocol.BLE4:
            return self.slots(self.ble4_pdu_ms)
        if protocol == Protocol.BLE5:
            return self.slots(self.ble5_pdu_ms)
        return self.slots(self.beacon_ms)

    def supercycle(self, protocol: Protocol) -> int:
        return self.wifi_supercycle if protocol == Protocol.WIFI else self.ble_supercycle

    def event_interval(self, protocol: Protocol, rate: int) -> int:
        """Discretized interval between broadcast events at ``rate`` per cycle."""
        if rate < 1:
            raise ValueError(f"rate must be a positive integer, got {rate}")
        return self.gnss_slots // rate

    def coprime_interval(self, protocol: Protocol, rate: int) -> int:
        """Event interval adjusted to be coprime with the scan supercycle."""
        return coprime_approx(self.event_interval(protocol, rate), self.supercycle(protocol))

    def max_reception_tail(self, protocol: Protocol) -> int:
        """Largest in-cycle reception completion beyond the match slot, in slots."""
        if protocol == Protocol.BLE5:
            return (
                self.slots(self.aux_offset_ms)
                + self.slots(self.aux_uncertainty_ms)
                + self.slots(self.aux_packet_ms)
            )
        return self.pdu_slots(protocol)


@dataclass(frozen=True)
class MatchSlotSet:
    """Per-channel slots where a full packet lands inside an active scan window.

    Slots are packet start times within ``[t0, t0 + gnss_slots]``, ascending
    and unique per channel.
    """

    protocol: Protocol
    t0: int
    channels: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @property
    def union(self) -> tuple[int, ...]:
        merged = sorted(set().union(*self.channels.values())) if self.channels else []
        return tuple(merged)

    def __len__(self) -> int:
        return len(self.union)


def _ble_primary_match_slots(t0: int, cfg: TimingConfig, rate: int, protocol: Protocol) -> MatchSlotSet:
    """Shared BLE broadcast-vs-scan matcher; BLE 4 and BLE 5 differ only in PDU length."""
    pdu = cfg.pdu_slots(protocol)
    s_i, s_w = cfg.scan_interval, cfg.scan_window
    sup = cfg.ble_supercycle
    interval = cfg.coprime_interval(protocol, rate)
    horizon = t0 + cfg.gnss_slots
    channels: dict[int, tuple[int, ...]] = {}
    for j, ch in enumerate(BLE_CHANNELS):
        t1 = t0 + j * (pdu + cfg.pdu_gap)
        hits: set[int] = set()
        # window offsets where the whole PDU fits inside this channel's scan window
        for i in range(j * s_i, j * s_i + s_w - pdu + 1):
            offset, period = crt_match(t1, i, interval, sup)
            k0 = -(-(t0 - offset) // period)  # ceil division
            t = offset + max(k0, 0) * period
            while t <= horizon:
                if t >= t0:
                    hits.add(t)
                t += period
        channels[ch] = tuple(sorted(hits))
    return MatchSlotSet(protocol=protocol, t0=t0, channels=channels)


def ble4_match_slots(t0: int, cfg: TimingConfig, rate: int) -> MatchSlotSet:
    """Slots where legacy advertisement PDUs are captured within one GNSS cycle."""
    return _ble_primary_match_slots(t0, cfg, rate, Protocol.BLE4)


def ble5_match_slots(t0: int, cfg: TimingConfig, rate: int) -> MatchSlotSet:
    """Slots where extended-advertising pointer PDUs are captured within one cycle."""
    return _ble_primary_match_slots(t0, cfg, rate, Protocol.BLE5)


def wifi_match_slots(t0: int, channel: int, cfg: TimingConfig, rate: int) -> MatchSlotSet:
    """Slots where beacons on ``channel`` are captured by the rotating scan."""
    if channel not in WIFI_CHANNELS:
        raise ValueError(f"Wi-Fi broadcast channel must be one of {WIFI_CHANNELS}, got {channel}")
    b_d = cfg.pdu_slots(Protocol.WIFI)
    t_s = cfg.slots(cfg.dwell_ms)
    c_t = cfg.slots(cfg.switch_ms)
    sup = cfg.wifi_supercycle
    interval = cfg.coprime_interval(Protocol.WIFI, rate)
    idx = WIFI_CHANNELS.index(channel)
    lo = idx * (t_s + c_t)
    hi = lo + t_s - b_d
    horizon = t0 + cfg.gnss_slots
    hits: set[int] = set()
    for i in range(lo, hi + 1):
        offset, period = crt_match(t0, i, interval, sup)
        k0 = -(-(t0 - offset) // period)
        t = offset + max(k0, 0) * period
        while t <= horizon:
            if t >= t0:
                hits.add(t)
            t += period
    return MatchSlotSet(protocol=Protocol.WIFI, t0=t0, channels={channel: tuple(sorted(hits))})


def ble4_reception_delay(match_slot: int, t0: int, cfg: TimingConfig) -> int:
    """Slots from broadcast start to complete PDU reception."""
    return match_slot - t0 + cfg.pdu_slots(Protocol.BLE4)


def ble5_reception_delay(match_slot: int, t0: int, cfg: TimingConfig) -> int:
    return match_slot - t0 + cfg.pdu_slots(Protocol.BLE5)


def wifi_reception_delay(match_slot: int, t0: int, cfg: TimingConfig) -> int:
    return match_slot - t0 + cfg.pdu_slots(Protocol.WIFI)


def ble5_aux_delay(xi: int, match_set: MatchSlotSet, t0: int, cfg: TimingConfig, rate: int):
    """Reception delay (slots) for the ``xi``-th auxiliary packet, or None if missed.

    The auxiliary packet for event ``xi`` is received iff some captured pointer
    slot falls in that event's interval; the delay depends only on ``xi``:
    ``(xi-1)*A_I + A_Offset + O_U + T_AUX``.
    """
    if not 1 <= xi <= rate:
        raise ValueError(f"event index must be in 1..{rate}, got {xi}")
    interval = cfg.event_interval(Protocol.BLE5, rate)
    lo = t0 + (xi - 1) * interval
    hi = t0 + xi * interval
    if not any(lo <= d < hi for d in match_set.union):
        return None
    return (
        (xi - 1) * interval
        + cfg.slots(cfg.aux_offset_ms)
        + cfg.slots(cfg.aux_uncertainty_ms)
        + cfg.slots(cfg.aux_packet_ms)
    )


def timeline_oracle(
    t0: int,
    cfg: TimingConfig,
    protocol: Protocol,
    rate: int,
    channel: int | None = None,
    use_coprime_interval: bool = True,
    jitter_rng: np.random.Generator | None = None,
) -> MatchSlotSet:
    """Slot-by-slot schedule simulation, independent of the CRT construction.

    Builds the receiver's active-channel array over one GNSS cycle and tests
    every transmitted packet for full containment in an active window on its
    channel. With ``use_coprime_interval`` the broadcaster uses the same
    coprime-adjusted event interval as the analytic path (for equivalence
    tests); otherwise the exact discretized interval, optionally with
    per-event pseudo-random jitter drawn from ``jitter_rng``.
    """
    horizon = t0 + cfg.gnss_slots
    pdu = cfg.pdu_slots(protocol)
    # receiver schedule: channel listened to at each slot, -1 when idle/switching;
    # extends past the horizon so packets *starting* at the horizon are testable
    n_slots = horizon + pdu + 1
    rx = np.full(n_slots, -1, dtype=np.int64)
    slot_idx = np.arange(n_slots, dtype=np.int64)
    if protocol == Protocol.WIFI:
        t_s = cfg.slots(cfg.dwell_ms)
        c_t = cfg.slots(cfg.switch_ms)
        phase = slot_idx % cfg.wifi_supercycle
        for idx, ch in enumerate(WIFI_CHANNELS):
            start = idx * (t_s + c_t)
            rx[(phase >= start) & (phase < start + t_s)] = ch
    else:
        s_i, s_w = cfg.scan_interval, cfg.scan_window
        phase = slot_idx % cfg.ble_supercycle
        for idx, ch in enumerate(BLE_CHANNELS):
            start = idx * s_i
            rx[(phase >= start) & (phase < start + s_w)] = ch

    if use_coprime_interval:
        interval = cfg.coprime_interval(protocol, rate)
    else:
        interval = cfg.event_interval(protocol, rate)
    jitter_cap = cfg.slots(cfg.adv_jitter_ms)

    hits: dict[int, set[int]] = {}
    event_start = t0
    while event_start <= horizon:
        start = event_start
        if jitter_rng is not None and event_start != t0:
            start = event_start + int(jitter_rng.integers(0, jitter_cap + 1))
        if protocol == Protocol.WIFI:
            packets = [(channel, start)]
        else:
            packets = [
                (ch, start + j * (pdu + cfg.pdu_gap)) for j, ch in enumerate(BLE_CHANNELS)
            ]
        for ch, s in packets:
            if s < t0 or s > horizon:
                continue
            window = rx[s : s + pdu]
            if len(window) == pdu and np.all(window == ch):
                hits.setdefault(ch, set()).add(s)
        event_start += interval

    chans = WIFI_CHANNELS if protocol == Protocol.WIFI else BLE_CHANNELS
    channels = {
        ch: tuple(sorted(hits.get(ch, set())))
        for ch in ([channel] if protocol == Protocol.WIFI else chans)
    }
    return MatchSlotSet(protocol=protocol, t0=t0, channels=channels)


@lru_cache(maxsize=256)
def cached_match_union(cfg: TimingConfig, protocol: Protocol, rate: int, channel: int | None):
    """All-phase match unions: tuple over t0 in the supercycle of union slot tuples."""
    sup = cfg.supercycle(protocol)
    out = []
    for t0 in range(sup):
        if protocol == Protocol.WIFI:
            ms = wifi_match_slots(t0, channel, cfg, rate)
        elif protocol == Protocol.BLE4:
            ms = ble4_match_slots(t0, cfg, rate)
        else:
            ms = ble5_match_slots(t0, cfg, rate)
        out.append(ms.union)
    return tuple(out)
