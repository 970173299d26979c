"""Energy-aware exchange scheduler.

Insight packets wait in a queue kept sorted by entropy (highest first).  The
adaptive policy spends only the energy above the safety reserve and sends the
largest affordable prefix of the queue; the fixed-window and always-on
policies are the baselines it is compared against.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Union

from .power import BatteryState, PowerConfig, debit, energy_budget
from .trigger import InsightPacket

DEFAULT_QUEUE_CAP = 512
UPLINK_MBPS = 14.84


def priority_key(packet: InsightPacket) -> tuple[float, int, str]:
    return (-packet.entropy, packet.slot, packet.obs_id)


class InsightQueue:
    """Entropy-descending packet queue; ties go to the earlier slot, then obs_id."""

    def __init__(self, max_len: int | None = DEFAULT_QUEUE_CAP):
        if max_len is not None and max_len < 1:
            raise ValueError("max_len must be positive")
        self.max_len = max_len
        self._packets: list[InsightPacket] = []

    def __len__(self) -> int:
        return len(self._packets)

    def __iter__(self):
        return iter(self._packets)

    @property
    def packets(self) -> list[InsightPacket]:
        return list(self._packets)

    def enqueue(self, packet: InsightPacket) -> InsightPacket | None:
        """Insert in priority order; returns the packet dropped by the cap, if any."""
        bisect.insort(self._packets, packet, key=priority_key)
        if self.max_len is not None and len(self._packets) > self.max_len:
            return self._packets.pop()
        return None

    def pop_front(self, k: int) -> list[InsightPacket]:
        head, self._packets = self._packets[:k], self._packets[k:]
        return head


def select_k(queue_len: int, budget: float, e_pkt: float) -> int:
    """Closed-form packet count: min(n, floor(budget / e_pkt))."""
    if e_pkt <= 0:
        raise ValueError(f"e_pkt must be positive, got {e_pkt}")
    if budget <= 0 or queue_len <= 0:
        return 0
    k = math.floor(budget / e_pkt)
    # keep k * e_pkt <= budget exact in floating point
    while k > 0 and k * e_pkt > budget:
        k -= 1
    while (k + 1) * e_pkt <= budget:
        k += 1
    return min(queue_len, k)


@dataclass(frozen=True)
class Adaptive:
    name = "adaptive"


@dataclass(frozen=True)
class FixedWindow:
    start_slot_of_day: int
    window_slots: int
    name = "fixed_window"

    def __post_init__(self):
        if self.window_slots <= 0:
            raise ValueError("window_slots must be positive")
        if self.start_slot_of_day < 0:
            raise ValueError("start_slot_of_day must be >= 0")

    def is_open(self, slot: int, slots_per_day: int) -> bool:
        offset = (slot % slots_per_day - self.start_slot_of_day) % slots_per_day
        return offset < self.window_slots


@dataclass(frozen=True)
class AlwaysOn:
    name = "always_on"


UplinkPolicy = Union[Adaptive, FixedWindow, AlwaysOn]


@dataclass
class TransmitReport:
    slot: int
    k_selected: int
    budget: float
    packets_sent: list[str] = field(default_factory=list)
    energy_spent: float = 0.0
    total_entropy_sent: float = 0.0
    bytes_sent: int = 0
    contact: bool = False

    @property
    def channel_seconds(self) -> float:
        return self.bytes_sent * 8 / (UPLINK_MBPS * 1e6)


def transmit(queue: InsightQueue, battery: BatteryState, config: PowerConfig,
             policy: UplinkPolicy, slot: int, slots_per_day: int = 96,
             ) -> tuple[BatteryState, TransmitReport, list[InsightPacket]]:
    """Run one slot of uplink under ``policy``; the queue is consumed in place."""
    budget = energy_budget(battery, config.b_safe)
    link = 0.0
    if isinstance(policy, Adaptive):
        contact = budget > 0
        k = select_k(len(queue), budget, config.e_pkt)
        # never leave soc under the reserve because of rounding in soc - b_safe
        while k > 0 and battery.soc - k * config.e_pkt < config.b_safe:
            k -= 1
    elif isinstance(policy, FixedWindow):
        contact = policy.is_open(slot, slots_per_day)
        k = len(queue) if contact else 0
    elif isinstance(policy, AlwaysOn):
        contact = True
        k = len(queue)
        link = config.link_load
    else:
        raise TypeError(f"unknown uplink policy {policy!r}")

    sent = queue.pop_front(k)
    spent = k * config.e_pkt + link
    report = TransmitReport(
        slot=slot,
        k_selected=k,
        budget=budget,
        packets_sent=[p.obs_id for p in sent],
        energy_spent=spent,
        total_entropy_sent=math.fsum(p.entropy for p in sent),
        bytes_sent=sum(p.size_bytes for p in sent),
        contact=contact,
    )
    return debit(battery, spent), report, sent


def parse_policy(doc: dict | str) -> UplinkPolicy:
    if isinstance(doc, str):
        doc = {"kind": doc}
    kind = doc.get("kind")
    if kind == "adaptive":
        return Adaptive()
    if kind in ("fixed_window", "fixed"):
        return FixedWindow(int(doc["start_slot_of_day"]), int(doc["window_slots"]))
    if kind in ("always_on", "always-on"):
        return AlwaysOn()
    raise ValueError(f"unknown policy kind {kind!r}")
