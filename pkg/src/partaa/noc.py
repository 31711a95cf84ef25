"""Star/tree network-on-chip: NIs, routers, and the arbitrating hub.

Timeline of one packet sent at cycle ``s``::

    s         store into the NI transmission buffer      (pkt_send)
    s+1       held in the transmission sample buffer
    s+2       forwarded to the local router
    s+8       arrives at the hub ingress
    s+9 ...   eligible for arbitration; granted at cycle g (pkt_grant)
    g+t_slot  leaves the hub
    g+t_slot+8  written into the destination sampling buffer (pkt_recv)

Hub arbitration (one grant per slot, hub pipelined over ``t_slot`` cycles):

* the slot owner is granted at any cycle of its slot once it has an
  eligible packet;
* an owned slot left unused reaches its final cycle and is reclaimed by the
  pending channel with the highest dynamic priority
  (``base_priority + slots waited``); unowned slots go the same way at any
  cycle;
* priority ties go to the channel closest after the rotating token.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

EDGE_LATENCY = 8       # NI -> router -> hub ingress, and hub egress -> router -> NI
TX_HOLD = 1            # cycles a new packet sits in the NI transmission buffer
ROUTER_INGRESS = TX_HOLD + 1

NiId = tuple[int, int]  # (processor, partition)


def ni_name(ni: NiId) -> str:
    return f"NI{ni[0]}.{ni[1]}"


@dataclass(frozen=True)
class ChannelConfig:
    id: int
    src: NiId
    dst: NiId
    slots: int = 1
    priority: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.slots < 1:
            out.append(f"channel {self.id}: slots_assigned must be >= 1")
        if self.src == self.dst:
            out.append(f"channel {self.id}: source and destination NI are the same")
        return out


@dataclass(frozen=True)
class SlotTable:
    """``slots[k]`` is the owning channel id of slot ``k`` or ``None``."""

    slots: tuple
    t_slot: int = 8
    phase: int = 0

    @property
    def s_total(self) -> int:
        return len(self.slots)

    @property
    def period(self) -> int:
        return self.s_total * self.t_slot

    def owned(self, channel: int) -> list[int]:
        return [k for k, owner in enumerate(self.slots) if owner == channel]

    def max_gap(self, channel: int) -> int:
        """Largest cyclic distance, in slots, between consecutive owned slots."""
        own = self.owned(channel)
        if not own:
            return math.inf
        gaps = [(own[(i + 1) % len(own)] - own[i]) % self.s_total or self.s_total
                for i in range(len(own))]
        return max(gaps)

    def validate(self, channels: Iterable[ChannelConfig]) -> list[str]:
        channels = list(channels)
        problems = []
        if self.s_total < 1:
            problems.append("slot table is empty")
        if self.t_slot < 1:
            problems.append("t_slot must be >= 1")
        ids = {c.id for c in channels}
        for owner in self.slots:
            if owner is not None and owner not in ids:
                problems.append(f"slot owner {owner} is not a configured channel")
        total = sum(c.slots for c in channels)
        if total > self.s_total:
            problems.append(f"sum of slots_assigned {total} exceeds S_total {self.s_total}")
        for c in channels:
            got = len(self.owned(c.id))
            if got != c.slots:
                problems.append(f"channel {c.id} owns {got} slot(s), configured {c.slots}")
            elif got and self.max_gap(c.id) > -(-self.s_total // c.slots):
                problems.append(
                    f"channel {c.id}: slots not evenly spread (gap {self.max_gap(c.id)} > "
                    f"ceil({self.s_total}/{c.slots}))")
        return problems

    @classmethod
    def spread(cls, channels: Iterable[ChannelConfig], s_total: int,
               t_slot: int = 8, phase: int = 0) -> "SlotTable":
        """Lay channels out so each one's owned slots are evenly spaced.

        Channels with the most slots are placed first; a small backtracking
        search handles the rare tables where greedy placement paints itself
        into a corner.
        """
        order = sorted(channels, key=lambda c: (-c.slots, c.id))
        if sum(c.slots for c in order) > s_total:
            raise ValueError(f"sum of slots_assigned exceeds S_total {s_total}")
        slots: list = [None] * s_total

        def ok(chan: ChannelConfig, positions: list[int]) -> bool:
            limit = -(-s_total // chan.slots)
            ps = sorted(positions)
            return all(((ps[(i + 1) % len(ps)] - ps[i]) % s_total or s_total) <= limit
                       for i in range(len(ps)))

        def place(i: int) -> bool:
            if i == len(order):
                return True
            chan = order[i]
            free = [k for k in range(s_total) if slots[k] is None]
            # candidates: evenly spaced patterns at every rotation first, then anything
            tried = set()
            for start in range(s_total):
                pattern = tuple(sorted((start + (j * s_total) // chan.slots) % s_total
                                       for j in range(chan.slots)))
                if pattern in tried or any(slots[k] is not None for k in pattern):
                    continue
                tried.add(pattern)
                for k in pattern:
                    slots[k] = chan.id
                if place(i + 1):
                    return True
                for k in pattern:
                    slots[k] = None
            if s_total <= 12:
                from itertools import combinations
                for pattern in combinations(free, chan.slots):
                    if pattern in tried or not ok(chan, list(pattern)):
                        continue
                    tried.add(pattern)
                    for k in pattern:
                        slots[k] = chan.id
                    if place(i + 1):
                        return True
                    for k in pattern:
                        slots[k] = None
            return False

        if not place(0):
            raise ValueError("no evenly spread slot layout exists for these channels")
        return cls(tuple(slots), t_slot, phase)


@dataclass
class Packet:
    payload: int
    src: NiId
    dst: NiId
    channel: int
    seq: int
    sent_at: int
    hub_arrival: int | None = None
    granted_at: int | None = None
    hub_exit: int | None = None
    delivered_at: int | None = None

    @property
    def hub_latency(self) -> int | None:
        if self.hub_exit is None:
            return None
        return self.hub_exit - self.hub_arrival

    @property
    def end_to_end(self) -> int | None:
        if self.delivered_at is None:
            return None
        return self.delivered_at - self.sent_at


@dataclass
class SamplingBuffer:
    payload: int = 0
    fresh: int = 0  # receptions since the last data read


class NetworkInterface:
    """One transmission buffer plus a sampling buffer per inbound channel."""

    def __init__(self, ni: NiId, inbound: Iterable[int] = ()):
        self.id = ni
        self.busy_until = 0  # tx buffer free from this cycle on
        self.rx: dict[int, SamplingBuffer] = {c: SamplingBuffer() for c in inbound}

    def tx_free(self, cycle: int) -> bool:
        return cycle >= self.busy_until

    def occupy(self, cycle: int) -> None:
        self.busy_until = cycle + ROUTER_INGRESS

    def read(self, channel: int) -> tuple[int, int]:
        """Non-destructive payload read; returns ``(payload, fresh)`` and marks it seen."""
        buf = self.rx[channel]
        out = (buf.payload, buf.fresh)
        buf.fresh = 0
        return out

    def freshness(self, channel: int) -> int:
        return self.rx[channel].fresh

    def receive(self, packet: Packet) -> bool:
        """Store a packet; returns True when an unread packet was overwritten."""
        buf = self.rx[packet.channel]
        overwrote = buf.fresh > 0
        buf.payload = packet.payload
        buf.fresh += 1
        return overwrote

    def snapshot(self) -> tuple:
        return (self.busy_until,
                tuple(sorted((c, b.payload, b.fresh) for c, b in self.rx.items())))


class Router:
    """Fixed-latency forwarder between a group of NIs and the hub."""

    def __init__(self, index: int, nis: Iterable[NiId]):
        self.index = index
        self.nis = tuple(nis)
        self.forwarded_up = 0
        self.forwarded_down = 0


class Hub:
    """TDM + dynamic-priority token-passing arbiter."""

    def __init__(self, table: SlotTable, channels: Iterable[ChannelConfig],
                 owner_preference: bool = True):
        self.table = table
        self.channels = {c.id: c for c in channels}
        self.order = sorted(self.channels)
        self.queues: dict[int, deque[Packet]] = {c: deque() for c in self.order}
        self.waited = {c: 0 for c in self.order}
        self.token = 0
        self.slot_used = False
        self.owner_preference = owner_preference  # test hook: False breaks TDM guarantees

    def enqueue(self, packet: Packet) -> None:
        self.queues[packet.channel].append(packet)

    def pending(self, cycle: int) -> list[int]:
        """Channels whose head packet was sampled before ``cycle``."""
        return [c for c in self.order
                if self.queues[c] and self.queues[c][0].hub_arrival < cycle]

    def slot_at(self, cycle: int) -> tuple[int, int]:
        rel = cycle - self.table.phase
        return (rel // self.table.t_slot) % self.table.s_total, rel % self.table.t_slot

    def dynamic_priority(self, channel: int) -> int:
        return self.channels[channel].priority + self.waited[channel]

    def pick(self, candidates: list[int]) -> int:
        n = len(self.order)
        rank = {c: (self.order.index(c) - self.token) % n for c in candidates}
        return max(candidates, key=lambda c: (self.dynamic_priority(c), -rank[c]))

    def step(self, cycle: int) -> Packet | None:
        slot, pos = self.slot_at(cycle)
        if pos == 0:
            self.slot_used = False
            for c in self.pending(cycle):
                self.waited[c] += 1
        if self.slot_used:
            return None
        eligible = self.pending(cycle)
        if not eligible:
            return None
        owner = self.table.slots[slot]
        if self.owner_preference and owner in eligible:
            winner = owner
        elif owner is None or pos == self.table.t_slot - 1 or not self.owner_preference:
            winner = self.pick(eligible)
            self.token = (self.order.index(winner) + 1) % len(self.order)
        else:
            return None
        self.slot_used = True
        self.waited[winner] = 0
        packet = self.queues[winner].popleft()
        packet.granted_at = cycle
        packet.hub_exit = cycle + self.table.t_slot
        return packet

    def state(self) -> tuple:
        return (self.token, self.slot_used, tuple(sorted(self.waited.items())),
                tuple((c, tuple(p.seq for p in q)) for c, q in sorted(self.queues.items())))


@dataclass
class Network:
    """The whole NoC, stepped once per system cycle after the processors."""

    channels: list[ChannelConfig]
    table: SlotTable
    nis: dict[NiId, NetworkInterface] = field(default_factory=dict)
    owner_preference: bool = True

    def __post_init__(self):
        self.by_id = {c.id: c for c in self.channels}
        endpoints = {c.src for c in self.channels} | {c.dst for c in self.channels}
        for ni in sorted(endpoints | set(self.nis)):
            if ni not in self.nis:
                self.nis[ni] = NetworkInterface(ni)
        for c in self.channels:
            self.nis[c.dst].rx.setdefault(c.id, SamplingBuffer())
        procs = sorted({ni[0] for ni in self.nis})
        self.routers = {p: Router(p, [ni for ni in sorted(self.nis) if ni[0] == p]) for p in procs}
        self.hub = Hub(self.table, self.channels, self.owner_preference)
        self._events: list = []   # heap of (cycle, order, stage, packet)
        self._order = 0
        self.seq = 0
        self.packets: list[Packet] = []

    def _schedule(self, cycle: int, stage: str, packet: Packet) -> None:
        heapq.heappush(self._events, (cycle, self._order, stage, packet))
        self._order += 1

    def send(self, ni: NiId, channel: int, payload: int, cycle: int,
             events: list | None = None) -> bool:
        """Push a packet from ``ni``; False (with a fault event) if refused."""
        events = events if events is not None else []
        iface = self.nis.get(ni)
        chan = self.by_id.get(channel)
        if iface is None or chan is None or chan.src != ni:
            events.append(("fault", f"{ni_name(ni)} unconfigured channel={channel} dropped"))
            return False
        if not iface.tx_free(cycle):
            events.append(("fault", f"{ni_name(ni)} tx buffer occupied channel={channel} dropped"))
            return False
        iface.occupy(cycle)
        packet = Packet(payload & 0xFFFFFFFF, ni, chan.dst, channel, self.seq, cycle)
        self.seq += 1
        self.packets.append(packet)
        self._schedule(cycle + EDGE_LATENCY, "hub", packet)
        events.append(("pkt_send",
                       f"pkt={packet.seq} channel={channel} dst={ni_name(chan.dst)} payload={packet.payload:#x}"))
        return True

    def read(self, ni: NiId, channel: int, events: list | None = None) -> tuple[int, int]:
        iface = self.nis.get(ni)
        if iface is None or channel not in iface.rx:
            if events is not None:
                events.append(("fault", f"{ni_name(ni)} read of unconfigured channel={channel}"))
            return (0, 0)
        return iface.read(channel)

    def freshness(self, ni: NiId, channel: int, events: list | None = None) -> int:
        iface = self.nis.get(ni)
        if iface is None or channel not in iface.rx:
            if events is not None:
                events.append(("fault", f"{ni_name(ni)} read of unconfigured channel={channel}"))
            return 0
        return iface.freshness(channel)

    def step(self, cycle: int, emit=None) -> None:
        """Advance hub ingress, arbitration and delivery for ``cycle``.

        ``emit(cycle, source, kind, detail)`` receives trace events.
        """
        while self._events and self._events[0][0] == cycle:
            _, _, stage, packet = heapq.heappop(self._events)
            if stage == "hub":
                packet.hub_arrival = cycle
                self.routers[packet.src[0]].forwarded_up += 1
                self.hub.enqueue(packet)
            else:
                packet.delivered_at = cycle
                self.routers[packet.dst[0]].forwarded_down += 1
                overwrote = self.nis[packet.dst].receive(packet)
                if emit is not None:
                    extra = " overwrote_unread=1" if overwrote else ""
                    emit(cycle, ni_name(packet.dst), "pkt_recv",
                         f"pkt={packet.seq} channel={packet.channel} payload={packet.payload:#x}{extra}")
        granted = self.hub.step(cycle)
        if granted is not None:
            self._schedule(granted.hub_exit + EDGE_LATENCY, "rx", granted)
            if emit is not None:
                emit(cycle, "HUB", "pkt_grant",
                     f"pkt={granted.seq} channel={granted.channel} slot={self.hub.slot_at(cycle)[0]}")

    def idle(self) -> bool:
        return not self._events and not any(self.hub.queues.values())

    def snapshot(self) -> tuple:
        return (tuple((ni, iface.snapshot()) for ni, iface in sorted(self.nis.items())),
                self.hub.state())


def end_to_end_delay(trace, seq: int) -> int | None:
    """Receive cycle minus send cycle of packet ``seq``; ``None`` if undelivered."""
    sent = recv = None
    for ev in trace:
        if ev.kind in ("pkt_send", "pkt_recv") and ev.field("pkt") == str(seq):
            if ev.kind == "pkt_send":
                sent = ev.cycle
            else:
                recv = ev.cycle
    if sent is None:
        raise KeyError(f"packet {seq} was never sent")
    if recv is None:
        return None
    return recv - sent
