"""Whole-platform assembly: processors, memories, NoC, clock and trace.

Per-cycle component order (fixed, and the basis of determinism):

1. processors in id order (SwCU switch, then the active partition's pipeline)
2. the NoC (hub ingress, arbitration, delivery into sampling buffers)
3. processor flag words are published to the shared flag slots
4. the global clock advances

Flag writes and NoC deliveries are therefore visible to software one cycle
after they happen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import yaml

from . import isa
from .core import CodeSegment, PartitionSchedule, Processor, Window, partition_flag
from .memory import (
    CLOCK_H, CLOCK_L, FLAGS_BASE, AddressMap, MemorySystem, ReadOnlyWord, parse_words,
)
from .noc import ChannelConfig, Network, NetworkInterface, NiId, SlotTable, ni_name
from .trace import Trace


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


# --------------------------------
# Configuration
# --------------------------------

@dataclass
class PartitionConfig:
    id: int
    image: isa.BinaryImage | None = None
    windows: list[tuple[int, int]] = field(default_factory=list)
    data: list[tuple[int, int]] = field(default_factory=list)
    source: str | None = None  # path the image came from, for diagnostics


@dataclass
class ProcessorConfig:
    id: int
    period: int
    partitions: list[PartitionConfig]
    offset: int = 0

    def schedule(self, delta_so: int) -> PartitionSchedule:
        windows = sorted(
            (Window(p.id, start, duration) for p in self.partitions for start, duration in p.windows),
            key=lambda w: (w.start, w.partition))
        return PartitionSchedule(self.period, tuple(windows), delta_so, self.offset)


@dataclass
class NocConfig:
    channels: list[ChannelConfig] = field(default_factory=list)
    s_total: int = 4
    slot_table: list | None = None
    t_slot: int = 8
    phase: int = 0

    def table(self) -> SlotTable:
        if self.slot_table is not None:
            return SlotTable(tuple(self.slot_table), self.t_slot, self.phase)
        return SlotTable.spread(self.channels, self.s_total, self.t_slot, self.phase)


@dataclass
class SystemConfig:
    processors: list[ProcessorConfig]
    noc: NocConfig = field(default_factory=NocConfig)
    delta_so: int = 4
    address_bits: int = 16
    stack_depth: int = 256

    @property
    def address_map(self) -> AddressMap:
        return AddressMap(self.address_bits, self.stack_depth)

    def validate(self) -> list[str]:
        from .analysis import validate_schedule

        problems = []
        if not self.processors:
            problems.append("no processors configured")
        ids = [p.id for p in self.processors]
        if len(set(ids)) != len(ids):
            problems.append("duplicate processor ids")
        if any(not 1 <= i <= len(ids) for i in ids):
            problems.append("processor ids must be 1..N")
        problems += self.address_map.check(len(self.processors))
        for proc in self.processors:
            pids = [p.id for p in proc.partitions]
            if len(set(pids)) != len(pids) or any(p not in (1, 2, 3) for p in pids):
                problems.append(f"processor {proc.id}: partition ids must be distinct values in 1..3")
            if proc.period < 1:
                problems.append(f"processor {proc.id}: period must be positive")
                continue
            report = validate_schedule(proc.schedule(self.delta_so))
            problems += [f"processor {proc.id}: {v}" for v in report.violations]
            for part in proc.partitions:
                if part.image is None:
                    continue
                for msg in part.image.validate(self.address_bits):
                    problems.append(f"processor {proc.id} partition {part.id}: {msg}")
                amap = self.address_map
                for addr, _ in list(part.image.data_init) + list(part.data):
                    if addr & amap.protected_bit:
                        off = addr & amap.offset_mask
                        if amap.stack_offset <= off < amap.data_offset:
                            problems.append(
                                f"processor {proc.id} partition {part.id}: data address {addr:#x} "
                                f"overlaps the hardware stack")
        nis = {(p.id, q.id) for p in self.processors for q in p.partitions}
        chan_ids = [c.id for c in self.noc.channels]
        if len(set(chan_ids)) != len(chan_ids):
            problems.append("duplicate channel ids")
        for c in self.noc.channels:
            problems += c.problems()
            if not 0 <= c.id < self.address_map.max_channels:
                problems.append(f"channel {c.id}: id outside 0..{self.address_map.max_channels - 1}")
            for end in (c.src, c.dst):
                if end not in nis:
                    problems.append(f"channel {c.id}: endpoint {ni_name(end)} does not exist")
        total = sum(c.slots for c in self.noc.channels)
        if total > self.noc.s_total:
            problems.append(f"sum of slots_assigned {total} exceeds S_total {self.noc.s_total}")
        elif self.noc.slot_table is not None:
            if len(self.noc.slot_table) != self.noc.s_total:
                problems.append("slot_table length differs from s_total")
            else:
                problems += self.noc.table().validate(self.noc.channels)
        else:
            try:
                self.noc.table()
            except ValueError as exc:
                problems.append(str(exc))
        if self.noc.t_slot < 1:
            problems.append("t_slot must be >= 1")
        return problems


def _parse_ni(text) -> NiId:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return (int(text[0]), int(text[1]))
    proc, _, part = str(text).partition(".")
    return (int(proc), int(part))


def load_image(path, address_bits: int = 16, data_base: int | None = None) -> isa.BinaryImage:
    path = Path(path)
    if path.suffix in (".s", ".asm"):
        kwargs = {} if data_base is None else {"data_base": data_base}
        return isa.assemble(path.read_text(), address_bits=address_bits, **kwargs)
    return isa.BinaryImage.load(path)


def config_from_dict(raw: dict, base_dir: Path | str = ".") -> SystemConfig:
    """Build a :class:`SystemConfig`; image paths resolve against ``base_dir``."""
    base_dir = Path(base_dir)
    problems = []
    address_bits = int(raw.get("address_bits", 16))
    stack_depth = int(raw.get("stack_depth", 256))
    processors = []
    for p in raw.get("processors", []):
        parts = []
        for q in p.get("partitions", []):
            image = None
            source = q.get("image")
            if source:
                try:
                    image = load_image(base_dir / source, address_bits, stack_depth + 1)
                    if "entry" in q:
                        image = isa.BinaryImage(image.words, int(q["entry"]), image.data_init)
                except (OSError, isa.AssemblyError, isa.ImageError) as exc:
                    problems.append(f"processor {p.get('id')} partition {q.get('id')}: {source}: {exc}")
            data = []
            if q.get("data"):
                try:
                    data = parse_words((base_dir / q["data"]).read_text().splitlines())
                except (OSError, ValueError) as exc:
                    problems.append(f"processor {p.get('id')} partition {q.get('id')}: {q['data']}: {exc}")
            windows = [tuple(int(x) for x in w) for w in q.get("windows", [])]
            parts.append(PartitionConfig(int(q["id"]), image, windows, data, source))
        processors.append(ProcessorConfig(int(p["id"]), int(p["period"]), parts, int(p.get("offset", 0))))
    noc_raw = raw.get("noc", {}) or {}
    channels = [
        ChannelConfig(int(c["id"]), _parse_ni(c["src"]), _parse_ni(c["dst"]),
                      int(c.get("slots", 1)), int(c.get("priority", 0)))
        for c in noc_raw.get("channels", [])
    ]
    noc = NocConfig(channels, int(noc_raw.get("s_total", max(1, sum(c.slots for c in channels)))),
                    noc_raw.get("slot_table"), int(noc_raw.get("t_slot", 8)), int(noc_raw.get("phase", 0)))
    config = SystemConfig(processors, noc, int(raw.get("delta_so", 4)), address_bits, stack_depth)
    if problems:
        raise ConfigError(problems)
    return config


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    try:
        return config_from_dict(raw, path.parent)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([f"{path}: malformed configuration ({exc!r})"]) from None


# --------------------------------
# Peripherals
# --------------------------------

class FlagSetter:
    """Partition base address: a store sets that partition's 10-bit flag."""

    def __init__(self, system: "System", processor: Processor, partition: int, physical: int):
        self.system = system
        self.processor = processor
        self.partition = partition
        self.physical = physical

    def read(self, physical, events):
        return self.processor.memory.device.read(physical)

    def write(self, physical, value, events):
        self.processor.set_partition_flag(self.partition, value)
        events.append(("flag_set", f"partition={self.partition} value={value & 0x3FF:#x} "
                                   f"word={self.processor.flag_word:#010x}"))


class NiPort:
    """One word of an NI's memory-mapped window."""

    def __init__(self, system: "System", ni: NiId, role: str, channel: int):
        self.system = system
        self.ni = ni
        self.role = role
        self.channel = channel

    def read(self, physical, events):
        net = self.system.network
        if self.role == "rx":
            return net.read(self.ni, self.channel, events)[0]
        if self.role == "fresh":
            return net.freshness(self.ni, self.channel, events)
        return 0

    def write(self, physical, value, events):
        if self.role == "tx":
            self.system.network.send(self.ni, self.channel, value, self.system.cycle, events)
        else:
            events.append(("ignored_write", f"addr={physical:#x} target=ni_{self.role} value={value:#x}"))


# --------------------------------
# System
# --------------------------------

class System:
    def __init__(self, config: SystemConfig, trace_kinds: Iterable[str] | None = None,
                 owner_preference: bool = True):
        self.config = config
        self.address_map = config.address_map
        self.trace = Trace(trace_kinds)
        self.cycle = 0
        self.processors: dict[int, Processor] = {}
        self.published_flags: dict[int, int] = {}

        nis = {(p.id, q): NetworkInterface((p.id, q)) for p in config.processors for q in (1, 2, 3)}
        self.network = Network(list(config.noc.channels), config.noc.table(), nis, owner_preference)

        for pc in sorted(config.processors, key=lambda p: p.id):
            memory = MemorySystem(self.address_map)
            code: list[int] = []
            segments = {}
            for part in sorted(pc.partitions, key=lambda q: q.id):
                if part.image is None:
                    continue
                segments[part.id] = CodeSegment(len(code), len(part.image.words), part.image.entry_point)
                code.extend(part.image.words)
                memory.preload(part.id, part.image.data_init)
                memory.preload(part.id, part.data)
            proc = Processor(pc.id, pc.schedule(config.delta_so), memory, code, segments,
                             self.trace.kinds)
            self.processors[pc.id] = proc
            self.published_flags[pc.id] = 0
        for proc in self.processors.values():
            self._attach_overlays(proc)
        self.trace.emit(0, "SYS", "reset",
                        f"processors={len(self.processors)} address_bits={config.address_bits}")

    def _attach_overlays(self, proc: Processor) -> None:
        amap = self.address_map
        mem = proc.memory
        mem.attach(CLOCK_L, ReadOnlyWord("clock_L", lambda: self.cycle & 0xFFFFFFFF))
        mem.attach(CLOCK_H, ReadOnlyWord("clock_H", lambda: self.cycle >> 32))
        for pid in self.processors:
            mem.attach(FLAGS_BASE + pid - 1,
                       ReadOnlyWord(f"processor_{pid}_flags",
                                    lambda pid=pid: self.published_flags[pid]))
        for part in (1, 2, 3):
            base = amap.segment_base(part)
            mem.attach(base + amap.flag_offset, FlagSetter(self, proc, part, base))
            ni = (proc.pid, part)
            for ch in range(amap.max_channels):
                mem.attach(base + amap.ni_tx_offset + ch, NiPort(self, ni, "tx", ch))
                mem.attach(base + amap.ni_rx_offset + ch, NiPort(self, ni, "rx", ch))
                mem.attach(base + amap.ni_fresh_offset + ch, NiPort(self, ni, "fresh", ch))

    # -- stepping ---------------------------------------------------------
    def step(self) -> None:
        cycle = self.cycle
        for pid in sorted(self.processors):
            events = self.processors[pid].step(cycle)
            if events:
                self.trace.extend(events)
        self.network.step(cycle, self.trace.emit)
        for pid, proc in self.processors.items():
            self.published_flags[pid] = proc.flag_word
        self.cycle += 1

    def finished(self) -> bool:
        return all(p.all_halted() for p in self.processors.values()) and self.network.idle()

    def run(self, max_cycles: int) -> Trace:
        while self.cycle < max_cycles and not self.finished():
            self.step()
        return self.trace

    # -- inspection -------------------------------------------------------
    def flags(self, processor_id: int) -> int:
        return self.processors[processor_id].flag_word

    def memory_snapshot(self) -> dict[int, object]:
        return {pid: p.memory.device.snapshot() for pid, p in self.processors.items()}


def build(config: SystemConfig, trace_kinds: Iterable[str] | None = None,
          owner_preference: bool = True) -> System:
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    return System(config, trace_kinds, owner_preference)


def run(system: System, max_cycles: int) -> Trace:
    return system.run(max_cycles)


def read_processor_flags(system: System, processor_id: int) -> int:
    """The composed 32-bit flag word of ``processor_id``."""
    return system.processors[processor_id].flag_word


def partition_flags(system: System, processor_id: int) -> tuple[int, int, int]:
    word = read_processor_flags(system, processor_id)
    return tuple(partition_flag(word, p) for p in (1, 2, 3))


def handshake_scenario(iterations: int = 100, consumer_window: tuple[int, int] | None = None) -> SystemConfig:
    """The canned two-processor flag handshake; see :mod:`partaa.scenarios`."""
    from .scenarios import handshake_scenario as make

    return make(iterations, consumer_window)


def data_path(*parts: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory."""
    return Path(__file__).parent.joinpath("data", *parts)
