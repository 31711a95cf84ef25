"""Data-memory hierarchy of one processor.

The MCU owns the top two bits of every ``n``-bit physical address. A
partition only ever sees an ``n-1``-bit address whose bit ``n-2`` selects
its protected segment (1) or the shared segment (0)::

    segment 00  shared by the three partitions
    segment 01  partition 1 protected (data + stack + NI window)
    segment 10  partition 2 protected
    segment 11  partition 3 protected

Memory-mapped peripherals overlay plain RAM at fixed offsets; an overlay
always wins over the RAM word underneath it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

WORD_MASK = 0xFFFFFFFF

DEFAULT_ADDRESS_BITS = 16
DEFAULT_STACK_DEPTH = 256
MAX_CHANNELS = 64

# shared-region slots (word addresses)
CLOCK_L = 0
CLOCK_H = 1
FLAGS_BASE = 2  # processor k's flag word sits at FLAGS_BASE + k - 1


class TranslateFault(RuntimeError):
    """Memory access attempted while no partition is active."""


class StackFault(RuntimeError):
    """Hardware stack overflow or underflow."""


def translate(visible_addr: int, active_partition_flag: int, n: int) -> int:
    """Map a partition-visible address to a physical one."""
    if active_partition_flag not in (1, 2, 3):
        raise TranslateFault(f"translate with active-partition-flag {active_partition_flag:02b}")
    if not 0 <= visible_addr < (1 << (n - 1)):
        raise ValueError(f"visible address {visible_addr:#x} wider than {n - 1} bits")
    low = visible_addr & ((1 << (n - 2)) - 1)
    if visible_addr >> (n - 2) & 1:
        return (active_partition_flag << (n - 2)) | low
    return low


@dataclass(frozen=True)
class AddressMap:
    """Segment geometry and peripheral placement for ``n``-bit memories."""

    n: int = DEFAULT_ADDRESS_BITS
    stack_depth: int = DEFAULT_STACK_DEPTH
    max_channels: int = MAX_CHANNELS

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("address width must be at least 3 bits")

    @property
    def segment_words(self) -> int:
        return 1 << (self.n - 2)

    @property
    def offset_mask(self) -> int:
        return self.segment_words - 1

    @property
    def protected_bit(self) -> int:
        return 1 << (self.n - 2)

    @property
    def visible_words(self) -> int:
        return 1 << (self.n - 1)

    def segment_base(self, segment: int) -> int:
        return segment << (self.n - 2)

    def segment_of(self, physical: int) -> int:
        return physical >> (self.n - 2)

    # protected-region layout, as offsets within a segment
    @property
    def flag_offset(self) -> int:
        return 0

    @property
    def stack_offset(self) -> int:
        return 1

    @property
    def data_offset(self) -> int:
        return 1 + self.stack_depth

    @property
    def ni_tx_offset(self) -> int:
        return self.segment_words - 3 * self.max_channels

    @property
    def ni_rx_offset(self) -> int:
        return self.segment_words - 2 * self.max_channels

    @property
    def ni_fresh_offset(self) -> int:
        return self.segment_words - self.max_channels

    def check(self, processors: int = 4) -> list[str]:
        problems = []
        if self.data_offset > self.ni_tx_offset:
            problems.append(
                f"protected segment of {self.segment_words} words cannot hold a "
                f"{self.stack_depth}-word stack and the NI window")
        if FLAGS_BASE + processors > self.segment_words:
            problems.append("shared segment too small for the clock and flag slots")
        return problems


class Peripheral(Protocol):
    def read(self, physical: int, events: list) -> int: ...
    def write(self, physical: int, value: int, events: list) -> None: ...


class MemoryDevice:
    """Word-addressed RAM with a data port and a separate stack port."""

    def __init__(self, n: int = DEFAULT_ADDRESS_BITS):
        self.n = n
        self.words = np.zeros(1 << n, dtype=np.uint32)

    def read(self, addr: int) -> int:
        return int(self.words[addr])

    def write(self, addr: int, value: int) -> None:
        self.words[addr] = value & WORD_MASK

    # the stack uses the second port of the dual-port device
    stack_read = read
    stack_write = write

    def snapshot(self) -> np.ndarray:
        return self.words.copy()


class HardwareStack:
    """Return-address stack at the low end of one protected segment."""

    def __init__(self, device: MemoryDevice, base: int, depth: int):
        self.device = device
        self.base = base
        self.depth = depth
        self.sp = 0
        self.top = 0  # top-of-stack mirror

    def push(self, return_pc: int) -> None:
        if self.sp >= self.depth:
            raise StackFault(f"stack overflow at depth {self.depth}")
        self.device.stack_write(self.base + self.sp, return_pc)
        self.sp += 1
        self.top = return_pc & WORD_MASK

    def pop(self) -> int:
        if self.sp == 0:
            raise StackFault("stack underflow")
        self.sp -= 1
        value = self.device.stack_read(self.base + self.sp)
        self.top = self.device.stack_read(self.base + self.sp - 1) if self.sp else 0
        return value

    def state(self) -> tuple[int, int]:
        return (self.sp, self.top)


class MemorySystem:
    """MCU, RAM, stacks and the peripheral overlay of one processor."""

    def __init__(self, address_map: AddressMap | None = None):
        self.map = address_map or AddressMap()
        self.device = MemoryDevice(self.map.n)
        self.stacks = {
            p: HardwareStack(self.device,
                             self.map.segment_base(p) + self.map.stack_offset,
                             self.map.stack_depth)
            for p in (1, 2, 3)
        }
        self.overlay: dict[int, Peripheral] = {}

    def attach(self, physical: int, peripheral: Peripheral) -> None:
        self.overlay[physical] = peripheral

    def visible(self, region_protected: bool, offset: int) -> int:
        """Compose a visible address from a region select and a register value."""
        addr = offset & self.map.offset_mask
        return addr | self.map.protected_bit if region_protected else addr

    def load(self, visible_addr: int, flag: int, events: list | None = None) -> int:
        physical = translate(visible_addr, flag, self.map.n)
        events = events if events is not None else []
        peripheral = self.overlay.get(physical)
        if peripheral is not None:
            value = peripheral.read(physical, events)
        else:
            value = int(self.device.words[physical])
        events.append(("mem_rd", f"addr={physical:#x} value={value:#x}"))
        return value

    def store(self, visible_addr: int, value: int, flag: int, events: list | None = None) -> None:
        physical = translate(visible_addr, flag, self.map.n)
        value &= WORD_MASK
        events = events if events is not None else []
        peripheral = self.overlay.get(physical)
        if peripheral is not None:
            peripheral.write(physical, value, events)
            return
        self.device.words[physical] = value
        events.append(("mem_wr", f"addr={physical:#x} value={value:#x}"))

    def push_return(self, partition_id: int, return_pc: int) -> None:
        self.stacks[partition_id].push(return_pc)

    def pop_return(self, partition_id: int) -> int:
        return self.stacks[partition_id].pop()

    def preload(self, partition_id: int, data_init: Iterable[tuple[int, int]]) -> None:
        """Write an image's data_init pairs as partition ``partition_id`` would see them."""
        for addr, value in data_init:
            self.device.write(translate(addr, partition_id, self.map.n), value)


class ReadOnlyWord:
    """Overlay for a read-only register; writes are dropped and reported."""

    def __init__(self, name: str, getter: Callable[[], int]):
        self.name = name
        self.getter = getter

    def read(self, physical, events):
        return self.getter() & WORD_MASK

    def write(self, physical, value, events):
        events.append(("ignored_write", f"addr={physical:#x} target={self.name} value={value:#x}"))


# --------------------------------
# Dump / restore
# --------------------------------

def dump_words(words: np.ndarray) -> list[str]:
    """Non-zero words as ``index value`` hex lines."""
    nonzero = np.flatnonzero(words)
    return [f"{int(i):#010x} {int(words[i]):#010x}" for i in nonzero]


def parse_words(lines: Iterable[str]) -> list[tuple[int, int]]:
    pairs = []
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'index value'")
        pairs.append((int(parts[0], 16), int(parts[1], 16) & WORD_MASK))
    return pairs


def save_dump(path, sections: dict[str, np.ndarray]) -> None:
    out = []
    for name, words in sections.items():
        out.append(f"# {name}")
        out.extend(dump_words(words))
    Path(path).write_text("\n".join(out) + "\n")


def load_dump(path) -> dict[str, list[tuple[int, int]]]:
    """Read a dump file back into ``{section: [(index, value), ...]}``."""
    sections: dict[str, list[tuple[int, int]]] = {}
    current = ""
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            current = line[1:].strip()
            sections.setdefault(current, [])
            continue
        sections.setdefault(current, []).extend(parse_words([line]))
    return sections


def restore(device: MemoryDevice, pairs: Iterable[tuple[int, int]]) -> None:
    device.words[:] = 0
    for index, value in pairs:
        device.write(index, value)
