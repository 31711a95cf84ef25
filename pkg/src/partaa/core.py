"""Cycle-accurate model of one partitioned processor.

Timing model
------------
Four stages F, D, E, M. An instruction fetched in active cycle ``c`` is in
M (and retires) in active cycle ``c + 3``; all architectural effects happen
in M, so results are visible to the very next instruction and nothing ever
stalls. Control instructions resolve in M and annul the three younger
instructions, so each costs 1 + 3 cycles whether taken or not.

A straight-line run of ``k`` instructions therefore retires its last one
``k + PIPELINE_FILL - 1`` cycles after its first fetch, i.e. it occupies
``k + PIPELINE_FILL`` cycles counted inclusively.

Partitions
----------
Three partitions each own a register bank, a program counter and their
pipeline latches. Only the partition selected by the time-triggered
schedule advances; the others stay frozen exactly as they were.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .isa import CONTROL_OPS, DecodeError, NUM_REGISTERS, Opcode, WORD_MASK, decode
from .memory import MemorySystem, StackFault, TranslateFault
from .trace import TraceEvent

PIPELINE_DEPTH = 4
PIPELINE_FILL = PIPELINE_DEPTH - 1
BRANCH_PENALTY = 3
DEFAULT_SWITCH_OVERHEAD = 4
PARTITIONS = (1, 2, 3)

FLAG_FIELD_BITS = 10
FLAG_FIELD_MASK = (1 << FLAG_FIELD_BITS) - 1
ACTIVE_SHIFT = 30


def flag_shift(partition_id: int) -> int:
    """Bit position of a partition's 10-bit field: P1 [29:20], P2 [19:10], P3 [9:0]."""
    return FLAG_FIELD_BITS * (3 - partition_id)


def set_partition_flag(flag_word: int, partition_id: int, value: int) -> int:
    if partition_id not in PARTITIONS:
        raise ValueError(f"partition id {partition_id} not in 1..3")
    shift = flag_shift(partition_id)
    cleared = flag_word & ~(FLAG_FIELD_MASK << shift) & WORD_MASK
    return cleared | ((value & FLAG_FIELD_MASK) << shift)


def partition_flag(flag_word: int, partition_id: int) -> int:
    return (flag_word >> flag_shift(partition_id)) & FLAG_FIELD_MASK


def set_active_partition(flag_word: int, active: int) -> int:
    return (flag_word & ((1 << ACTIVE_SHIFT) - 1)) | ((active & 3) << ACTIVE_SHIFT)


# --------------------------------
# Schedules
# --------------------------------

@dataclass(frozen=True)
class Window:
    partition: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class PartitionSchedule:
    """Time-triggered partition table, repeating every ``period`` cycles.

    ``offset`` shifts the whole table: window ``w`` is active at cycles
    ``c`` with ``(c - offset) mod period`` in ``[w.start, w.end)``.
    """

    period: int
    windows: tuple[Window, ...]
    switch_overhead: int = DEFAULT_SWITCH_OVERHEAD
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(
            w if isinstance(w, Window) else Window(*w) for w in self.windows))

    @classmethod
    def single(cls, partition: int, budget: int, period: int,
               switch_overhead: int = 0, offset: int = 0) -> "PartitionSchedule":
        return cls(period, (Window(partition, 0, budget),), switch_overhead, offset)

    @classmethod
    def back_to_back(cls, budgets: Sequence[int], switch_overhead: int = 0,
                     offset: int = 0) -> "PartitionSchedule":
        """Partitions 1, 2, 3 in order, each followed by ``switch_overhead`` idle cycles."""
        windows, t = [], 0
        for pid, budget in enumerate(budgets, start=1):
            if budget:
                windows.append(Window(pid, t, budget))
                t += budget + switch_overhead
        return cls(t, tuple(windows), switch_overhead, offset)

    def budget(self, partition: int) -> int:
        return sum(w.duration for w in self.windows if w.partition == partition)

    def table(self) -> list[int]:
        """Active partition for each phase of the period (0 = none)."""
        slots = [0] * self.period
        for w in self.windows:
            for t in range(max(w.start, 0), min(w.end, self.period)):
                slots[t] = w.partition
        return slots

    def active_at(self, cycle: int) -> int:
        phase = (cycle - self.offset) % self.period
        for w in self.windows:
            if w.start <= phase < w.end:
                return w.partition
        return 0


# --------------------------------
# Processor state
# --------------------------------

@dataclass
class PartitionContext:
    registers: list[int] = field(default_factory=lambda: [0] * NUM_REGISTERS)
    pc: int = 0
    halted: bool = False
    faulted: bool = False
    # in-flight (pc, word) pairs, oldest first; at most PIPELINE_FILL between cycles
    pipeline: list = field(default_factory=list)

    def snapshot(self) -> tuple:
        return (tuple(self.registers), self.pc, self.halted, self.faulted, tuple(self.pipeline))


@dataclass
class CodeSegment:
    """A partition's slice of the shared read-only instruction memory."""

    base: int = 0
    length: int = 0
    entry: int = 0


class Processor:
    """One processor: three partitions, SwCU, flag word and a data memory."""

    def __init__(self, pid: int, schedule: PartitionSchedule, memory: MemorySystem,
                 code: Sequence[int] = (), segments: dict[int, CodeSegment] | None = None,
                 record: frozenset | None = None):
        self.pid = pid
        self.schedule = schedule
        self.memory = memory
        self.code = list(code)
        self.segments = segments or {}
        self.record = record
        self._table = schedule.table()
        self.partitions = {p: PartitionContext() for p in PARTITIONS}
        self.active = 0
        self.flag_word = 0
        self.cycle = 0
        self.reset()

    # -- state ------------------------------------------------------------
    def reset(self) -> None:
        for p, ctx in self.partitions.items():
            seg = self.segments.get(p)
            ctx.registers[:] = [0] * NUM_REGISTERS
            ctx.pipeline.clear()
            ctx.faulted = False
            ctx.pc = seg.entry if seg else 0
            ctx.halted = seg is None or seg.length == 0
        self.active = 0
        self.flag_word = 0

    @property
    def active_partition_flag(self) -> int:
        return self.active

    def set_partition_flag(self, partition_id: int, value: int) -> int:
        self.flag_word = set_partition_flag(self.flag_word, partition_id, value)
        return self.flag_word

    def all_halted(self) -> bool:
        return all(ctx.halted for ctx in self.partitions.values())

    def context_snapshot(self, partition_id: int) -> tuple:
        stack = self.memory.stacks[partition_id].state()
        return self.partitions[partition_id].snapshot() + (stack, partition_flag(self.flag_word, partition_id))

    def _wants(self, kind: str) -> bool:
        return self.record is None or kind in self.record

    # -- cycle ------------------------------------------------------------
    def step(self, cycle: int) -> list[TraceEvent]:
        """Advance exactly one clock cycle and return the events it produced."""
        self.cycle = cycle
        events: list[TraceEvent] = []
        target = self._table[(cycle - self.schedule.offset) % self.schedule.period]
        if target != self.active:
            if self._wants("switch"):
                events.append(TraceEvent(cycle, f"P{self.pid}", "switch", f"from={self.active} to={target}"))
            self.active = target
            self.flag_word = set_active_partition(self.flag_word, target)
        if target == 0:
            return events
        ctx = self.partitions[target]
        if ctx.halted:
            return events
        source = f"P{self.pid}.{target}"

        redirected = False
        if len(ctx.pipeline) == PIPELINE_FILL:
            pc, word = ctx.pipeline.pop(0)
            redirected = self._execute(ctx, target, source, cycle, pc, word, events)
        if not ctx.halted and not redirected:
            seg = self.segments[target]
            pc = ctx.pc
            word = self.code[seg.base + pc] if 0 <= pc < seg.length else None
            ctx.pipeline.append((pc, word))
            ctx.pc = pc + 1
            if self._wants("fetch"):
                events.append(TraceEvent(cycle, source, "fetch",
                                         f"pc={pc}" if word is None else f"pc={pc} word={word:#010x}"))
        return events

    def _fault(self, ctx, source, cycle, reason, events) -> bool:
        ctx.halted = True
        ctx.faulted = True
        ctx.pipeline.clear()
        events.append(TraceEvent(cycle, source, "fault", reason))
        return True

    def _execute(self, ctx: PartitionContext, partition: int, source: str, cycle: int,
                 pc: int, word, events: list) -> bool:
        """Run the instruction in M. Returns True if the pipeline was flushed."""
        if word is None:
            return self._fault(ctx, source, cycle, f"pc={pc} outside code segment", events)
        try:
            ins = decode(word)
        except DecodeError as exc:
            return self._fault(ctx, source, cycle, f"pc={pc} {exc}", events)
        op = ins.opcode
        regs = ctx.registers
        a = regs[ins.rs1]
        b = regs[ins.rs2]
        result = None
        next_pc = None

        if op is Opcode.HALT:
            ctx.halted = True
            ctx.pipeline.clear()
            events.append(TraceEvent(cycle, source, "halt", f"pc={pc}"))
            return True
        elif op is Opcode.NOP:
            pass
        elif op is Opcode.ADD:
            result = a + b
        elif op is Opcode.SUB:
            result = a - b
        elif op is Opcode.AND:
            result = a & b
        elif op is Opcode.OR:
            result = a | b
        elif op is Opcode.XOR:
            result = a ^ b
        elif op is Opcode.SLL:
            result = a << (b & 31)
        elif op is Opcode.SRL:
            result = a >> (b & 31)
        elif op is Opcode.SLT:
            result = int(_signed(a) < _signed(b))
        elif op is Opcode.MUL:
            result = a * b
        elif op in (Opcode.LD_P, Opcode.LD_S, Opcode.ST_P, Opcode.ST_S):
            mem_events: list = []
            visible = self.memory.visible(op in (Opcode.LD_P, Opcode.ST_P), a)
            try:
                if op in (Opcode.LD_P, Opcode.LD_S):
                    result = self.memory.load(visible, partition, mem_events)
                else:
                    self.memory.store(visible, b, partition, mem_events)
            except TranslateFault as exc:
                return self._fault(ctx, source, cycle, str(exc), events)
            for kind, detail in mem_events:
                if kind in ("fault", "flag_set", "ignored_write", "pkt_send") or self._wants(kind):
                    events.append(TraceEvent(cycle, source, kind, detail))
        elif op is Opcode.BEQ:
            next_pc = regs[ins.rd] if a == b else pc + 1
        elif op is Opcode.BLT:
            next_pc = regs[ins.rd] if _signed(a) < _signed(b) else pc + 1
        elif op is Opcode.JMPR:
            next_pc = a
        elif op is Opcode.CALL:
            try:
                self.memory.push_return(partition, pc + 1)
            except StackFault as exc:
                return self._fault(ctx, source, cycle, f"pc={pc} {exc}", events)
            next_pc = a
        elif op is Opcode.RET:
            try:
                next_pc = self.memory.pop_return(partition)
            except StackFault as exc:
                return self._fault(ctx, source, cycle, f"pc={pc} {exc}", events)

        if result is not None and ins.rd != 0:
            regs[ins.rd] = result & WORD_MASK
        if self._wants("retire"):
            events.append(TraceEvent(cycle, source, "retire", f"pc={pc} {ins}"))
        if op in CONTROL_OPS:
            ctx.pipeline.clear()
            ctx.pc = next_pc & WORD_MASK
            return True
        return False


def _signed(value: int) -> int:
    return value - (1 << 32) if value & 0x80000000 else value
