from __future__ import annotations

import random

import pytest

from partaa import isa
from partaa.core import (
    CodeSegment, PartitionSchedule, Processor, Window, partition_flag, set_active_partition,
    set_partition_flag,
)
from partaa.memory import MemorySystem


def processor(sources: dict[int, str], schedule: PartitionSchedule) -> Processor:
    code, segments, mem = [], {}, MemorySystem()
    for pid, src in sorted(sources.items()):
        image = isa.assemble(src)
        segments[pid] = CodeSegment(len(code), len(image.words), image.entry_point)
        code.extend(image.words)
        mem.preload(pid, image.data_init)
    return Processor(1, schedule, mem, code, segments)


def run(proc: Processor, cycles: int) -> list:
    events = []
    for c in range(cycles):
        events += proc.step(c)
    return events


def kinds(events, kind):
    return [e for e in events if e.kind == kind]


def test_nop_stream_retires_one_per_cycle_after_fill():
    proc = processor({1: "NOP\n" * 10 + "HALT"}, PartitionSchedule.single(1, 100, 100))
    retires = kinds(run(proc, 30), "retire")
    assert [e.cycle for e in retires] == list(range(3, 13))
    assert kinds(run(proc, 0), "halt") == []


@pytest.mark.parametrize("k", [1, 2, 5, 17])
def test_straight_line_takes_k_plus_fill(k):
    src = "ADD r1, r2, r3\n" * (k - 1) + "HALT"
    for seed in range(3):
        proc = processor({1: src}, PartitionSchedule.single(1, 200, 200))
        rng = random.Random(seed)
        proc.partitions[1].registers[1:] = [rng.getrandbits(32) for _ in range(31)]
        halt = kinds(run(proc, 50), "halt")[0]
        assert halt.cycle + 1 == k + 3


def test_branches_cost_four_cycles_taken_or_not():
    # r0 == r0 so BEQ is taken to r0 (pc 0)... avoid loops: use data to choose
    taken = ".data\n.word t there\n.text\nLOADK r1, t\nBEQ r0, r0, r1\nthere: HALT\n"
    not_taken = ".data\n.word t there\n.word one 1\n.text\nLOADK r1, t\nLOADK r2, one\n" \
                "BEQ r0, r2, r1\nthere: HALT\n"
    t1 = kinds(run(processor({1: taken}, PartitionSchedule.single(1, 99, 99)), 80), "halt")[0].cycle
    t2 = kinds(run(processor({1: not_taken}, PartitionSchedule.single(1, 99, 99)), 80), "halt")[0].cycle
    loadk = len(isa.loadk_sequence(1, 257))
    assert t1 + 1 == loadk + 4 + 1 + 3
    loadk2 = len(isa.loadk_sequence(2, 258))
    assert t2 + 1 == loadk + loadk2 + 4 + 1 + 3


def test_call_and_ret():
    src = """.data
.word f func
.word one 1
.text
        LOADK r1, f
        LOADK r2, one
        CALL r1
        ADD r4, r3, r3
        HALT
func:
        ADD r3, r2, r2
        RET
"""
    proc = processor({1: src}, PartitionSchedule.single(1, 200, 200))
    run(proc, 100)
    assert proc.partitions[1].registers[3] == 2
    assert proc.partitions[1].registers[4] == 4
    assert proc.memory.stacks[1].sp == 0


def test_r0_is_hardwired():
    proc = processor({1: ".data\n.word k 5\n.text\nLOADK r1, k\nADD r0, r1, r1\nLD.P r0, r1\nHALT"},
                     PartitionSchedule.single(1, 99, 99))
    run(proc, 60)
    assert proc.partitions[1].registers[0] == 0


def test_inactive_partition_is_frozen():
    sched = PartitionSchedule(40, (Window(1, 0, 10), Window(2, 14, 10), Window(3, 28, 8)), 4)
    loop = ".data\n.word l top\n.word one 1\n.text\nLOADK r1, l\nLOADK r2, one\ntop: ADD r3, r3, r2\nJMPR r1\n"
    proc = processor({1: loop, 2: loop, 3: loop}, sched)
    prev = {p: proc.partitions[p].snapshot() for p in (1, 2, 3)}
    for c in range(400):
        proc.step(c)
        active = sched.active_at(c)
        for p in (1, 2, 3):
            now = proc.partitions[p].snapshot()
            if p != active:
                assert now == prev[p], (c, p)
            prev[p] = now
    assert all(proc.partitions[p].registers[3] > 0 for p in (1, 2, 3))


def test_switch_events_at_boundaries():
    sched = PartitionSchedule(20, (Window(1, 0, 6), Window(2, 10, 6)), 4)
    proc = processor({1: "HALT", 2: "HALT"}, sched)
    switches = kinds(run(proc, 40), "switch")
    assert [(e.cycle, e.detail) for e in switches[:4]] == [
        (0, "from=0 to=1"), (6, "from=1 to=0"), (10, "from=0 to=2"), (16, "from=2 to=0")]


def test_partitioned_execution_resumes_exactly():
    # 20 cycles of work in 3-cycle windows every 7: done after 6 full periods + 2
    src = "NOP\n" * 16 + "HALT"
    proc = processor({1: src}, PartitionSchedule.single(1, 3, 7))
    halt = kinds(run(proc, 100), "halt")[0]
    assert halt.cycle + 1 == 6 * 7 + 2


def test_set_partition_flag_examples():
    assert partition_flag(set_partition_flag(0, 1, 0x3FF), 1) == 0x3FF
    word = set_partition_flag(0, 3, 0xFFFFFFFF)
    assert partition_flag(word, 3) == 0x3FF and word == 0x3FF
    word = set_partition_flag(0xFFFFFFFF, 2, 0)
    assert partition_flag(word, 2) == 0
    assert partition_flag(word, 1) == 0x3FF and partition_flag(word, 3) == 0x3FF
    assert set_active_partition(0, 2) >> 30 == 0b10
    with pytest.raises(ValueError):
        set_partition_flag(0, 4, 1)


def test_invalid_word_faults_only_that_partition():
    sched = PartitionSchedule(30, (Window(1, 0, 10), Window(2, 15, 10)), 5)
    counter = ".data\n.word l top\n.word one 1\n.text\nLOADK r1, l\nLOADK r2, one\ntop: ADD r3, r3, r2\nJMPR r1\n"
    proc = processor({1: counter, 2: "NOP"}, sched)
    proc.code[proc.segments[2].base] = 0x7F000000  # garbage
    events = run(proc, 200)
    faults = kinds(events, "fault")
    assert len(faults) == 1 and faults[0].source == "P1.2"
    assert proc.partitions[2].halted and proc.partitions[2].faulted
    assert not proc.partitions[1].halted


def test_running_off_the_end_faults():
    proc = processor({1: "NOP"}, PartitionSchedule.single(1, 20, 20))
    faults = kinds(run(proc, 20), "fault")
    assert faults and "outside code segment" in faults[0].detail


def test_stack_overflow_contained():
    src = ".data\n.word s self\n.text\nLOADK r1, s\nself: CALL r1\n"
    proc = processor({1: src, 2: "HALT"}, PartitionSchedule(10, (Window(1, 0, 5), Window(2, 5, 5)), 0))
    events = run(proc, 30000)
    fault = kinds(events, "fault")[0]
    assert "overflow" in fault.detail
    assert proc.memory.stacks[2].sp == 0


def test_schedule_helpers():
    s = PartitionSchedule.back_to_back([5, 0, 7], switch_overhead=2)
    assert s.period == 16
    assert s.windows == (Window(1, 0, 5), Window(3, 7, 7))
    assert s.table()[:8] == [1, 1, 1, 1, 1, 0, 0, 3]
    assert s.budget(3) == 7
    shifted = PartitionSchedule(10, ((1, 0, 3),), offset=4)
    assert [shifted.active_at(c) for c in range(3, 8)] == [0, 1, 1, 1, 0]
