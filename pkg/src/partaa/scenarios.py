"""Canned programs and configurations used by the verifier, tests and demos.

All programs are generated as assembly text so they can be inspected,
written to disk and re-assembled by the command-line tool.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import isa
from .analysis import end_to_end_bound
from .memory import AddressMap, FLAGS_BASE
from .noc import ChannelConfig
from .system import NocConfig, PartitionConfig, ProcessorConfig, SystemConfig

# handshake flag values (10-bit partition fields)
FLAG_IDLE = 0
FLAG_READY = 1      # x: consumer ready
FLAG_SENT = 2       # m: producer has sent
FLAG_ACK = 3        # y: consumer has read

FIELD_P1 = 0x3FF00000  # partition 1's field in a processor flag word
LOG_OFFSET = 1024      # protected offset of the consumer's receive log


def flag_field(value: int, partition: int = 1) -> int:
    return (value & 0x3FF) << (10 * (3 - partition))


# --------------------------------
# Synthetic tasks
# --------------------------------

_LOOP_COST = 9  # SUB (1) + BEQ (4) + JMPR (4)


def busy_loop_source(tau: int) -> str:
    """A task occupying exactly ``tau`` active cycles, first fetch to HALT.

    Long tasks count down a register in a loop; short ones are a plain
    NOP sled. ``tau`` must be at least 4 (a lone HALT).
    """
    if tau < 4:
        raise ValueError("the shortest possible task (a lone HALT) takes 4 cycles")
    prologue = sum(len(isa.loadk_sequence(1, off)) for off in (257, 258, 259, 260))
    budget = tau - prologue
    if budget < _LOOP_COST:
        return "\n".join(["NOP"] * (tau - 4) + ["HALT", ""])
    iterations, pad = divmod(budget, _LOOP_COST)
    lines = [
        ".data",
        ".word one 1",
        f".word n_iter {iterations}",
        ".word loop_at loop",
        ".word exit_at exit",
        ".text",
        "LOADK r1, one",
        "LOADK r2, n_iter",
        "LOADK r3, loop_at",
        "LOADK r4, exit_at",
        "loop:",
        "SUB r2, r2, r1",
        "BEQ r2, r0, r4",
        "JMPR r3",
        "exit:",
    ]
    lines += ["NOP"] * pad + ["HALT", ""]
    return "\n".join(lines)


def nop_sled(count: int) -> list[str]:
    return ["NOP"] * count


def straight_task(tau: int, ending: str = "HALT") -> list[str]:
    """``tau``-cycle straight-line body ending in HALT (``tau`` >= 4)."""
    if tau < 4:
        raise ValueError("a straight-line task takes at least 4 cycles")
    return nop_sled(tau - 4) + [ending]


def case1_sources(pad_a: int, pad_b: int) -> tuple[str, str, str]:
    """Producer ``a`` then consumer ``b`` in one partition.

    Returns ``(combined, a_alone, b_alone)``. ``a`` writes a shared word and
    ends with a jump; ``b`` reads that word and halts.
    """
    a_body = [
        "LOADK r1, shared_slot",
        "LOADK r2, payload",
        "ST.S r1, r2",
        *nop_sled(pad_a),
        "LOADK r3, next_at",
        "JMPR r3",
    ]
    b_body = [
        "LOADK r1, shared_slot",
        "LD.S r4, r1",
        "ADD r5, r4, r4",
        *nop_sled(pad_b),
        "HALT",
    ]
    data = [".data", ".word shared_slot 16", ".word payload 21"]
    combined = data + [".word next_at b_start", ".text", *a_body, "b_start:", *b_body, ""]
    a_alone = data + [".word next_at stop", ".text", *a_body, "stop:", "HALT", ""]
    b_alone = data + [".text", *b_body, ""]
    return "\n".join(combined), "\n".join(a_alone), "\n".join(b_alone)


def flag_producer_source(work: int, value: int = 1) -> str:
    """Run ``work`` NOPs, then publish ``value`` in the partition flag and halt."""
    return "\n".join([
        ".data", f".word flag_value {value}", ".text",
        "LOADK r1, flag_value",
        *nop_sled(work),
        "ST.P r0, r1",
        "HALT", "",
    ])


def flag_consumer_source(producer: int, partition: int, value: int, work: int) -> str:
    """Busy-poll processor ``producer``'s flag field, then run ``work`` NOPs and halt."""
    return "\n".join([
        ".data",
        f".word flags_at {FLAGS_BASE + producer - 1}",
        f".word field_mask {flag_field(0x3FF, partition)}",
        f".word expect {flag_field(value, partition)}",
        ".word poll_at poll",
        ".word go_at go",
        ".text",
        "LOADK r1, flags_at",
        "LOADK r2, field_mask",
        "LOADK r3, expect",
        "LOADK r4, poll_at",
        "LOADK r5, go_at",
        "poll:",
        "LD.S r6, r1",
        "AND r6, r6, r2",
        "BEQ r6, r3, r5",
        "JMPR r4",
        "go:",
        *nop_sled(work),
        "HALT", "",
    ])


# --------------------------------
# Configuration helpers
# --------------------------------

def single_partition_config(image: isa.BinaryImage, budget: int, period: int,
                            partition: int = 1, offset: int = 0, delta_so: int = 0) -> SystemConfig:
    part = PartitionConfig(partition, image, [(0, budget)])
    return SystemConfig([ProcessorConfig(1, period, [part], offset)], NocConfig(), delta_so)


# --------------------------------
# Flag handshake
# --------------------------------

@dataclass(frozen=True)
class HandshakeLayout:
    """Where things live in the two-processor handshake configuration."""

    producer: tuple[int, int] = (1, 1)
    consumer: tuple[int, int] = (2, 1)
    channel: int = 0
    s_total: int = 4
    t_slot: int = 8

    @property
    def bound(self) -> int:
        return end_to_end_bound(self.s_total, 1, self.t_slot)


def handshake_producer_source(iterations: int, layout: HandshakeLayout = HandshakeLayout(),
                              amap: AddressMap = AddressMap()) -> str:
    """Task alpha: wait for x, send the iteration number, wait out the delivery bound, set m, wait for y."""
    consumer_proc, consumer_part = layout.consumer
    return f"""\
; producer: alpha on processor {layout.producer[0]} partition {layout.producer[1]}
.data
.word one 1
.word field_mask {flag_field(0x3FF, consumer_part):#x}
.word want_ready {flag_field(FLAG_READY, consumer_part):#x}
.word want_ack {flag_field(FLAG_ACK, consumer_part):#x}
.word sent_flag {FLAG_SENT}
.word peer_flags {FLAGS_BASE + consumer_proc - 1}
.word tx_at {amap.ni_tx_offset + layout.channel}
.word bound {layout.bound}
.word iterations {iterations}
.word wait_ready_at wait_ready
.word got_ready_at got_ready
.word wait_time_at wait_time
.word wait_ack_at wait_ack
.word got_ack_at got_ack
.word again_at again
.word done_at done
.text
        LOADK r1, one
        LOADK r2, field_mask
        LOADK r3, want_ready
        LOADK r4, want_ack
        LOADK r5, sent_flag
        LOADK r6, peer_flags
        LOADK r7, tx_at
        LOADK r8, bound
        LOADK r9, iterations
        LOADK r20, wait_ready_at
        LOADK r21, got_ready_at
        LOADK r22, wait_time_at
        LOADK r23, wait_ack_at
        LOADK r24, got_ack_at
        LOADK r25, again_at
        LOADK r26, done_at
        ADD r10, r0, r0           ; iteration counter
again:
wait_ready:
        LD.S r11, r6
        AND r11, r11, r2
        BEQ r11, r3, r21
        JMPR r20
got_ready:
        ADD r10, r10, r1
        ST.P r7, r10              ; send the iteration number
        LD.S r12, r0              ; clock_L at send + 1
wait_time:
        LD.S r13, r0
        SUB r13, r13, r12
        BLT r13, r8, r22          ; until the end-to-end bound has passed
        ST.P r0, r5               ; flag <- m
wait_ack:
        LD.S r11, r6
        AND r11, r11, r2
        BEQ r11, r4, r24
        JMPR r23
got_ack:
        ST.P r0, r0               ; flag <- idle
        BEQ r10, r9, r26
        JMPR r25
done:
        HALT
"""


def handshake_consumer_source(iterations: int, layout: HandshakeLayout = HandshakeLayout(),
                              amap: AddressMap = AddressMap()) -> str:
    """Task beta: set x, wait for m, read the sampling buffer into a log, set y, wait for idle."""
    producer_proc, producer_part = layout.producer
    return f"""\
; consumer: beta on processor {layout.consumer[0]} partition {layout.consumer[1]}
.data
.word one 1
.word field_mask {flag_field(0x3FF, producer_part):#x}
.word want_sent {flag_field(FLAG_SENT, producer_part):#x}
.word ready_flag {FLAG_READY}
.word ack_flag {FLAG_ACK}
.word peer_flags {FLAGS_BASE + producer_proc - 1}
.word rx_at {amap.ni_rx_offset + layout.channel}
.word log_at {LOG_OFFSET}
.word iterations {iterations}
.word loop_at loop
.word wait_sent_at wait_sent
.word got_sent_at got_sent
.word wait_idle_at wait_idle
.word got_idle_at got_idle
.word done_at done
.text
        LOADK r1, one
        LOADK r2, field_mask
        LOADK r3, want_sent
        LOADK r4, ready_flag
        LOADK r5, ack_flag
        LOADK r6, peer_flags
        LOADK r7, rx_at
        LOADK r8, log_at
        LOADK r9, iterations
        LOADK r20, loop_at
        LOADK r21, wait_sent_at
        LOADK r22, got_sent_at
        LOADK r23, wait_idle_at
        LOADK r24, got_idle_at
        LOADK r26, done_at
        ADD r10, r0, r0           ; packets consumed
loop:
        ST.P r0, r4               ; flag <- x
wait_sent:
        LD.S r11, r6
        AND r11, r11, r2
        BEQ r11, r3, r22
        JMPR r21
got_sent:
        LD.P r12, r7              ; read the sampling buffer
        ADD r13, r8, r10
        ST.P r13, r12             ; log it
        ADD r10, r10, r1
        ST.P r0, r5               ; flag <- y
wait_idle:
        LD.S r11, r6
        AND r11, r11, r2
        BEQ r11, r0, r24
        JMPR r23
got_idle:
        BEQ r10, r9, r26
        JMPR r20
done:
        HALT
"""


def handshake_scenario(iterations: int = 100, consumer_window: tuple[int, int] | None = None,
                       period: int = 200, layout: HandshakeLayout = HandshakeLayout()) -> SystemConfig:
    """Two-processor flag handshake with one NoC channel from alpha to beta.

    By default both tasks own their processor outright. ``consumer_window``
    gives beta a ``(start, duration)`` window in a ``period``-cycle table
    instead, which is used to show delivery while beta is switched out.
    """
    amap = AddressMap()
    alpha = isa.assemble(handshake_producer_source(iterations, layout, amap))
    beta = isa.assemble(handshake_consumer_source(iterations, layout, amap))
    if consumer_window is None:
        consumer_period, windows = period, [(0, period)]
    else:
        consumer_period, windows = period, [consumer_window]
    procs = [
        ProcessorConfig(layout.producer[0], period,
                        [PartitionConfig(layout.producer[1], alpha, [(0, period)])]),
        ProcessorConfig(layout.consumer[0], consumer_period,
                        [PartitionConfig(layout.consumer[1], beta, windows)]),
    ]
    channel = ChannelConfig(layout.channel, layout.producer, layout.consumer, 1, 0)
    noc = NocConfig([channel], layout.s_total, None, layout.t_slot)
    return SystemConfig(procs, noc, delta_so=4)


def handshake_log(system, iterations: int, layout: HandshakeLayout = HandshakeLayout()) -> list[int]:
    """Payloads the consumer logged, in order."""
    proc, part = layout.consumer
    mem = system.processors[proc].memory
    base = mem.map.segment_base(part) + LOG_OFFSET
    return [mem.device.read(base + i) for i in range(iterations)]
