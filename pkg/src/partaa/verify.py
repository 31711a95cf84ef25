"""Formula-versus-simulation harnesses.

Each harness builds small systems, runs them and compares what happened
with the closed-form bound from :mod:`partaa.analysis`. Independent cells
(one seed, one phase) can run on a thread pool sized by ``PARTAA_THREADS``;
results are always merged in input order so verdicts and tables never
depend on the thread count.
"""

from __future__ import annotations

import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

from . import isa
from .analysis import (
    BoundRow, channel_latency, end_to_end_bound, partitioned_wcet, wcet_case1, wcet_case2,
    wcet_case3,
)
from .core import PartitionSchedule, Window
from .noc import EDGE_LATENCY, ROUTER_INGRESS, ChannelConfig, Network, NetworkInterface, SlotTable
from .scenarios import (
    busy_loop_source, case1_sources, flag_consumer_source, flag_producer_source, nop_sled,
)
from .system import NocConfig, PartitionConfig, ProcessorConfig, System, SystemConfig

T = TypeVar("T")
R = TypeVar("R")

HALT_KINDS = ("halt", "fault")


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PARTAA_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """``map`` over independent cells, results in input order."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class VerifyResult:
    mode: str
    rows: list[BoundRow] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def table(self) -> str:
        lines = [row.line() for row in self.rows]
        lines += [f"note: {n}" for n in self.notes]
        lines += [f"FAIL: {f}" for f in self.failures]
        lines.append(f"{self.mode}: {'PASS' if self.ok else 'FAIL'} ({len(self.rows)} checks)")
        return "\n".join(lines)


def _first(system: System, kind: str, source: str | None = None):
    for ev in system.trace:
        if ev.kind == kind and (source is None or ev.source == source):
            return ev
    return None


def run_until_halt(config: SystemConfig, max_cycles: int, kinds=HALT_KINDS) -> System:
    system = System(config, trace_kinds=kinds)
    system.run(max_cycles)
    return system


def halt_cycle(system: System, source: str) -> int | None:
    ev = _first(system, "halt", source)
    return None if ev is None else ev.cycle


# --------------------------------
# Partitioned WCET
# --------------------------------

@dataclass(frozen=True)
class WcetCell:
    tau_a: int
    tau_p: int
    lambda_p: int
    standalone: int | None
    simulated: int | None

    @property
    def formula(self) -> int:
        return partitioned_wcet(self.tau_a, self.tau_p, self.lambda_p)


def _single(image, budget: int, period: int) -> SystemConfig:
    part = PartitionConfig(1, image, [(0, budget)])
    return SystemConfig([ProcessorConfig(1, period, [part])], NocConfig(), delta_so=0)


def measure_busy_task(tau_a: int, tau_p: int, lambda_p: int) -> WcetCell:
    """Simulate the synthetic ``tau_a`` task alone and inside a ``tau_p``/``lambda_p`` partition."""
    image = isa.assemble(busy_loop_source(tau_a))
    alone = run_until_halt(_single(image, tau_a + 8, tau_a + 8), tau_a + 16)
    partitioned = run_until_halt(_single(image, tau_p, lambda_p),
                                 partitioned_wcet(tau_a, tau_p, lambda_p) + lambda_p + 8)
    h1 = halt_cycle(alone, "P1.1")
    h2 = halt_cycle(partitioned, "P1.1")
    return WcetCell(tau_a, tau_p, lambda_p,
                    None if h1 is None else h1 + 1, None if h2 is None else h2 + 1)


def random_wcet_triples(seed: int, count: int, max_period: int = 64) -> list[tuple[int, int, int]]:
    """Random ``(tau_a, tau_p, lambda_p)`` with ``4 <= tau_a <= 10 * lambda_p``."""
    rng = random.Random(seed)
    triples = []
    for _ in range(count):
        lambda_p = rng.randint(1, max_period)
        tau_p = rng.randint(1, lambda_p)
        tau_a = rng.randint(4, max(4, 10 * lambda_p))
        triples.append((tau_a, tau_p, lambda_p))
    return triples


def verify_wcet(seed: int = 0, count: int = 50, max_period: int = 64) -> VerifyResult:
    result = VerifyResult("wcet")
    triples = random_wcet_triples(seed, count, max_period)
    cells = pmap(lambda t: measure_busy_task(*t), triples)
    for i, cell in enumerate(cells):
        inputs = f"tau_a={cell.tau_a} tau_p={cell.tau_p} lambda_p={cell.lambda_p}"
        result.rows.append(BoundRow(f"wcet[{i}]", inputs, cell.formula, cell.simulated))
        if cell.standalone != cell.tau_a:
            result.failures.append(f"seed={seed} cell={i} {inputs}: standalone task took "
                                   f"{cell.standalone} cycles, expected {cell.tau_a}")
        elif cell.simulated != cell.formula:
            result.failures.append(f"seed={seed} cell={i} {inputs}: simulated {cell.simulated}, "
                                   f"formula {cell.formula}")
    return result


# --------------------------------
# Dependent tasks: cases 1 and 2
# --------------------------------

def case1_measure(pad_a: int, pad_b: int, slack: int, idle: int) -> dict:
    """Run a then b in one window of ``tau_a + tau_b + slack`` cycles followed by ``idle``."""
    combined, a_alone, b_alone = (isa.assemble(s) for s in case1_sources(pad_a, pad_b))
    horizon = 4 * (len(combined.words) + 16)
    jump_pc = a_alone.labels["stop"] - 1
    alone = System(_single(a_alone, horizon, horizon), trace_kinds=("retire", "halt"))
    alone.run(horizon)
    tau_a = next(ev.cycle for ev in alone.trace
                 if ev.kind == "retire" and ev.field("pc") == str(jump_pc)) + 1
    tau_b = halt_cycle(run_until_halt(_single(b_alone, horizon, horizon), horizon), "P1.1") + 1
    budget = tau_a + tau_b + slack
    period = budget + idle
    both = run_until_halt(_single(combined, budget, period), horizon + period)
    h = halt_cycle(both, "P1.1")
    return {"tau_a": tau_a, "tau_b": tau_b, "simulated": None if h is None else h + 1,
            "budget": budget}


def case2_measure(tau_p1: int, tau_p2: int, gamma_a: int, gamma_b: int, tau_b: int,
                  delta_so: int) -> dict:
    """Producer released ``gamma_a`` into partition 1, consumer ``gamma_b`` into partition 2."""
    body_a = tau_p1 - gamma_a
    a_src = "\n".join(nop_sled(gamma_a) + nop_sled(body_a - 4) + ["HALT", ""])
    b_src = "\n".join(nop_sled(gamma_b) + nop_sled(tau_b - 4) + ["HALT", ""])
    period = tau_p1 + tau_p2 + 2 * delta_so
    parts = [PartitionConfig(1, isa.assemble(a_src), [(0, tau_p1)]),
             PartitionConfig(2, isa.assemble(b_src), [(tau_p1 + delta_so, tau_p2)])]
    config = SystemConfig([ProcessorConfig(1, period, parts)], NocConfig(), delta_so=delta_so)
    system = run_until_halt(config, 3 * period)
    end_a = halt_cycle(system, "P1.1")
    end_b = halt_cycle(system, "P1.2")
    return {"a_end": end_a, "simulated": None if end_b is None else end_b - gamma_a + 1}


def random_case_params(seed: int, count: int) -> tuple[list, list]:
    rng = random.Random(seed)
    c1, c2 = [], []
    for _ in range(count):
        pad_a, pad_b = rng.randint(0, 40), rng.randint(0, 40)
        c1.append((pad_a, pad_b, rng.randint(0, 40), rng.randint(0, 60)))
        tau_p1 = rng.randint(4, 60)
        gamma_a = rng.randint(0, tau_p1 - 4)
        tau_b = rng.randint(4, 40)
        gamma_b = rng.randint(0, 20)
        tau_p2 = gamma_b + tau_b + rng.randint(0, 10)
        c2.append((tau_p1, tau_p2, gamma_a, gamma_b, tau_b, rng.randint(0, 6)))
    return c1, c2


def verify_cases12(seed: int = 0, count: int = 20) -> VerifyResult:
    result = VerifyResult("case12")
    c1, c2 = random_case_params(seed, count)
    for i, (params, m) in enumerate(zip(c1, pmap(lambda p: case1_measure(*p), c1))):
        bound = wcet_case1([m["tau_a"], m["tau_b"]], m["budget"])
        inputs = f"tau_a={m['tau_a']} tau_b={m['tau_b']} budget={m['budget']}"
        result.rows.append(BoundRow(f"case1[{i}]", inputs, bound, m["simulated"]))
        if m["simulated"] != bound:
            result.failures.append(f"seed={seed} case1[{i}] {inputs}: simulated {m['simulated']}")
    for i, (params, m) in enumerate(zip(c2, pmap(lambda p: case2_measure(*p), c2))):
        tau_p1, tau_p2, gamma_a, gamma_b, tau_b, delta_so = params
        bound = wcet_case2(tau_p1, gamma_a, gamma_b, tau_b, delta_so)
        inputs = f"tau_p1={tau_p1} g_a={gamma_a} g_b={gamma_b} tau_b={tau_b} d_so={delta_so}"
        result.rows.append(BoundRow(f"case2[{i}]", inputs, bound, m["simulated"]))
        if m["simulated"] != bound or m["a_end"] != tau_p1 - 1:
            result.failures.append(f"seed={seed} case2[{i}] {inputs}: simulated {m['simulated']}, "
                                   f"producer ended at {m['a_end']}")
    return result


# --------------------------------
# Case 3: cross-processor, unsynchronized schedules
# --------------------------------

@dataclass(frozen=True)
class Case3Setup:
    budgets: tuple[int, int, int] = (40, 30, 50)
    consumer_partition: int = 2
    consumer_work: int = 8
    producer_work: int | None = None  # default: long enough for the consumer to start polling

    @property
    def period(self) -> int:
        return sum(self.budgets)

    def consumer_windows(self) -> dict[int, tuple[int, int]]:
        out, t = {}, 0
        for pid, b in enumerate(self.budgets, start=1):
            out[pid] = (t, b)
            t += b
        return out


def _case3_images(setup: Case3Setup):
    consumer = isa.assemble(flag_consumer_source(1, 1, 1, setup.consumer_work))
    budget = setup.budgets[setup.consumer_partition - 1]
    prologue = consumer.labels["poll"]
    work = setup.producer_work
    if work is None:
        work = setup.period * (prologue // budget + 2) + 16
    return consumer, work


def _case3_config(setup: Case3Setup, producer_work: int, offset: int, consumer_always: bool):
    consumer, _ = _case3_images(setup)
    producer = isa.assemble(flag_producer_source(producer_work))
    horizon = producer_work + 64
    procs = [ProcessorConfig(1, horizon + 4 * setup.period,
                             [PartitionConfig(1, producer, [(0, horizon + 4 * setup.period)])])]
    if consumer_always:
        procs.append(ProcessorConfig(2, 1, [PartitionConfig(setup.consumer_partition, consumer, [(0, 1)])]))
    else:
        windows = setup.consumer_windows()
        parts = [PartitionConfig(pid, consumer if pid == setup.consumer_partition else None, [windows[pid]])
                 for pid in (1, 2, 3) if setup.budgets[pid - 1] > 0]
        procs.append(ProcessorConfig(2, setup.period, parts, offset))
    return SystemConfig(procs, NocConfig(), delta_so=0)


def _case3_run(setup: Case3Setup, producer_work: int, offset: int, consumer_always: bool) -> dict:
    config = _case3_config(setup, producer_work, offset, consumer_always)
    system = System(config, trace_kinds=("flag_set", "halt", "fault"))
    system.run(producer_work + 64 + 8 * setup.period)
    store = _first(system, "flag_set", "P1.1")
    done = halt_cycle(system, f"P2.{setup.consumer_partition}")
    return {"store": None if store is None else store.cycle,
            "done": done, "faults": len(system.trace.of_kind("fault"))}


def case3_standalone(setup: Case3Setup) -> tuple[int, int]:
    """``(wcet_a, wcet_b)`` measured with both tasks owning their processors.

    ``wcet_a`` runs from release to the flag store; ``wcet_b`` from the
    cycle the flag becomes visible to the consumer's halt, maximised over
    every phase of the polling loop.
    """
    _, work = _case3_images(setup)
    wcet_a = None
    wcet_b = 0
    for extra in range(16):
        m = _case3_run(setup, work + extra, 0, consumer_always=True)
        if extra == 0:
            wcet_a = m["store"] + 1
        visible = m["store"] + 1
        wcet_b = max(wcet_b, m["done"] - visible + 1)
    return wcet_a, wcet_b


def verify_case3(setup: Case3Setup = Case3Setup(), offsets: Sequence[int] | None = None) -> VerifyResult:
    result = VerifyResult("case3")
    _, work = _case3_images(setup)
    wcet_a, wcet_b = case3_standalone(setup)
    bound = wcet_case3(wcet_a, wcet_b, budgets=setup.budgets, synchronized=False)
    offsets = range(setup.period) if offsets is None else offsets
    runs = pmap(lambda o: _case3_run(setup, work, o, consumer_always=False), list(offsets))
    worst, worst_offset = -1, None
    for o, m in zip(offsets, runs):
        if m["done"] is None or m["faults"]:
            result.failures.append(f"offset={o}: consumer did not complete")
            continue
        response = m["done"] + 1
        if response > worst:
            worst, worst_offset = response, o
        if response > bound:
            result.failures.append(f"offset={o}: response {response} exceeds bound {bound}")
    inputs = (f"wcet_a={wcet_a} wcet_b={wcet_b} budgets={'/'.join(map(str, setup.budgets))} "
              f"consumer=P2.{setup.consumer_partition}")
    result.rows.append(BoundRow("case3-unsync", inputs, bound, worst))
    tight = "tight" if worst == bound else f"not tight (slack {bound - worst})"
    result.notes.append(f"worst response {worst} at offset {worst_offset} over {len(runs)} phases; "
                        f"bound {bound} is {tight}")
    return result


# --------------------------------
# NoC
# --------------------------------

@dataclass(frozen=True)
class NocCell:
    s_total: int
    s_channel: int
    t_slot: int
    worst_hub: int
    worst_end_to_end: int
    worst_phase: int


def _sweep_network(channels: list[ChannelConfig], table: SlotTable, test: int,
                   owner_preference: bool = True) -> tuple[int, int, int]:
    """Worst hub and end-to-end latency of channel ``test`` over every arrival phase.

    Every other channel is either sending as fast as its NI allows (at each
    possible injection skew) or silent; all cases are swept and the maximum
    kept.
    """
    period = table.period
    warmup = 2 * period + 2 * EDGE_LATENCY
    interferers = [c for c in channels if c.id != test]
    # the sweep isolates hub arbitration: every channel gets a private source NI
    private = [ChannelConfig(c.id, (100 + i, 1), (200 + i, 1), c.slots, c.priority)
               for i, c in enumerate(sorted(channels, key=lambda c: c.id))]
    src = {c.id: c.src for c in private}
    worst = (-1, -1, 0)
    # rivals inject at most one packet per ROUTER_INGRESS cycles, so their send phase matters too
    modes = [("saturate", k) for k in range(ROUTER_INGRESS)] + [("silent", 0)]
    for mode, skew in modes:
        for phase in range(period):
            net = Network(private, table, {}, owner_preference)
            send_at = warmup + phase
            packet = None
            cycle = 0
            while True:
                if mode == "saturate" and skew <= cycle <= send_at + period * 8:
                    for c in interferers:
                        iface: NetworkInterface = net.nis[src[c.id]]
                        if iface.tx_free(cycle):
                            net.send(src[c.id], c.id, 0, cycle)
                if cycle == send_at:
                    net.send(src[test], test, phase, cycle)
                    packet = net.packets[-1]
                net.step(cycle)
                cycle += 1
                if packet is not None and packet.delivered_at is not None:
                    break
                if cycle > send_at + 64 * period + 64:
                    raise RuntimeError("test packet never delivered")
            key = (packet.hub_latency, packet.end_to_end, phase)
            if key[:2] > worst[:2]:
                worst = key
    return worst


def noc_sweep(s_total: int, s_channel: int, t_slot: int, owner_preference: bool = True) -> NocCell:
    """Sweep a table where channel 0 owns ``s_channel`` spread slots and single-slot rivals own the rest."""
    channels = [ChannelConfig(0, (1, 1), (2, 1), s_channel)]
    channels += [ChannelConfig(k, (1, 1), (2, 1), 1) for k in range(1, s_total - s_channel + 1)]
    table = SlotTable.spread(channels, s_total, t_slot)
    hub, e2e, phase = _sweep_network(channels, table, 0, owner_preference)
    return NocCell(s_total, s_channel, t_slot, hub, e2e, phase)


def noc_grid(max_s_total: int = 8, t_slots: Sequence[int] = (1, 4, 8)) -> list[tuple[int, int, int]]:
    return [(s, c, t) for t in t_slots for s in range(1, max_s_total + 1) for c in range(1, s + 1)]


def verify_noc_grid(max_s_total: int = 8, t_slots: Sequence[int] = (1, 4, 8),
                    owner_preference: bool = True, exact: bool = True) -> VerifyResult:
    result = VerifyResult("noc")
    cells = pmap(lambda g: noc_sweep(*g, owner_preference=owner_preference),
                 noc_grid(max_s_total, t_slots))
    for cell in cells:
        bound = channel_latency(cell.s_total, cell.s_channel, cell.t_slot)
        inputs = f"S_total={cell.s_total} S_channel={cell.s_channel} t_slot={cell.t_slot}"
        result.rows.append(BoundRow("hub-latency", inputs, bound, cell.worst_hub))
        if cell.worst_hub > bound or (exact and cell.worst_hub != bound):
            result.failures.append(f"{inputs}: worst hub latency {cell.worst_hub} vs bound {bound} "
                                   f"(arrival phase {cell.worst_phase})")
        if cell.worst_end_to_end != cell.worst_hub + 2 * EDGE_LATENCY:
            result.failures.append(f"{inputs}: end-to-end {cell.worst_end_to_end} != hub latency + 16")
    return result


def verify_noc_config(config: SystemConfig, owner_preference: bool = True) -> VerifyResult:
    """Sweep every configured channel against its own bound."""
    result = VerifyResult("noc")
    channels = list(config.noc.channels)
    if not channels:
        result.notes.append("no channels configured")
        return result
    table = config.noc.table()
    worst = pmap(lambda c: _sweep_network(channels, table, c.id, owner_preference), channels)
    for chan, (hub, e2e, phase) in zip(channels, worst):
        bound = channel_latency(table.s_total, chan.slots, table.t_slot)
        inputs = f"channel={chan.id} S_total={table.s_total} S_channel={chan.slots} t_slot={table.t_slot}"
        result.rows.append(BoundRow("hub-latency", inputs, bound, hub))
        result.rows.append(BoundRow("end-to-end", inputs,
                                    end_to_end_bound(table.s_total, chan.slots, table.t_slot), e2e))
        if hub > bound:
            result.failures.append(f"{inputs}: hub latency {hub} exceeds bound {bound} "
                                   f"(arrival phase {phase})")
        elif hub < bound:
            result.notes.append(f"channel {chan.id}: worst observed {hub} below bound {bound}")
    return result


# --------------------------------
# Isolation fuzzing
# --------------------------------

WITNESS_SOURCE = """\
; bump a private counter through a subroutine; mirror it in the partition flag
.data
.word one 1
.word slot 600
.word loop_at loop
.word bump_at bump
.text
        LOADK r1, one
        LOADK r2, slot
        LOADK r3, loop_at
        LOADK r4, bump_at
loop:
        CALL r4
        JMPR r3
bump:
        ADD r5, r5, r1
        ST.P r2, r5
        ST.P r0, r5
        RET
"""

FUZZ_WINDOWS = {1: (0, 20), 2: (24, 20), 3: (48, 20)}
FUZZ_PERIOD = 72


def random_program(rng: random.Random, max_len: int = 32) -> list[int]:
    """Random instruction words: mostly well-formed, some arbitrary garbage."""
    opcodes = [int(op) for op in isa.Opcode]
    words = []
    for _ in range(rng.randint(1, max_len)):
        if rng.random() < 0.8:
            words.append((rng.choice(opcodes) << 24) | (rng.getrandbits(15) << 9))
        else:
            words.append(rng.getrandbits(32))
    return words


def fuzz_config(partition: int, words: Sequence[int] | None) -> SystemConfig:
    witness = isa.assemble(WITNESS_SOURCE)
    parts = []
    for pid in (1, 2, 3):
        if pid == partition:
            image = isa.BinaryImage(tuple(words) if words else (int(isa.Opcode.HALT) << 24,))
        else:
            image = witness
        parts.append(PartitionConfig(pid, image, [FUZZ_WINDOWS[pid]]))
    return SystemConfig([ProcessorConfig(1, FUZZ_PERIOD, parts)], NocConfig(), delta_so=4)


def _fuzz_run(partition: int, words, registers, cycles: int) -> System:
    system = System(fuzz_config(partition, words))
    if registers is not None:
        system.processors[1].partitions[partition].registers[1:] = registers
    system.run(cycles)
    return system


def _isolation_view(system: System, partition: int) -> dict:
    proc = system.processors[1]
    amap = proc.memory.map
    view = {}
    for q in (1, 2, 3):
        if q == partition:
            continue
        base = amap.segment_base(q)
        view[q] = {
            "memory": proc.memory.device.words[base:base + amap.segment_words].tobytes(),
            "context": proc.context_snapshot(q),
            "events": [ev for ev in system.trace if ev.source == f"P1.{q}"],
        }
    return view


def fuzz_isolation(partition: int, count: int, seed: int = 0, cycles: int = 4 * FUZZ_PERIOD) -> list[str]:
    """Run ``count`` random programs in ``partition``; list every isolation breach.

    Each run is compared with a reference run in which the partition only
    halts: the other partitions' memory segments, contexts, stacks, flags
    and their complete event streams must be identical. Independently,
    no store from the fuzzed partition may land in another protected
    segment.
    """
    reference = _isolation_view(_fuzz_run(partition, None, None, cycles), partition)
    rng = random.Random(seed * 7919 + partition)
    cells = [(random_program(rng), [rng.getrandbits(32) for _ in range(31)]) for _ in range(count)]

    def check(cell) -> list[str]:
        words, regs = cell
        system = _fuzz_run(partition, words, regs, cycles)
        amap = system.processors[1].memory.map
        problems = []
        for ev in system.trace:
            if ev.source == f"P1.{partition}" and ev.kind == "mem_wr":
                seg = amap.segment_of(int(ev.field("addr"), 16))
                if seg not in (0, partition):
                    problems.append(f"write into segment {seg}: {ev.line()}")
        view = _isolation_view(system, partition)
        for q, ref in reference.items():
            for key in ("memory", "context", "events"):
                if view[q][key] != ref[key]:
                    problems.append(f"partition {q} {key} differs")
        return problems

    violations = []
    for i, problems in enumerate(pmap(check, cells)):
        violations += [f"seed={seed} partition={partition} program={i}: {p}" for p in problems]
    return violations
