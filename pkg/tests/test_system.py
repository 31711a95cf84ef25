from __future__ import annotations

import pytest

from partaa import isa
from partaa.core import partition_flag
from partaa.memory import FLAGS_BASE
from partaa.noc import ChannelConfig
from partaa.scenarios import handshake_log, handshake_scenario
from partaa.system import (
    ConfigError, NocConfig, PartitionConfig, ProcessorConfig, System, SystemConfig, build,
    data_path, load_config, partition_flags,
)

HALT = isa.assemble("HALT")


def halt_config(processors: int = 2) -> SystemConfig:
    procs = [ProcessorConfig(p, 100, [PartitionConfig(1, HALT, [(0, 28)]),
                                      PartitionConfig(2, HALT, [(32, 28)]),
                                      PartitionConfig(3, HALT, [(64, 32)])])
             for p in range(1, processors + 1)]
    return SystemConfig(procs)


def test_default_config_builds():
    system = build(load_config(data_path("default", "default.yaml")))
    assert len(system.processors) == 4
    assert sum(len(p.partitions) for p in system.processors.values()) == 12
    assert len(system.network.nis) == 12
    assert len(system.network.routers) == 4
    assert system.network.hub is not None


def test_rejects_overlapping_windows():
    config = halt_config()
    config.processors[0].partitions[1].windows = [(20, 28)]
    with pytest.raises(ConfigError) as info:
        build(config)
    assert any("contention" in p for p in info.value.problems)


def test_rejects_oversubscribed_slots():
    config = halt_config()
    config.noc = NocConfig([ChannelConfig(0, (1, 1), (2, 1), 3), ChannelConfig(1, (1, 2), (2, 2), 2)],
                           s_total=4)
    problems = config.validate()
    assert any("exceeds S_total" in p for p in problems)


def test_rejects_missing_endpoint():
    config = halt_config()
    config.noc = NocConfig([ChannelConfig(0, (1, 1), (5, 1))], s_total=1)
    assert any("does not exist" in p for p in config.validate())


def test_all_halt_trace():
    system = build(halt_config())
    trace = system.run(1000)
    halts = trace.of_kind("halt")
    assert sorted(e.source for e in halts) == [f"P{p}.{q}" for p in (1, 2) for q in (1, 2, 3)]
    # a lone HALT finishes 4 cycles into its window
    assert {e.cycle for e in halts} == {3, 35, 67}
    assert system.finished() and system.cycle == 68
    assert trace.events[0].kind == "reset"


def test_flag_store_sets_ten_bits():
    src = ".data\n.word v 0x12345\n.text\nLOADK r1, v\nST.P r0, r1\nHALT"
    config = SystemConfig([ProcessorConfig(1, 50, [PartitionConfig(2, isa.assemble(src), [(0, 50)])])])
    system = build(config)
    trace = system.run(100)
    word = system.flags(1)
    assert partition_flag(word, 2) == 0x345
    assert (word >> 10) & 0x3FF == 0x345
    assert partition_flags(system, 1) == (0, 0x345, 0)
    # the RAM word under the flag setter keeps the LOADK base value
    assert system.processors[1].memory.device.read(2 << 14) == 1
    assert trace.of_kind("flag_set")[0].field("value") == "0x345"


def test_flag_visible_one_cycle_later():
    src = ".data\n.word v 7\n.text\nLOADK r1, v\nST.P r0, r1\nHALT"
    config = SystemConfig([
        ProcessorConfig(1, 50, [PartitionConfig(1, HALT, [(0, 50)])]),
        ProcessorConfig(2, 50, [PartitionConfig(1, isa.assemble(src), [(0, 50)])]),
    ])
    system = build(config)
    reader = system.processors[1].memory
    seen = []
    while not system.finished():
        before = reader.load(FLAGS_BASE + 1, 1)
        n = len(system.trace)
        system.step()
        after = reader.load(FLAGS_BASE + 1, 1)
        if any(e.kind == "flag_set" for e in system.trace.events[n:]):
            seen.append((before, after))
    assert len(seen) == 1
    before, after = seen[0]
    assert partition_flag(before, 1) == 0 and partition_flag(after, 1) == 7


def test_handshake_single_iteration_order():
    system = build(handshake_scenario(1))
    trace = system.run(20_000)
    assert system.finished()
    wanted = {"flag_set", "pkt_send", "pkt_recv"}
    steps = [(e.kind, e.source) for e in trace if e.kind in wanted]
    assert steps[0] == ("flag_set", "P2.1")                       # x
    assert steps[1] == ("pkt_send", "P1.1")
    assert steps[2] == ("pkt_recv", "NI2.1")
    assert steps[3] == ("flag_set", "P1.1")                       # m
    assert handshake_log(system, 1) == [1]
    assert not trace.of_kind("fault")


def test_trace_is_prefix_of_longer_run():
    short = build(handshake_scenario(3)).run(1500)
    long = build(handshake_scenario(3)).run(4000)
    assert long.lines()[:len(short)] == short.lines()


def test_zero_cycles_gives_reset_only():
    trace = build(halt_config()).run(0)
    assert [e.kind for e in trace] == ["reset"]


def test_fault_in_one_partition_leaves_others_running():
    bad = isa.BinaryImage((0x7F000000,))
    config = halt_config(1)
    config.processors[0].partitions[0].image = bad
    system = build(config)
    trace = system.run(500)
    assert [e.source for e in trace.of_kind("fault")] == ["P1.1"]
    assert {e.source for e in trace.of_kind("halt")} >= {"P1.2", "P1.3"}


def test_load_config_errors(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("processors: [")
    with pytest.raises(ConfigError):
        load_config(bad)
    noimage = tmp_path / "noimage.yaml"
    noimage.write_text("processors:\n  - id: 1\n    period: 10\n    partitions:\n"
                       "      - id: 1\n        image: nope.s\n        windows: [[0, 10]]\n")
    with pytest.raises(ConfigError) as info:
        load_config(noimage)
    assert "nope.s" in info.value.problems[0]


def test_load_config_assembles_relative_sources(tmp_path):
    (tmp_path / "p.s").write_text("NOP\nHALT\n")
    (tmp_path / "c.yaml").write_text(
        "processors:\n  - id: 1\n    period: 10\n    partitions:\n"
        "      - id: 1\n        image: p.s\n        windows: [[0, 10]]\n")
    config = load_config(tmp_path / "c.yaml")
    assert config.validate() == []
    system = System(config)
    system.run(100)
    assert system.processors[1].partitions[1].halted
