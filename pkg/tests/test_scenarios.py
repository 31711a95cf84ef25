from __future__ import annotations

import pytest

from partaa import isa
from partaa.scenarios import (
    busy_loop_source, case1_sources, flag_field, handshake_consumer_source, handshake_log,
    handshake_producer_source, handshake_scenario,
)
from partaa.system import build, data_path, load_config
from partaa.verify import measure_busy_task


def test_shipped_handshake_sources_are_current():
    assert data_path("handshake", "alpha.s").read_text() == handshake_producer_source(100)
    assert data_path("handshake", "beta.s").read_text() == handshake_consumer_source(100)


def test_shipped_configs_validate():
    for name in ("default/default.yaml", "handshake/handshake.yaml"):
        assert load_config(data_path(*name.split("/"))).validate() == []


def test_busy_loop_lengths():
    for tau in (4, 5, 20, 41, 42, 43, 200):
        assert measure_busy_task(tau, 1000, 1000).standalone == tau
    with pytest.raises(ValueError):
        busy_loop_source(3)


def test_case1_sources_assemble():
    for src in case1_sources(3, 5):
        isa.assemble(src)


def test_flag_field():
    assert flag_field(1, 1) == 1 << 20
    assert flag_field(0x7FF, 3) == 0x3FF


def test_handshake_logs_every_payload():
    system = build(handshake_scenario(5))
    system.run(50_000)
    assert system.finished()
    assert handshake_log(system, 5) == [1, 2, 3, 4, 5]
