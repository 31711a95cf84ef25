from __future__ import annotations

import partaa.memory as memory
from partaa import verify
from partaa.analysis import partitioned_wcet


def test_pmap_keeps_order_and_matches_serial():
    items = list(range(50))
    assert verify.pmap(lambda x: x * x, items, threads=1) == verify.pmap(lambda x: x * x, items, threads=4)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("PARTAA_THREADS", "3")
    assert verify.thread_count() == 3
    monkeypatch.setenv("PARTAA_THREADS", "bogus")
    assert verify.thread_count() == 1


def test_busy_task_hits_formula():
    for triple in [(4, 4, 4), (10, 3, 7), (37, 5, 9), (60, 64, 64)]:
        cell = verify.measure_busy_task(*triple)
        assert cell.standalone == triple[0]
        assert cell.simulated == partitioned_wcet(*triple), triple


def test_wcet_verdict_thread_invariant(monkeypatch):
    monkeypatch.setenv("PARTAA_THREADS", "1")
    a = verify.verify_wcet(3, 20)
    monkeypatch.setenv("PARTAA_THREADS", "4")
    b = verify.verify_wcet(3, 20)
    assert a.ok and b.ok
    assert a.table() == b.table()


def test_cases12_small():
    result = verify.verify_cases12(1, 4)
    assert result.ok, result.failures


def test_case3_bound_holds_on_a_few_phases():
    result = verify.verify_case3(verify.Case3Setup(), range(0, 120, 17))
    assert result.ok, result.failures
    assert result.notes


def test_fuzz_small_clean():
    for partition in (1, 2, 3):
        assert verify.fuzz_isolation(partition, 15, seed=5) == []


def test_fuzz_detects_leaky_translation(monkeypatch):
    real = memory.translate

    def leaky(visible, flag, n):
        physical = real(visible, flag, n)
        if physical >> (n - 2):                 # protected access: send it next door
            physical = (physical & ((1 << (n - 2)) - 1)) | ((flag % 3 + 1) << (n - 2))
        return physical

    monkeypatch.setattr(memory, "translate", leaky)
    assert verify.fuzz_isolation(1, 30, seed=2)


def test_broken_arbitration_is_caught():
    result = verify.verify_noc_grid(max_s_total=4, t_slots=(8,), owner_preference=False)
    assert not result.ok
    good = verify.verify_noc_grid(max_s_total=4, t_slots=(8,))
    assert good.ok, good.failures
