"""Closed-form timing analysis and partition-schedule validation.

Every quantity is in clock cycles. :func:`cycles_to_ms` converts for
display only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import PartitionSchedule
from .noc import EDGE_LATENCY

NOMINAL_CLOCK_HZ = 50_000_000


class AnalysisError(ValueError):
    """Inputs outside an analysis formula's domain."""


@dataclass(frozen=True)
class TaskSpec:
    name: str
    wcet: int                       # standalone WCET, tau_a
    placement: tuple[int, int] = (1, 1)
    release: int = 0                # gamma, measured from the partition window start

    def __post_init__(self):
        if self.wcet < 1:
            raise AnalysisError(f"task {self.name}: WCET must be >= 1")
        if self.release < 0:
            raise AnalysisError(f"task {self.name}: release offset must be >= 0")


@dataclass(frozen=True)
class PartitionTiming:
    budget: int                     # tau_p
    period: int                     # lambda_p
    switch_overhead: int = 0        # delta_SO

    def __post_init__(self):
        _check_budget(self.budget, self.period)
        if self.switch_overhead < 0:
            raise AnalysisError("switch overhead must be >= 0")


def _check_budget(budget: int, period: int) -> None:
    if not 1 <= budget <= period:
        raise AnalysisError(f"need 1 <= tau_p <= lambda_p, got tau_p={budget} lambda_p={period}")


def _wcet_of(task) -> int:
    return task.wcet if isinstance(task, TaskSpec) else int(task)


# --------------------------------
# WCET
# --------------------------------

def partitioned_wcet(tau_a: int, tau_p: int, lambda_p: int) -> int:
    """Response time of a task needing ``tau_a`` cycles in a ``tau_p``-of-``lambda_p`` partition.

    The task is released at the start of a window; every full window it
    misses costs a whole period.
    """
    if tau_a < 1:
        raise AnalysisError(f"tau_a must be >= 1, got {tau_a}")
    _check_budget(tau_p, lambda_p)
    full = math.ceil(tau_a / tau_p) - 1
    return full * lambda_p + (tau_a - full * tau_p)


def shared_partition_wcet(taus: Sequence[int], tau_p: int, lambda_p: int) -> list[int]:
    """Per-task response of tasks run back to back in one partition.

    Each task's response is counted from the completion of its predecessor.
    When the combined demand fits strictly inside one window every task
    keeps its standalone WCET.
    """
    taus = [_wcet_of(t) for t in taus]
    if not taus:
        return []
    _check_budget(tau_p, lambda_p)
    if tau_p > sum(taus):
        return list(taus)
    out, done, finished = [], 0, 0
    for tau in taus:
        done += tau
        finish = partitioned_wcet(done, tau_p, lambda_p)
        out.append(finish - finished)
        finished = finish
    return out


def wcet_case1(tasks: Iterable, budget: int | None = None) -> int:
    """Dependent tasks in one partition: the WCETs simply add up."""
    taus = [_wcet_of(t) for t in tasks]
    if not taus:
        raise AnalysisError("no tasks given")
    if budget is not None and sum(taus) > budget:
        raise AnalysisError(f"tasks need {sum(taus)} cycles, partition budget is {budget}")
    return sum(taus)


def wcet_case2(tau_p1: int, gamma_a: int, gamma_b: int, tau_b: int, delta_so: int) -> int:
    """Producer in one partition, consumer in the next one on the same processor.

    Measured from the producer's release at ``gamma_a`` into its window to the
    consumer's completion, where the consumer is released ``gamma_b`` into the
    following window and runs for ``tau_b`` cycles.
    """
    if tau_p1 < 1 or tau_b < 1:
        raise AnalysisError("budgets and WCETs must be >= 1")
    if not 0 <= gamma_a <= tau_p1:
        raise AnalysisError(f"need 0 <= gamma_a <= tau_p1, got gamma_a={gamma_a}")
    if gamma_b < 0 or delta_so < 0:
        raise AnalysisError("gamma_b and delta_SO must be >= 0")
    return (tau_p1 - gamma_a) + (gamma_b + tau_b) + delta_so


def case2_adjacency(schedule: PartitionSchedule, first: int, second: int) -> list[str]:
    """Problems preventing :func:`wcet_case2` from applying to ``first`` -> ``second``.

    The formula only holds when every window of ``first`` is followed,
    after exactly the switch overhead, by a window of ``second``.
    """
    windows = sorted(schedule.windows, key=lambda w: w.start)
    problems = []
    mine = [i for i, w in enumerate(windows) if w.partition == first]
    if not mine:
        problems.append(f"partition {first} has no window")
    if not any(w.partition == second for w in windows):
        problems.append(f"partition {second} has no window")
    for i in mine:
        w = windows[i]
        nxt = windows[(i + 1) % len(windows)]
        start = nxt.start + (schedule.period if i + 1 == len(windows) else 0)
        if nxt.partition != second:
            problems.append(f"window of partition {first} at {w.start} is followed by partition "
                            f"{nxt.partition}, not {second}")
        elif start - w.end != schedule.switch_overhead:
            problems.append(f"gap after window at {w.start} is {start - w.end}, "
                            f"expected delta_SO={schedule.switch_overhead}")
    return problems


def wcet_case3(wcet_a: int, wcet_b: int, delta_cd: int | None = None,
               budgets: Sequence[int] | None = None, synchronized: bool = True) -> int:
    """Producer and consumer on different processors.

    Synchronized schedules add the worst-case communication delay;
    unsynchronized ones add one full partition cycle of the consumer's
    processor (the sum of its three budgets) less one.
    """
    if wcet_a < 1 or wcet_b < 1:
        raise AnalysisError("task WCETs must be >= 1")
    if synchronized:
        if delta_cd is None or delta_cd < 0:
            raise AnalysisError("synchronized case needs delta_CD >= 0")
        return wcet_a + delta_cd + wcet_b
    if budgets is None:
        raise AnalysisError("unsynchronized case needs the consumer processor's three budgets")
    budgets = list(budgets)
    if len(budgets) != 3 or any(b < 0 for b in budgets):
        raise AnalysisError("budgets must be three non-negative values")
    return wcet_a + sum(budgets) + wcet_b - 1


# --------------------------------
# NoC
# --------------------------------

def _check_noc(s_total: int, s_channel: int, t_slot: int) -> None:
    if not 1 <= s_channel <= s_total:
        raise AnalysisError(f"need 1 <= S_channel <= S_total, got {s_channel}/{s_total}")
    if t_slot < 1:
        raise AnalysisError(f"t_slot must be >= 1, got {t_slot}")


def channel_latency(s_total: int, s_channel: int, t_slot: int) -> int:
    """Worst-case hub latency of a channel owning ``s_channel`` evenly spread slots."""
    _check_noc(s_total, s_channel, t_slot)
    return ((s_total - 1) // s_channel + 1) * t_slot + 1


def end_to_end_bound(s_total: int, s_channel: int, t_slot: int) -> int:
    """Send-to-receive bound: the two fixed edge legs plus the hub latency."""
    return EDGE_LATENCY + channel_latency(s_total, s_channel, t_slot) + EDGE_LATENCY


# --------------------------------
# Schedule validation
# --------------------------------

RULES = ("periodic", "contention", "time-triggered")


@dataclass
class ScheduleReport:
    violations: list[str] = field(default_factory=list)

    def add(self, rule: str, message: str) -> None:
        self.violations.append(f"{rule}: {message}")

    @property
    def passed(self) -> bool:
        return not self.violations

    def failed_rules(self) -> set[str]:
        return {v.split(":", 1)[0] for v in self.violations}

    def text(self) -> str:
        if self.passed:
            return "schedule valid"
        return "\n".join(self.violations)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_schedule(schedule: PartitionSchedule) -> ScheduleReport:
    """Check a partition table against the three scheduling assumptions.

    * periodic: the table repeats with a positive period and every window
      lies inside it;
    * contention: no two windows overlap, so partitions never compete;
    * time-triggered: every window boundary is a fixed integral cycle and
      each switch to a different partition leaves at least the switch
      overhead idle.
    """
    report = ScheduleReport()
    period = schedule.period
    if not _is_int(period) or period < 1:
        report.add("periodic", f"period {period!r} is not a positive cycle count")
        return report
    if not schedule.windows:
        report.add("periodic", "no partition windows")
    for w in schedule.windows:
        if w.partition not in (1, 2, 3):
            report.add("periodic", f"window at {w.start} names partition {w.partition}, not 1..3")
        if not (_is_int(w.start) and _is_int(w.duration)):
            report.add("time-triggered", f"window {w} has non-integral boundaries")
            continue
        if w.duration < 1:
            report.add("periodic", f"window of partition {w.partition} at {w.start} has no duration")
        if w.start < 0 or w.end > period:
            report.add("periodic", f"window of partition {w.partition} [{w.start}, {w.end}) "
                                   f"exceeds period {period}")
    if not _is_int(schedule.offset):
        report.add("time-triggered", f"offset {schedule.offset!r} is not an integral cycle")
    if not _is_int(schedule.switch_overhead) or schedule.switch_overhead < 0:
        report.add("time-triggered", "switch overhead must be a non-negative cycle count")
    if report.violations:
        return report

    windows = sorted(schedule.windows, key=lambda w: (w.start, w.partition))
    for a, b in zip(windows, windows[1:]):
        if b.start < a.end:
            report.add("contention", f"partitions {a.partition} and {b.partition} overlap "
                                     f"in [{b.start}, {min(a.end, b.end)})")
    if report.violations:
        return report
    for i, a in enumerate(windows):
        b = windows[(i + 1) % len(windows)]
        gap = b.start - a.end + (period if i + 1 == len(windows) else 0)
        if b.partition != a.partition and gap < schedule.switch_overhead:
            report.add("time-triggered",
                       f"switch {a.partition}->{b.partition} at {a.end % period} leaves {gap} "
                       f"idle cycle(s), switch overhead is {schedule.switch_overhead}")
    return report


# --------------------------------
# Reporting helpers
# --------------------------------

def cycles_to_ms(cycles: int, clock_hz: float = NOMINAL_CLOCK_HZ) -> float:
    return cycles * 1000.0 / clock_hz


@dataclass(frozen=True)
class BoundRow:
    """One line of a bound-versus-simulation table."""

    name: str
    inputs: str
    bound: int
    observed: int | None = None

    @property
    def margin(self) -> int | None:
        return None if self.observed is None else self.bound - self.observed

    @property
    def ok(self) -> bool:
        return self.observed is None or self.observed <= self.bound

    def as_dict(self) -> dict:
        return {"name": self.name, "inputs": self.inputs, "bound": self.bound,
                "observed": self.observed, "margin": self.margin}

    def line(self) -> str:
        obs = "-" if self.observed is None else str(self.observed)
        mar = "-" if self.margin is None else str(self.margin)
        return f"{self.name:<24} {self.inputs:<32} bound={self.bound:<8} observed={obs:<8} margin={mar}"
