"""How partitioning stretches a task's response time.

A busy loop of fixed length runs alone in one partition whose window shrinks
step by step. The simulated completion is printed next to the closed-form
bound; the two agree to the cycle.
"""

from __future__ import annotations

from partaa.analysis import cycles_to_ms, partitioned_wcet
from partaa.verify import measure_busy_task

TAU_A = 120
PERIOD = 64

print(f"task of {TAU_A} cycles, partition period {PERIOD}")
print(f"{'budget':>6} {'simulated':>10} {'formula':>8} {'ms @50MHz':>10}")
for budget in (64, 48, 32, 16, 8):
    cell = measure_busy_task(TAU_A, budget, PERIOD)
    bound = partitioned_wcet(TAU_A, budget, PERIOD)
    print(f"{budget:>6} {cell.simulated:>10} {bound:>8} {cycles_to_ms(bound):>10.5f}")
