"""Worst-case hub latency of a TDM channel versus its slot share.

For an 8-slot table the test channel owns 1, 2, 4 or 8 evenly spread slots
while every other channel sends as fast as it can. The sweep covers every
arrival phase; the observed worst case meets the bound exactly.
"""

from __future__ import annotations

from partaa.analysis import channel_latency, end_to_end_bound
from partaa.verify import noc_sweep

S_TOTAL, T_SLOT = 8, 8

print(f"S_total={S_TOTAL} t_slot={T_SLOT}")
print(f"{'slots':>5} {'worst hub':>9} {'bound':>6} {'worst e2e':>9} {'e2e bound':>9}")
for s_channel in (1, 2, 4, 8):
    cell = noc_sweep(S_TOTAL, s_channel, T_SLOT)
    print(f"{s_channel:>5} {cell.worst_hub:>9} {channel_latency(S_TOTAL, s_channel, T_SLOT):>6} "
          f"{cell.worst_end_to_end:>9} {end_to_end_bound(S_TOTAL, s_channel, T_SLOT):>9}")
