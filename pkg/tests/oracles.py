"""Independent reference models shared by the unit and acceptance tests."""

from __future__ import annotations


def mcu_pseudocode(visible: int, flag: int, n: int) -> int:
    """Bit-by-bit transcription of the MCU rule, kept deliberately naive."""
    addr = [(visible >> i) & 1 for i in range(n)]   # addr[i] is bit i; bit n-1 starts at 0
    flag_bits = [flag & 1, (flag >> 1) & 1]
    if addr[n - 2] == 1:
        addr[n - 2], addr[n - 1] = flag_bits[0], flag_bits[1]
    else:
        addr[n - 2], addr[n - 1] = 0, 0
    return sum(bit << i for i, bit in enumerate(addr))
