"""Cycle-accurate simulator and timing analyzer for a partitioned multiprocessor."""

from .analysis import (
    AnalysisError, channel_latency, end_to_end_bound, partitioned_wcet, validate_schedule,
    wcet_case1, wcet_case2, wcet_case3,
)
from .core import PartitionSchedule, Processor, Window
from .isa import BinaryImage, Instruction, Opcode, assemble, decode, disassemble, encode
from .memory import AddressMap, MemorySystem, translate
from .noc import ChannelConfig, Network, SlotTable
from .system import ConfigError, System, SystemConfig, build, load_config, read_processor_flags, run
from .trace import Trace, TraceEvent

__version__ = "0.1.0"
