"""trainprof: on-device profiling harness for CNN training measurements.

Reads a profiling plan and network descriptions, measures training memory
and mini-batch latency per entry, and writes the shared measurement CSV.
"""

from .executor import DeviceError, OutOfMemoryError, TrainingStep
from .measure import (DEVICE_TARGETS, Measurement, dry_run_measurement,
                      measure_entry, measure_latency, measure_memory,
                      meminfo_used_mb)
from .netdef import ConvDef, NetDef, NetDefError, ShapeDef, load_netdef, parse_netdef
from .runner import (CSV_HEADER, HarnessConfig, PlanEntry, PlanFormatError,
                     load_plan, resolve_network, run_plan)

__version__ = "0.1.0"
