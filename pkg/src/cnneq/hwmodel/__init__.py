"""Hardware model: timing equations, DOP rules, functional and cycle simulation."""

from .dop import DopConfig, cycles_per_word, dop_enumerate, full_dop, layer_dops, validate_dop
from .partition import (
    CycleReport,
    HwSimResult,
    cycle_simulate,
    functional_partition,
    monolithic_reference,
    partition_process_merge,
    timing_sweep,
    write_timing_sweep,
)
from .timing import (
    TimingParams,
    TimingResult,
    actual_overlap,
    lut_generate,
    min_seq_length,
    next_even,
    overlap_symbols,
    timing,
    write_lut,
)

__all__ = [
    "CycleReport",
    "DopConfig",
    "HwSimResult",
    "TimingParams",
    "TimingResult",
    "actual_overlap",
    "cycle_simulate",
    "cycles_per_word",
    "dop_enumerate",
    "full_dop",
    "functional_partition",
    "layer_dops",
    "lut_generate",
    "min_seq_length",
    "monolithic_reference",
    "next_even",
    "overlap_symbols",
    "partition_process_merge",
    "timing",
    "timing_sweep",
    "validate_dop",
    "write_lut",
    "write_timing_sweep",
]
