"""Sliced base-station simulator: configuration, schedulers, per-TTI cell state, KPM output."""
from .cell import (
    KPM_COLUMNS,
    KPM_HEADER,
    SATURATED_BUFFER_BYTES,
    CellState,
    ControlDirective,
    InvalidDirective,
    KpmRecord,
    apply_control,
    emit_kpm_window,
    kpm_csv_text,
    read_kpm_csv,
    run_cell,
    step_tti,
    validate_directive,
    write_kpm_csv,
)
from .config import (
    ConfigError,
    DuplicateUe,
    MalformedJson,
    OverlappingRbgRanges,
    RangeOutOfBounds,
    ScenarioConfig,
    SliceMismatch,
    UeSpec,
    UnknownPolicyCode,
    UnknownUe,
    config_from_dict,
    even_allocation,
    parse_radio_config,
)
from .schedulers import PF_SMOOTHING, SliceState, UeState, allocate_slice
