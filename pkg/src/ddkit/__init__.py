"""Toolkit for compiling and simulating single-qubit dynamical-decoupling
pulse sequences under a slowly fluctuating dephasing bath."""

__version__ = "0.1.0"

from ddkit.sequences import (
    DelayEvent,
    PulseEvent,
    SequenceError,
    SequenceParseError,
    SequenceProgram,
    canonicalize,
    cycle_time,
    duty_cycle,
    gen_cdd,
    gen_cpmg,
    gen_fid,
    gen_hahn,
    gen_kdd,
    gen_kdd2,
    gen_vcdd,
    gen_xy16,
    gen_xy4,
    make_sequence,
    programs_equivalent,
    pulse_count,
    read_sequence,
    repeat,
    virtualize,
    write_sequence,
)
from ddkit.toggling import (
    FilterSpectrum,
    PeakNotFoundError,
    ToggleTracks,
    TrackError,
    TrackInterval,
    block_average,
    compute_tracks,
    default_omega_grid,
    filter_function,
    fundamental_frequency,
    pulse_error_sum,
    spectrum_to_text,
    tracks_to_text,
)
from ddkit.noise import (
    NoiseError,
    NoiseTrajectory,
    OUParams,
    fid_coherence,
    ou_psd,
    ou_step_factors,
    ou_trajectory,
    trajectory_seed,
    trajectory_to_text,
)
from ddkit.kernel import (
    ControlErrors,
    DecayCurve,
    KernelError,
    curve_to_text,
    cycle_propagator,
    ensemble_signal,
    evolve,
    ideal_equivalence,
    propagator_deviation,
    segment_propagator,
)
from ddkit.experiments import (
    CalibrationError,
    DegenerateCurveError,
    ExperimentConfig,
    HarnessError,
    OrderScan,
    ScanGrid,
    T1eResult,
    TauScan,
    calibrate_bath,
    config_to_text,
    extract_t1e,
    grid_to_text,
    load_config,
    make_program,
    order_scan_to_text,
    run_decay,
    save_output,
    scan_map,
    scan_order,
    scan_tau,
    tau_scan_to_text,
)
