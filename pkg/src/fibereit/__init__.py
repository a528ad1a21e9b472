"""Desk-scale simulator and analysis pipeline for pulsed Rydberg-EIT
spectroscopy of cold atoms in a hollow-core fiber."""

from .analysis import (DiffMap, PeakShiftResult, RegimeReport, block_average,
                       detect_regimes, diff_map, moving_average, peak_shift)
from .config import AnalysisOptions, RunConfig, load_run_config, run_config_from_dict
from .conveyor import ConveyorRamp, displacement, velocity_at
from .fitting import (DecayFit, FitResult, SegmentFit, Spectrum, fit_eit, fit_od,
                      fit_two_segment_decay)
from .presets import preset
from .sequence import (LossModel, SequenceConfig, TraceSet, ValidationError,
                       detect, photon_budget, simulate, weak_probe_check)
from .spectral import (EitParams, RydbergConstants, dephasing_excess,
                       susceptibility, transmission_eit, transmission_od)
from .stark import ALPHA_29S, field_from_shift, shift_from_field
from .traceio import read_traceset, traceset_equal, write_traceset
from .units import angular_to_mhz, mhz_to_angular

__version__ = "0.1.0"

__all__ = [
    "ALPHA_29S", "AnalysisOptions", "ConveyorRamp", "DecayFit", "DiffMap",
    "EitParams", "FitResult", "LossModel", "PeakShiftResult", "RegimeReport",
    "RunConfig", "RydbergConstants", "SegmentFit", "SequenceConfig", "Spectrum",
    "TraceSet", "ValidationError", "angular_to_mhz", "block_average",
    "dephasing_excess", "detect", "detect_regimes", "diff_map", "displacement",
    "field_from_shift", "fit_eit", "fit_od", "fit_two_segment_decay",
    "load_run_config", "mhz_to_angular", "moving_average", "peak_shift",
    "photon_budget", "preset", "read_traceset", "run_config_from_dict",
    "shift_from_field", "simulate", "susceptibility", "traceset_equal",
    "transmission_eit", "transmission_od", "velocity_at", "weak_probe_check",
    "write_traceset",
]
