"""Photon-number-resolving SNSPD simulation and reconstruction toolkit."""
from .counting import *  # noqa: F401,F403
from .config import ExperimentConfig, load_config, loads_config
from .electrothermal import (ElectrothermalParams, TransientResult, delayed_current_fraction,
                             extract_rise_time, fit_rise_exponent, rise_times, simulate_transient)
from .errors import (AccuracyError, ConfigError, DegenerateComparisonError, DomainError,
                     EmptyHistogramError, FitError, InconsistencyError, NoPeaksError, NoPulseError,
                     PnrError, SlotCapError)
from .peaks import ArrivalHistogram, GaussianPeak, PeakFit, build_histogram, detect_and_fit_peaks
from .pipeline import (ReconstructionReport, assign_photon_numbers, compare_poisson, reconstruct,
                       reconstruct_statistics, report_from_fit, score_levels, select_optimal_level)
from .tagger import TagConfig, TagResult, Waterfall, crossing_time, tag_dataset, tag_levels, trigger_sweep
from .waveform import (Dataset, EventRecord, FrontendConfig, SourceConfig, generate_dataset,
                       pulse_template, read_waveform_file, write_waveform_file)

__version__ = "0.1.0"
