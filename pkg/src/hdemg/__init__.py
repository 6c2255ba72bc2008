"""hdemg: high-density surface EMG toolkit.

Synthetic EMG generation from the convolutive motor-unit model, channel
quality control, blind-source-separation decomposition into motor-unit spike
trains, spike-train metrics, and a small gesture classifier, with binary
container and report formats plus a batch CLI.
"""

from .decompose import (DecompParams, SourceEstimate, classify_peaks, decompose,
                        detect_peaks, extend, fixed_point_iterate,
                        fit_separation_vector, refine_source, whiten)
from .errors import (CorruptFileError, DegenerateDataError, DegenerateUpdateError,
                     FormatError, HdemgError, InsufficientSpikesError,
                     InvalidInputError)
from .gesture import (GESTURE_NAMES, AdamState, EvalReport, NetworkParams,
                      TrainConfig, WindowedDataset, adam_step, cross_validate,
                      crossval_summary, evaluate, forward, init_params,
                      loss_and_gradients, segment_windows, split_dataset, train)
from .metrics import (DecompositionReport, MotorUnit, aligned_rate_of_agreement,
                      build_report, clean_units, cov_isi, dedup_units,
                      firing_rate, motor_unit_from_estimate, rate_of_agreement)
from .signals import (FilterSpec, Recording, apply_filter, preprocess_baseline,
                      preprocess_gesture)
from .stats import (ChannelStats, TTestResult, overall_rms,
                    regularized_incomplete_beta, rms_per_channel,
                    student_t_two_sided_p, two_sample_ttest, zscore_outliers)
from .synth import (GroundTruth, MuapTemplate, SpikeTrain, SynthConfig,
                    generate_muap, generate_spike_train, mix, synth_gesture_dataset,
                    synthesize)

__version__ = "0.1.0"
