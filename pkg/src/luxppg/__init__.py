"""Low-light video enhancement and remote photoplethysmography toolkit."""

from .core import FrameSequence, GroundTruthPpg, RecordingMeta, load_recording, to_normalized, to_quantized
from .enhance import (
    IlluminationMap,
    LimeConfig,
    WeightField,
    enhance_video_lime,
    gradient_weights,
    histogram_equalize,
    initial_illumination,
    recover_reflectance,
    refine_illumination,
)
from .metrics import EvalReport, SnrConfig, Spectrogram, aggregate_report, evaluate_video, hr_from_window, mae, rmse, snr_db, spectrogram
from .roi import BoundingBox, LandmarkSet, RoiTrack, iou, roi_from_landmarks, track_roi
from .rppg import IcaConfig, PosConfig, extract_green, extract_ica, extract_pos
from .synth import SynthConfig, generate_recording, write_recording
from .traces import (
    PulseSignal,
    RawTraces,
    WindowPlan,
    bandpass_butterworth,
    detrend_smoothness_prior,
    mean_normalize,
    sliding_windows,
    spatial_average,
)

__version__ = "0.1.0"
