"""Estimate video-decoder power draw on phones from battery-level transitions."""

from .metrics import (
    DecoderDescriptor,
    DeviceProfile,
    InvalidWindowError,
    MeasurementWindow,
    PowerMetrics,
    VideoAsset,
    check_validity,
    compute_decode_speed,
    compute_delta_decode,
    compute_delta_play,
    compute_delta_seq,
    compute_metrics,
)
from .records import DecoderRecord, Submission
from .session import SessionCheckpoint, SessionConfig, measure_decoder, measure_screen_baseline, run_campaign
from .sim import SimConfig, SimDecoder, SimDevice, ground_truth, reference_config

__version__ = "0.1.0"
