"""Synthetic submissions for load tests, demos and pipeline fixtures.

Windows are built in closed form from a constant-current model (no time
stepping), so thousands of consistent submissions take well under a second.
"""

import hashlib
import math
from typing import List, Optional, Sequence

import numpy as np

from .assets import sequence_assets
from .metrics import DecoderDescriptor, DeviceProfile, MeasurementWindow, VideoAsset, compute_metrics
from .records import DecoderRecord, Submission

VENDORS = ("Qualcomm", "MediaTek", "Exynos", "Google", "Huawei", "Spreadtrum")
STANDARD_CODES = {"AV1": "av01", "HEVC": "hevc", "VP9": "vp9", "H.264": "avc", "VP8": "vp8", "MPEG-4": "mpeg4"}


def closed_form_record(
    decoder: DecoderDescriptor,
    asset: VideoAsset,
    screen_current: float,
    decode_current: float,
    speed: float,
    capacity: float,
    level_start: int = 80,
    drop: int = 3,
    start_frame: int = 0,
    screen_error: float = 0.0,
) -> DecoderRecord:
    """Record an ideal device would produce for these currents."""
    hours = drop / 100.0 * capacity / (screen_current + decode_current)
    seconds = hours * 3600.0
    frames = max(1, int(round(speed * seconds)))
    start = start_frame
    end = start + frames
    window = MeasurementWindow(
        level_start=level_start,
        level_end=level_start - drop,
        time_start=0.0,
        time_end=seconds,
        iter_start=start // asset.n_seq,
        iter_end=end // asset.n_seq,
        frame_start=start % asset.n_seq,
        frame_end=end % asset.n_seq,
        seq_frames=asset.n_seq,
    )
    delta_screen = screen_current / capacity * 100.0 * (1.0 + screen_error)
    metrics = compute_metrics(window, asset, delta_screen, capacity)
    return DecoderRecord(decoder, asset, metrics, window, capacity)


def fleet_decoders(rng: np.random.Generator, count: int) -> List[DecoderDescriptor]:
    standards = list(STANDARD_CODES)
    out = []
    for i in range(count):
        std = standards[i % len(standards)]
        kind = "software" if rng.random() < 0.3 else "hardware"
        vendor = "Google" if kind == "software" else VENDORS[int(rng.integers(0, 3))]
        prefix = "c2.android" if kind == "software" else f"omx.{vendor.lower()}"
        out.append(DecoderDescriptor(f"{prefix}.{STANDARD_CODES[std]}.{i}", std, kind, vendor))
    return out


def synthetic_submission(
    rng: np.random.Generator,
    model: str,
    serial: str,
    build_host: str = "build-host-1",
    decoders: Optional[Sequence[DecoderDescriptor]] = None,
    completeness: float = 1.0,
    capacity: Optional[float] = None,
    n_seq: int = 250,
    status: Optional[str] = None,
) -> Submission:
    """A self-consistent submission with random but plausible currents."""
    capacity = capacity or float(rng.choice([3000.0, 4000.0, 4500.0, 5000.0]))
    decoders = list(decoders) if decoders is not None else fleet_decoders(rng, int(rng.integers(1, 4)))
    pairs = [(d, a) for d in decoders for a in sequence_assets(d.standard, n_seq)]
    keep = max(1, int(math.floor(completeness * len(pairs) + 1e-9)))
    screen = float(rng.uniform(60, 160))
    records = []
    for d, a in pairs[:keep]:
        scale = a.pixels / (640 * 480)
        base = 80 if d.kind == "hardware" else 200
        current = float(base * (1 + 0.25 * scale) * rng.uniform(0.8, 1.2))
        speed = float((400 if d.kind == "hardware" else 180) / scale * rng.uniform(0.7, 1.3))
        records.append(
            closed_form_record(
                d, a, screen, current, speed, capacity, int(rng.integers(30, 90)), 3, int(rng.integers(0, n_seq))
            )
        )
    profile = DeviceProfile(
        model=model,
        manufacturer=model.split()[0],
        serial_number=serial,
        build_host=build_host,
        battery_capacity=capacity,
        battery_level=50.0,
        os_version="11",
    )
    return Submission(
        profile=profile,
        records=records,
        available_pairs=len(pairs),
        campaign_id=hashlib.sha256(f"{serial}\0{build_host}".encode()).hexdigest()[:16],
        client_timestamp=float(rng.uniform(0, 1e6)),
        status=status or ("complete" if keep == len(pairs) else "partial"),
    )
