"""Battery-transition power metrics for video decoders.

All relative quantities are kept in battery percent, exactly as a device
reports them. Only :func:`compute_delta_decode` converts to milliamps.
"""

from dataclasses import asdict, dataclass, field
from typing import List, Optional

STANDARDS = ("AV1", "HEVC", "VP9", "H.264", "VP8", "MPEG-4")
DECODER_KINDS = ("hardware", "software", "hybrid")

SECONDS_PER_HOUR = 3600.0
MIN_LEVEL = 20
MAX_LEVEL = 95
MIN_DROP = 3


class InvalidWindowError(ValueError):
    """The battery-transition window cannot produce a metric."""


@dataclass(frozen=True)
class MeasurementWindow:
    """Two battery-level transitions and the decoder position at each.

    ``level_*`` are battery percent, ``time_*`` monotonic seconds,
    ``iter_*`` completed passes over the bitstream and ``frame_*`` the frame
    index inside the current pass.
    """

    level_start: float
    level_end: float
    time_start: float
    time_end: float
    iter_start: int
    iter_end: int
    frame_start: int
    frame_end: int
    seq_frames: int

    @property
    def frames(self) -> int:
        """Frames decoded between the two transitions."""
        return (self.iter_end - self.iter_start) * self.seq_frames + self.frame_end - self.frame_start

    @property
    def level_drop(self) -> float:
        return self.level_start - self.level_end

    @property
    def duration(self) -> float:
        return self.time_end - self.time_start

    def validate(self) -> None:
        if self.seq_frames <= 0:
            raise InvalidWindowError(f"seq_frames must be positive, got {self.seq_frames}")
        for name in ("frame_start", "frame_end"):
            value = getattr(self, name)
            if not 0 <= value < self.seq_frames:
                raise InvalidWindowError(f"{name}={value} outside [0, {self.seq_frames})")
        if self.level_drop <= 0:
            raise InvalidWindowError(
                f"battery level must drop: {self.level_start} -> {self.level_end}"
            )
        if self.duration <= 0:
            raise InvalidWindowError(f"time must advance: {self.time_start} -> {self.time_end}")
        if self.frames <= 0:
            raise InvalidWindowError("no frames decoded inside the window")


@dataclass(frozen=True)
class VideoAsset:
    name: str
    width: int
    height: int
    fps: float
    n_seq: int
    standard: str
    si_mean: float = 0.0
    ti_mean: float = 0.0
    bitrate: float = 0.0  # kbit/s
    resolution: str = ""

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.n_seq <= 0:
            raise ValueError(f"n_seq must be positive, got {self.n_seq}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"bad frame size {self.width}x{self.height}")
        if self.standard not in STANDARDS:
            raise ValueError(f"unknown standard {self.standard!r}")
        if not self.resolution:
            object.__setattr__(self, "resolution", resolution_class(self.height))

    @property
    def pixels(self) -> int:
        return self.width * self.height


def resolution_class(height: int) -> str:
    """Map a frame height onto the sd/hd/fhd classes used in reports."""
    if height <= 576:
        return "sd"
    if height <= 720:
        return "hd"
    return "fhd"


@dataclass(frozen=True)
class DeviceProfile:
    model: str
    manufacturer: str
    serial_number: str
    build_host: str
    battery_capacity: float  # mAh
    voltage: float = 3.85
    battery_level: float = 50.0
    os_version: str = ""
    charging: bool = False

    def __post_init__(self):
        if self.battery_capacity <= 0:
            raise ValueError(f"battery_capacity must be positive, got {self.battery_capacity}")
        if not 0 <= self.battery_level <= 100:
            raise ValueError(f"battery_level must be within [0, 100], got {self.battery_level}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecoderDescriptor:
    name: str
    standard: str
    kind: str
    vendor: str = ""

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ValueError(f"decoder kind must be one of {DECODER_KINDS}, got {self.kind!r}")
        if self.standard not in STANDARDS:
            raise ValueError(f"unknown standard {self.standard!r}")


@dataclass(frozen=True)
class PowerMetrics:
    delta_seq: float  # % per full sequence
    speed: float  # frames/s
    delta_play: float  # %/h
    delta_decode: float  # mA
    delta_screen: float  # %/h
    realtime: bool = True
    suspect: bool = False


def compute_delta_seq(w: MeasurementWindow) -> float:
    """Battery percent spent decoding the whole bitstream once.

    >>> w = MeasurementWindow(80, 77, 0.0, 1.0, 2, 10, 100, 300, 500)
    >>> round(compute_delta_seq(w), 6)
    0.357143
    """
    w.validate()
    return (w.level_start - w.level_end) / w.frames * w.seq_frames


def compute_decode_speed(w: MeasurementWindow) -> float:
    """Average frames per second between the two transitions."""
    w.validate()
    return w.frames / (w.time_end - w.time_start)


def screen_compensation(delta_screen: float, speed: float, fps: float) -> float:
    """Display draw while the decoder idles ahead of playback, in %/h.

    Zero whenever decoding is not faster than playback.
    """
    if speed <= fps:
        return 0.0
    return delta_screen * (1.0 - fps / speed)


def compute_delta_play(delta_seq: float, speed: float, asset: VideoAsset, delta_screen: float):
    """Battery percent per hour of real-time playback.

    Returns ``(delta_play, realtime)``; ``realtime`` is False when the
    decoder cannot keep up with ``asset.fps``.
    """
    if speed <= 0:
        raise ValueError(f"decode speed must be positive, got {speed}")
    value = delta_seq * (asset.fps / asset.n_seq) * SECONDS_PER_HOUR
    value += screen_compensation(delta_screen, speed, asset.fps)
    return value, speed >= asset.fps


def compute_delta_decode(
    delta_seq: float, speed: float, asset: VideoAsset, delta_screen: float, capacity: float
):
    """Decoder-only current draw in mA, display baseline removed.

    The %/h difference is turned into a fraction before scaling by the
    capacity in mAh. Returns ``(milliamps, suspect)``; non-positive draws
    are kept and flagged suspect.
    """
    if capacity <= 0:
        raise ValueError(f"battery capacity must be positive, got {capacity}")
    if speed <= 0:
        raise ValueError(f"decode speed must be positive, got {speed}")
    drain = delta_seq * (speed / asset.n_seq) * SECONDS_PER_HOUR
    value = capacity * (drain - delta_screen) / 100.0
    # equal terms that differ only by rounding count as cancelled
    return value, drain - delta_screen <= 1e-12 * max(abs(drain), abs(delta_screen))


def compute_metrics(
    w: MeasurementWindow, asset: VideoAsset, delta_screen: float, capacity: float
) -> PowerMetrics:
    """All four metrics for one window."""
    if w.seq_frames != asset.n_seq:
        raise InvalidWindowError(
            f"window has {w.seq_frames} frames per sequence, asset {asset.name} has {asset.n_seq}"
        )
    delta_seq = compute_delta_seq(w)
    speed = compute_decode_speed(w)
    play, realtime = compute_delta_play(delta_seq, speed, asset, delta_screen)
    decode, suspect = compute_delta_decode(delta_seq, speed, asset, delta_screen, capacity)
    return PowerMetrics(
        delta_seq=delta_seq,
        speed=speed,
        delta_play=play,
        delta_decode=decode,
        delta_screen=delta_screen,
        realtime=realtime,
        suspect=suspect,
    )


@dataclass(frozen=True)
class Violation:
    requirement: int
    message: str


@dataclass(frozen=True)
class ValidityVerdict:
    violations: List[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid

    @property
    def requirements(self) -> List[int]:
        return [v.requirement for v in self.violations]


def check_validity(
    profile: DeviceProfile, planned_drop: float, level: Optional[float] = None
) -> ValidityVerdict:
    """Check the conditions a measurement needs to be trustworthy.

    Requirement 4 (spreading work over several charge cycles) is always
    allowed, so it never shows up as a violation.
    """
    level = profile.battery_level if level is None else level
    violations = []
    if profile.charging:
        violations.append(Violation(1, "device is charging; measurements need battery power"))
    if level < MIN_LEVEL:
        violations.append(Violation(2, f"battery level {level}% is below {MIN_LEVEL}%"))
    elif level > MAX_LEVEL:
        violations.append(Violation(2, f"battery level {level}% is above {MAX_LEVEL}%"))
    if planned_drop < MIN_DROP:
        violations.append(
            Violation(3, f"planned drop {planned_drop}% is below the {MIN_DROP}% minimum")
        )
    return ValidityVerdict(violations)
