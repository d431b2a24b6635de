"""Device and decoder interfaces the session engine talks to.

Two implementations ship with the package: :class:`decwatt.sim.SimDevice`
and :class:`TraceReplay`, which plays back a recorded battery trace.
"""

import bisect
import csv
import json
from typing import Iterable, List, Optional, Protocol, Sequence, Tuple, runtime_checkable

from .metrics import DecoderDescriptor, DeviceProfile, VideoAsset


class ProbeLost(RuntimeError):
    """The device stopped answering (powered off, disconnected)."""


@runtime_checkable
class DeviceProbe(Protocol):
    def level(self) -> int: ...

    def charging(self) -> bool: ...

    def time(self) -> float: ...

    def profile(self) -> DeviceProfile: ...

    def idle(self, seconds: float) -> None: ...


@runtime_checkable
class DecoderHarness(Protocol):
    def decoders(self) -> List[DecoderDescriptor]: ...

    def open(self, decoder: DecoderDescriptor, asset: VideoAsset) -> None: ...

    def decode_next_frame(self) -> Tuple[int, int]: ...

    def reset(self) -> None: ...


class TraceReplay:
    """Replays a recorded ``(time, level, charging)`` trace.

    Decoding advances the clock at a fixed frame rate; the battery level at
    any instant is the last recorded sample at or before it. Useful for
    re-running the engine against logs captured on a real handset.
    """

    def __init__(
        self,
        samples: Sequence[Tuple[float, int, bool]],
        profile: DeviceProfile,
        fps: float,
        decoders: Optional[Iterable[DecoderDescriptor]] = None,
    ):
        if not samples:
            raise ValueError("trace is empty")
        samples = sorted(samples, key=lambda s: s[0])
        self._times = [float(s[0]) for s in samples]
        self._levels = [int(s[1]) for s in samples]
        self._charging = [bool(s[2]) for s in samples]
        self._profile = profile
        self._fps = fps
        self._decoders = list(decoders or [])
        self._now = self._times[0]
        self._frames = 0
        self._n_seq = 1

    @classmethod
    def from_file(cls, path, profile: DeviceProfile, fps: float, decoders=None) -> "TraceReplay":
        """Load a CSV with ``time,level,charging`` columns or JSON lines."""
        samples = []
        with open(path, newline="") as f:
            if str(path).endswith(".csv"):
                for row in csv.DictReader(f):
                    charging = row.get("charging", "0").strip().lower() in ("1", "true", "yes")
                    samples.append((float(row["time"]), int(float(row["level"])), charging))
            else:
                for line in f:
                    if line.strip():
                        rec = json.loads(line)
                        samples.append((rec["time"], rec["level"], rec.get("charging", False)))
        return cls(samples, profile, fps, decoders)

    def _index(self) -> int:
        i = bisect.bisect_right(self._times, self._now) - 1
        if self._now > self._times[-1]:
            raise ProbeLost(f"trace ended at t={self._times[-1]}")
        return max(i, 0)

    def level(self) -> int:
        return self._levels[self._index()]

    def charging(self) -> bool:
        return self._charging[self._index()]

    def time(self) -> float:
        return self._now

    def profile(self) -> DeviceProfile:
        p = self._profile
        return DeviceProfile(**{**p.to_dict(), "battery_level": self.level(), "charging": self.charging()})

    def idle(self, seconds: float) -> None:
        self._now += seconds

    def decoders(self) -> List[DecoderDescriptor]:
        return list(self._decoders)

    def open(self, decoder: DecoderDescriptor, asset: VideoAsset) -> None:
        self._frames = 0
        self._n_seq = asset.n_seq

    def reset(self) -> None:
        self._frames = 0

    def decode_frames(self, count: int) -> Tuple[int, int]:
        self._now += count / self._fps
        self._frames += count
        return divmod(self._frames, self._n_seq)

    def decode_next_frame(self) -> Tuple[int, int]:
        return self.decode_frames(1)
