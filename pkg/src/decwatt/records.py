"""Measurement records and their canonical JSON form.

Everything that crosses a process boundary (checkpoints, submissions, the
collector log, pipeline files) goes through :func:`dumps` so identical data
always produces identical bytes.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from .metrics import (
    DecoderDescriptor,
    DeviceProfile,
    MeasurementWindow,
    PowerMetrics,
    VideoAsset,
    compute_metrics,
)

STATUSES = ("partial", "complete", "cancelled")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def read_jsonl(path) -> Iterator[dict]:
    with open(path) as f:
        for line in f:
            if line.strip():
                yield json.loads(line)


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(dumps(row) + "\n")


@dataclass(frozen=True)
class DecoderRecord:
    decoder: DecoderDescriptor
    asset: VideoAsset
    metrics: PowerMetrics
    window: MeasurementWindow
    capacity: float
    partial: bool = False

    @property
    def key(self) -> Tuple[str, str]:
        return (self.decoder.name, self.asset.name)

    @property
    def resolution(self) -> str:
        return self.asset.resolution

    @property
    def flags(self) -> Dict[str, bool]:
        return {
            "non_realtime": not self.metrics.realtime,
            "suspect": self.metrics.suspect,
            "partial": self.partial,
        }

    def recompute(self) -> PowerMetrics:
        """Metrics rebuilt from the stored window."""
        return compute_metrics(self.window, self.asset, self.metrics.delta_screen, self.capacity)

    def is_consistent(self) -> bool:
        return self.recompute() == self.metrics

    def to_dict(self) -> dict:
        return {
            "decoder": asdict(self.decoder),
            "asset": asdict(self.asset),
            "metrics": asdict(self.metrics),
            "window": asdict(self.window),
            "capacity": self.capacity,
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderRecord":
        return cls(
            decoder=DecoderDescriptor(**d["decoder"]),
            asset=VideoAsset(**d["asset"]),
            metrics=PowerMetrics(**d["metrics"]),
            window=MeasurementWindow(**d["window"]),
            capacity=d["capacity"],
            partial=d.get("flags", {}).get("partial", False),
        )


@dataclass(frozen=True)
class Submission:
    """One device's results, possibly covering only some decoder pairs."""

    profile: DeviceProfile
    records: List[DecoderRecord]
    available_pairs: int
    campaign_id: str
    client_timestamp: float
    status: str = "complete"
    untestable: List[Tuple[str, str, str]] = field(default_factory=list)
    serial_hash: Optional[str] = None

    @property
    def completeness(self) -> float:
        if self.available_pairs <= 0:
            return 0.0
        return len({r.key for r in self.records}) / self.available_pairs

    def to_dict(self) -> dict:
        profile = self.profile.to_dict()
        d = {
            "profile": profile,
            "records": [r.to_dict() for r in self.records],
            "available_pairs": self.available_pairs,
            "completeness": self.completeness,
            "campaign_id": self.campaign_id,
            "client_timestamp": self.client_timestamp,
            "status": self.status,
            "untestable": [list(u) for u in self.untestable],
        }
        if self.serial_hash is not None:
            d["serial_hash"] = self.serial_hash
        return d

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Submission":
        return cls(
            profile=DeviceProfile(**d["profile"]),
            records=[DecoderRecord.from_dict(r) for r in d["records"]],
            available_pairs=d["available_pairs"],
            campaign_id=d["campaign_id"],
            client_timestamp=d["client_timestamp"],
            status=d.get("status", "complete"),
            untestable=[tuple(u) for u in d.get("untestable", [])],
            serial_hash=d.get("serial_hash"),
        )
