"""Measurement campaign on one device.

The engine loop-decodes each bitstream, waits for integer battery-level
transitions, turns the first and last transitions of a window into a
:class:`~decwatt.metrics.MeasurementWindow`, and checkpoints at every
(decoder, asset) boundary so a campaign can span several charge cycles.
"""

import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .metrics import (
    MAX_LEVEL,
    MIN_DROP,
    MIN_LEVEL,
    DecoderDescriptor,
    MeasurementWindow,
    VideoAsset,
    check_validity,
    compute_metrics,
)
from .probe import DecoderHarness, DeviceProbe, ProbeLost
from .records import DecoderRecord, Submission, dumps, read_jsonl

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "decwatt-checkpoint"
CHECKPOINT_VERSION = 1

Pair = Tuple[str, str]  # (decoder name, asset name)


class SessionError(RuntimeError):
    pass


class AbortedBaseline(SessionError):
    """Charger attached while the screen baseline was running."""


class StalledProbe(SessionError):
    """No battery transition within the allowed time."""


class Suspended(SessionError):
    """The device left the valid measurement envelope; resume later."""

    def __init__(self, reason: str, level: int):
        super().__init__(reason)
        self.reason = reason
        self.level = level


class DecoderFailure(SessionError):
    """The decoder could not be opened or crashed while decoding."""


@dataclass
class SessionConfig:
    drop_target: float = MIN_DROP
    poll_interval: float = 1.0  # s
    baseline_drop: int = 2
    stall_timeout: float = 6 * 3600.0  # s without any transition
    allow_zero_baseline: bool = False


def _check_envelope(level: int) -> None:
    if level < MIN_LEVEL:
        raise Suspended(f"battery level {level}% below {MIN_LEVEL}%", level)


def measure_screen_baseline(
    probe: DeviceProbe,
    min_drop: int = 2,
    poll_interval: float = 1.0,
    timeout: float = 6 * 3600.0,
    allow_zero: bool = False,
) -> float:
    """Display-on idle consumption in %/h.

    The first transition only anchors the window; the rate is taken over
    the next ``min_drop`` transitions. With ``allow_zero`` a device that
    never discharges within ``timeout`` reports 0 instead of raising
    :class:`StalledProbe`.
    """
    if min_drop < 1:
        raise ValueError("min_drop must be at least 1")
    if probe.charging():
        raise AbortedBaseline("device is charging")
    level = probe.level()
    if level < MIN_LEVEL or level > MAX_LEVEL:
        raise Suspended(f"battery level {level}% outside [{MIN_LEVEL}, {MAX_LEVEL}]", level)

    anchor = None  # (time, level)
    last_change = probe.time()
    while True:
        probe.idle(poll_interval)
        now = probe.time()
        current = probe.level()
        if probe.charging():
            raise AbortedBaseline(f"charger attached at t={now:.1f}s")
        if current != level:
            last_change = now
            level = current
            if level < MIN_LEVEL:
                raise Suspended(f"battery level {level}% below {MIN_LEVEL}%", level)
            if anchor is None:
                anchor = (now, level)
            elif anchor[1] - level >= min_drop:
                return (anchor[1] - level) / ((now - anchor[0]) / 3600.0)
        elif now - last_change >= timeout:
            if allow_zero and anchor is None:
                return 0.0
            raise StalledProbe(f"no battery transition for {timeout:.0f}s")


def _decode(harness: DecoderHarness, count: int) -> Tuple[int, int]:
    batch = getattr(harness, "decode_frames", None)
    if batch is not None:
        return batch(count)
    for _ in range(count):
        pos = harness.decode_next_frame()
    return pos


def measure_decoder(
    probe: DeviceProbe,
    harness: DecoderHarness,
    decoder: DecoderDescriptor,
    asset: VideoAsset,
    delta_screen: float,
    drop_target: float = MIN_DROP,
    poll_interval: float = 1.0,
    stall_timeout: float = 6 * 3600.0,
) -> DecoderRecord:
    """Loop-decode ``asset`` until the battery has dropped ``drop_target``
    levels past the first observed transition.

    The probe is read roughly every ``poll_interval`` seconds and at every
    wrap of the bitstream. Raises :class:`Suspended` when the device leaves
    the valid envelope and :class:`DecoderFailure` when decoding fails.
    """
    profile = probe.profile()
    verdict = check_validity(profile, drop_target)
    if not verdict:
        raise Suspended("; ".join(v.message for v in verdict.violations), int(profile.battery_level))

    try:
        harness.open(decoder, asset)
    except ProbeLost:
        raise
    except Exception as exc:
        raise DecoderFailure(f"{decoder.name} failed to open {asset.name}: {exc}") from exc

    n_seq = asset.n_seq
    level = probe.level()
    t_prev = probe.time()
    last_change = t_prev
    iteration, frame = 0, 0
    batch = 1
    start = None  # (level, time, iteration, frame)
    try:
        while True:
            batch = max(1, min(batch, n_seq - frame))
            iteration, frame = _decode(harness, batch)
            now = probe.time()
            elapsed = now - t_prev
            t_prev = now
            if elapsed > 0:
                batch = max(1, int(poll_interval * batch / elapsed))
            current = probe.level()
            if probe.charging():
                raise Suspended("charger attached", current)
            if current == level:
                if now - last_change > stall_timeout:
                    raise StalledProbe(f"{decoder.name}: no transition for {stall_timeout:.0f}s")
                continue
            last_change = now
            level = current
            _check_envelope(level)
            if start is None:
                start = (level, now, iteration, frame)
                continue
            if start[0] - level >= drop_target:
                break
    except (SessionError, ProbeLost):
        raise
    except Exception as exc:
        raise DecoderFailure(f"{decoder.name} crashed on {asset.name}: {exc}") from exc
    finally:
        close = getattr(harness, "close", None)
        if close is not None:
            close()

    window = MeasurementWindow(
        level_start=start[0],
        level_end=level,
        time_start=start[1],
        time_end=now,
        iter_start=start[2],
        iter_end=iteration,
        frame_start=start[3],
        frame_end=frame,
        seq_frames=n_seq,
    )
    metrics = compute_metrics(window, asset, delta_screen, profile.battery_capacity)
    return DecoderRecord(decoder, asset, metrics, window, profile.battery_capacity)


@dataclass
class SessionCheckpoint:
    campaign_id: str
    completed: Dict[Pair, DecoderRecord] = field(default_factory=dict)
    untestable: Dict[Pair, str] = field(default_factory=dict)
    in_progress: Optional[Pair] = None
    suspended_level: Optional[int] = None
    suspend_reason: Optional[str] = None
    delta_screen: Optional[float] = None
    context: Dict[str, object] = field(default_factory=dict)  # caller metadata, e.g. asset list

    def to_lines(self) -> List[str]:
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "campaign_id": self.campaign_id,
            "in_progress": list(self.in_progress) if self.in_progress else None,
            "suspended_level": self.suspended_level,
            "suspend_reason": self.suspend_reason,
            "delta_screen": self.delta_screen,
            "context": self.context,
        }
        lines = [dumps(header)]
        for key in sorted(self.completed):
            lines.append(dumps({"type": "record", "record": self.completed[key].to_dict()}))
        for key in sorted(self.untestable):
            lines.append(dumps({"type": "untestable", "pair": list(key), "reason": self.untestable[key]}))
        return lines

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as f:
            f.write("\n".join(self.to_lines()) + "\n")
        os.replace(tmp, path)

    @classmethod
    def from_rows(cls, rows) -> "SessionCheckpoint":
        rows = list(rows)
        if not rows:
            raise ValueError("empty checkpoint")
        header = rows[0]
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a decwatt checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        cp = cls(
            campaign_id=header["campaign_id"],
            in_progress=tuple(header["in_progress"]) if header.get("in_progress") else None,
            suspended_level=header.get("suspended_level"),
            suspend_reason=header.get("suspend_reason"),
            delta_screen=header.get("delta_screen"),
            context=header.get("context") or {},
        )
        for row in rows[1:]:
            if row["type"] == "record":
                rec = DecoderRecord.from_dict(row["record"])
                cp.completed[rec.key] = rec
            elif row["type"] == "untestable":
                cp.untestable[tuple(row["pair"])] = row["reason"]
            else:
                raise ValueError(f"unknown checkpoint row type {row['type']!r}")
        return cp

    @classmethod
    def load(cls, path) -> "SessionCheckpoint":
        return cls.from_rows(read_jsonl(path))


def campaign_id_for(profile, assets: Sequence[VideoAsset]) -> str:
    h = hashlib.sha256()
    for part in (profile.serial_number, profile.build_host, *sorted(a.name for a in assets)):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def ordered_pairs(decoders: Sequence[DecoderDescriptor], assets: Sequence[VideoAsset]):
    """Decoder name first, then resolution ascending.

    A decoder is only paired with bitstreams of its own standard.
    """
    decs = sorted(decoders, key=lambda d: d.name)
    vids = sorted(assets, key=lambda a: (a.pixels, a.height, a.name))
    return [(d, a) for d in decs for a in vids if a.standard == d.standard]


def build_submission(
    probe: DeviceProbe, cp: SessionCheckpoint, pairs, status: str
) -> Submission:
    order = {(d.name, a.name): i for i, (d, a) in enumerate(pairs)}
    records = sorted(cp.completed.values(), key=lambda r: order.get(r.key, len(order)))
    untestable = [(k[0], k[1], cp.untestable[k]) for k in sorted(cp.untestable, key=lambda k: order.get(k, 0))]
    return Submission(
        profile=probe.profile(),
        records=records,
        available_pairs=len(pairs),
        campaign_id=cp.campaign_id,
        client_timestamp=probe.time(),
        status=status,
        untestable=untestable,
    )


def run_campaign(
    probe: DeviceProbe,
    harness: DecoderHarness,
    assets: Sequence[VideoAsset],
    checkpoint: Optional[SessionCheckpoint] = None,
    config: Optional[SessionConfig] = None,
    checkpoint_path=None,
    max_pairs: Optional[int] = None,
    remeasure_baseline: bool = False,
) -> Tuple[Submission, SessionCheckpoint]:
    """Measure every (decoder, asset) pair not already in ``checkpoint``.

    Stops early when the device leaves the valid envelope, when the probe is
    lost, or after ``max_pairs`` pairs (operator interruption). The returned
    checkpoint resumes exactly where this call stopped.
    """
    if not assets:
        raise ValueError("asset list is empty")
    config = config or SessionConfig()
    profile = probe.profile()
    pairs = ordered_pairs(harness.decoders(), assets)
    cp = checkpoint or SessionCheckpoint(campaign_id_for(profile, assets))
    cp.suspended_level = None
    cp.suspend_reason = None

    def save():
        if checkpoint_path is not None:
            cp.save(checkpoint_path)

    status = "complete"
    try:
        if cp.delta_screen is None or remeasure_baseline:
            cp.delta_screen = measure_screen_baseline(
                probe,
                config.baseline_drop,
                config.poll_interval,
                config.stall_timeout,
                config.allow_zero_baseline,
            )
            log.info("screen baseline %.4f %%/h", cp.delta_screen)
            save()
        done = 0
        for decoder, asset in pairs:
            key = (decoder.name, asset.name)
            if key in cp.completed or key in cp.untestable:
                continue
            if max_pairs is not None and done >= max_pairs:
                status = "partial"
                break
            cp.in_progress = key
            try:
                record = measure_decoder(
                    probe,
                    harness,
                    decoder,
                    asset,
                    cp.delta_screen,
                    config.drop_target,
                    config.poll_interval,
                    config.stall_timeout,
                )
            except DecoderFailure as exc:
                log.warning("untestable %s/%s: %s", key[0], key[1], exc)
                cp.untestable[key] = str(exc)
            else:
                cp.completed[key] = record
            cp.in_progress = None
            done += 1
            save()
    except Suspended as exc:
        log.info("suspended: %s", exc.reason)
        cp.suspended_level = exc.level
        cp.suspend_reason = exc.reason
        status = "partial"
        save()
    except (AbortedBaseline, StalledProbe) as exc:
        cp.suspend_reason = str(exc)
        status = "partial"
        save()
    except ProbeLost as exc:
        log.warning("probe lost: %s", exc)
        cp.suspend_reason = f"probe lost: {exc}"
        status = "partial"
        save()
        return _lost_submission(profile, cp, pairs), cp
    return build_submission(probe, cp, pairs, status), cp


def _lost_submission(profile, cp, pairs) -> Submission:
    # the probe cannot be queried any more; fall back to the opening profile
    order = {(d.name, a.name): i for i, (d, a) in enumerate(pairs)}
    records = sorted(cp.completed.values(), key=lambda r: order.get(r.key, len(order)))
    return Submission(
        profile=profile,
        records=records,
        available_pairs=len(pairs),
        campaign_id=cp.campaign_id,
        client_timestamp=max((r.window.time_end for r in records), default=0.0),
        status="partial",
        untestable=[(k[0], k[1], v) for k, v in sorted(cp.untestable.items())],
    )
