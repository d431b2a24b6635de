"""Cleaning, per-model aggregation and summary statistics.

Raw collector samples are flattened to one :class:`Sample` per
(device, decoder, resolution). Auto-drop rules remove records that cannot be
trusted at all; statistical rules only raise flags, which an operator
resolves in a review file before the dataset is finalized.
"""

import argparse
import json
import sys
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .metrics import DECODER_KINDS, STANDARDS
from .records import read_jsonl, write_jsonl

RESOLUTIONS = ("sd", "hd", "fhd")

RULE_NONPOSITIVE_DECODE = "a"
RULE_CHARGING = "b"
RULE_MAD = "c"
RULE_PLAY_CAP = "d"
AUTO_DROP_RULES = (RULE_NONPOSITIVE_DECODE, RULE_CHARGING)

FLAGGED = "flagged"
KEEP = "reviewed-keep"
DROP = "reviewed-drop"


@dataclass(frozen=True)
class Sample:
    device: str
    model: str
    decoder: str
    standard: str
    kind: str
    vendor: str
    resolution: str
    fps: float
    delta_play: float
    delta_decode: float
    speed: float
    realtime: bool = True
    suspect: bool = False
    charging: bool = False

    @property
    def ref(self) -> str:
        return f"{self.device}/{self.decoder}/{self.resolution}"


def flatten(submissions: Iterable[dict]) -> List[Sample]:
    """One Sample per record of every exported submission."""
    out = []
    for sub in submissions:
        profile = sub["profile"]
        device = sub.get("serial_hash") or profile.get("serial_number", "")
        device = f"{device.split(':', 1)[-1][:16]}@{profile['build_host']}"
        for rec in sub["records"]:
            dec, asset, m = rec["decoder"], rec["asset"], rec["metrics"]
            out.append(
                Sample(
                    device=device,
                    model=profile["model"],
                    decoder=dec["name"],
                    standard=dec["standard"],
                    kind=dec["kind"],
                    vendor=dec.get("vendor", ""),
                    resolution=asset["resolution"],
                    fps=asset["fps"],
                    delta_play=m["delta_play"],
                    delta_decode=m["delta_decode"],
                    speed=m["speed"],
                    realtime=m.get("realtime", True),
                    suspect=m.get("suspect", False),
                    charging=bool(profile.get("charging", False)),
                )
            )
    return out


@dataclass(frozen=True)
class AnomalyRules:
    mad_k: float = 3.0
    min_group: int = 3
    play_cap: float = 40.0  # %/h
    metrics: Tuple[str, ...] = ("delta_play",)


@dataclass
class AnomalyFlag:
    ref: str
    rule: str
    detail: str
    disposition: str = FLAGGED

    @property
    def id(self) -> str:
        return f"{self.ref}#{self.rule}"


def mad_outliers(values: Sequence[float], k: float = 3.0) -> List[int]:
    """Indices with |x - median| > k * MAD (MAD unscaled)."""
    x = np.asarray(values, dtype=float)
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    return [int(i) for i in np.flatnonzero(np.abs(x - med) > k * mad)]


def _auto_flags(samples: Sequence[Sample]) -> List[AnomalyFlag]:
    flags = []
    for s in samples:
        if s.delta_decode <= 0:
            flags.append(AnomalyFlag(s.ref, RULE_NONPOSITIVE_DECODE, f"delta_decode={s.delta_decode:.6g} mA", DROP))
        if s.charging:
            flags.append(AnomalyFlag(s.ref, RULE_CHARGING, "device reported charging", DROP))
    return flags


def flag_anomalies(samples: Sequence[Sample], rules: Optional[AnomalyRules] = None) -> List[AnomalyFlag]:
    """Apply the cleaning rules.

    Rules (a) non-positive decode current and (b) charging are auto-dropped.
    Rule (c) flags MAD outliers in same-model groups of at least
    ``min_group`` records; rule (d) caps delta_play in smaller groups.
    """
    rules = rules or AnomalyRules()
    flags = _auto_flags(samples)
    dropped = {f.ref for f in flags}
    groups = defaultdict(list)
    for s in samples:
        if s.ref not in dropped:
            groups[(s.model, s.decoder, s.resolution)].append(s)
    for key in sorted(groups):
        group = groups[key]
        if len(group) >= rules.min_group:
            for metric in rules.metrics:
                values = [getattr(s, metric) for s in group]
                med = float(np.median(values))
                for i in mad_outliers(values, rules.mad_k):
                    flags.append(
                        AnomalyFlag(
                            group[i].ref,
                            RULE_MAD,
                            f"{metric}={values[i]:.6g} median={med:.6g} n={len(group)}",
                        )
                    )
        else:
            for s in group:
                if s.delta_play > rules.play_cap:
                    flags.append(
                        AnomalyFlag(s.ref, RULE_PLAY_CAP, f"delta_play={s.delta_play:.6g} > {rules.play_cap:g}")
                    )
    flags.sort(key=lambda f: (f.ref, f.rule, f.detail))
    return flags


class UnreviewedFlags(RuntimeError):
    def __init__(self, flags: List[AnomalyFlag]):
        super().__init__(f"{len(flags)} flag(s) still need review: " + ", ".join(f.id for f in flags[:5]))
        self.flags = flags


def apply_review(flags: List[AnomalyFlag], review: Dict[str, str]) -> List[AnomalyFlag]:
    """Copy operator dispositions (flag id -> disposition) onto the flags."""
    out = []
    for f in flags:
        disp = review.get(f.id, f.disposition)
        if f.rule in AUTO_DROP_RULES:
            disp = DROP
        if disp not in (FLAGGED, KEEP, DROP):
            raise ValueError(f"bad disposition {disp!r} for {f.id}")
        out.append(AnomalyFlag(f.ref, f.rule, f.detail, disp))
    return out


def finalize(samples: Sequence[Sample], flags: Sequence[AnomalyFlag]) -> List[Sample]:
    """Drop reviewed-drop records; refuse while any flag is unreviewed."""
    pending = [f for f in flags if f.disposition == FLAGGED]
    if pending:
        raise UnreviewedFlags(pending)
    dropped = {f.ref for f in flags if f.disposition == DROP}
    return [s for s in samples if s.ref not in dropped]


def anomaly_rate(samples: Sequence[Sample], flags: Sequence[AnomalyFlag]) -> float:
    if not samples:
        return 0.0
    return len({f.ref for f in flags if f.disposition == DROP}) / len(samples)


@dataclass
class CellStats:
    decoder: str
    standard: str
    kind: str
    vendor: str
    resolution: str
    fps: float
    count: int
    play_mean: float
    play_std: float
    decode_mean: float
    decode_std: float
    speed_mean: float
    speed_std: float
    non_realtime: bool
    suspect: bool

    @property
    def key(self) -> Tuple[str, str]:
        return (self.decoder, self.resolution)


@dataclass
class ModelAggregate:
    model: str
    device_count: int
    cells: Dict[Tuple[str, str], CellStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "device_count": self.device_count,
            "cells": [asdict(self.cells[k]) for k in sorted(self.cells)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelAggregate":
        cells = [CellStats(**c) for c in d["cells"]]
        return cls(d["model"], d["device_count"], {c.key: c for c in cells})


def _mean_std(values: List[float]) -> Tuple[float, float]:
    x = np.asarray(values, dtype=float)
    if len(x) == 1:
        return float(x[0]), 0.0
    return float(np.mean(x)), float(np.std(x))


def merge_by_model(samples: Sequence[Sample], drop: Iterable[str] = ()) -> List[ModelAggregate]:
    """Mean and population standard deviation per model, decoder and resolution."""
    dropped = set(drop)
    by_model = defaultdict(lambda: defaultdict(list))
    for s in samples:
        if s.ref in dropped:
            continue
        by_model[s.model][(s.decoder, s.resolution)].append(s)
    out = []
    for model in sorted(by_model):
        cells = {}
        devices = set()
        for key in sorted(by_model[model]):
            # fixed order so the float sums do not depend on input order
            group = sorted(by_model[model][key], key=lambda s: s.ref)
            devices.update(s.device for s in group)
            first = group[0]
            play = _mean_std([s.delta_play for s in group])
            decode = _mean_std([s.delta_decode for s in group])
            speed = _mean_std([s.speed for s in group])
            cells[key] = CellStats(
                decoder=first.decoder,
                standard=first.standard,
                kind=first.kind,
                vendor=first.vendor,
                resolution=first.resolution,
                fps=first.fps,
                count=len(group),
                play_mean=play[0],
                play_std=play[1],
                decode_mean=decode[0],
                decode_std=decode[1],
                speed_mean=speed[0],
                speed_std=speed[1],
                non_realtime=speed[0] < first.fps,
                suspect=any(s.suspect for s in group),
            )
        out.append(ModelAggregate(model, len(devices), cells))
    return out


def best_cell(cells: Iterable[CellStats], metric: str = "play") -> Optional[CellStats]:
    """Lowest mean metric; ties go to the faster decoder, then by name."""
    return min(
        cells,
        key=lambda c: (getattr(c, f"{metric}_mean"), -c.speed_mean, c.decoder),
        default=None,
    )


def _fraction(num: int, den: int) -> dict:
    return {"numerator": num, "denominator": den, "value": num / den if den else 0.0}


def summary_statistics(aggregates: Sequence[ModelAggregate]) -> dict:
    """Per-resolution win rates over models, plus non-realtime shares."""
    if not aggregates:
        raise ValueError("no aggregates")
    report = {"models": len(aggregates), "resolutions": {}}
    for res in RESOLUTIONS:
        winners = []
        for agg in aggregates:
            cells = [c for c in agg.cells.values() if c.resolution == res]
            best = best_cell(cells)
            if best is not None:
                winners.append(best)
        if not winners:
            continue
        n = len(winners)
        by_kind = {k: _fraction(sum(w.kind == k for w in winners), n) for k in DECODER_KINDS}
        by_standard = {s: _fraction(sum(w.standard == s for w in winners), n) for s in STANDARDS}
        software_standard = {
            s: _fraction(sum(w.kind == "software" and w.standard == s for w in winners), n) for s in STANDARDS
        }
        non_rt = {}
        for s in STANDARDS:
            cells = [
                c for agg in aggregates for c in agg.cells.values() if c.resolution == res and c.standard == s
            ]
            non_rt[s] = _fraction(sum(c.non_realtime for c in cells), len(cells))
        report["resolutions"][res] = {
            "models": n,
            "software_win": by_kind["software"],
            "kind_win": by_kind,
            "standard_win": by_standard,
            "software_standard_win": software_standard,
            "non_realtime": non_rt,
        }
    return report


# -- file helpers and CLI ----------------------------------------------


def load_review(path) -> Dict[str, str]:
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        return {}
    return {k: v["disposition"] if isinstance(v, dict) else v for k, v in data.items()}


def write_review(path, flags: Sequence[AnomalyFlag]) -> None:
    data = {f.id: {"disposition": f.disposition, "rule": f.rule, "detail": f.detail} for f in flags}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_aggregates(path) -> List[ModelAggregate]:
    return [ModelAggregate.from_dict(d) for d in read_jsonl(path)]


def save_aggregates(path, aggregates: Sequence[ModelAggregate]) -> None:
    write_jsonl(path, (a.to_dict() for a in aggregates))


def _load_samples(path) -> List[Sample]:
    rows = list(read_jsonl(path))
    if rows and "records" in rows[0]:
        return flatten(rows)
    return [Sample(**r) for r in rows]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="decwatt-pipeline", description="Clean, merge and summarize decoder samples.")
    p.add_argument("command", choices=("clean", "merge", "stats"))
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--review", help="disposition file (clean)")
    p.add_argument("--mad-k", type=float, default=3.0)
    p.add_argument("--play-cap", type=float, default=40.0)
    args = p.parse_args(argv)

    if args.command == "clean":
        samples = _load_samples(args.inp)
        flags = flag_anomalies(samples, AnomalyRules(mad_k=args.mad_k, play_cap=args.play_cap))
        review_path = args.review or args.out + ".review.json"
        flags = apply_review(flags, load_review(review_path))
        write_review(review_path, flags)
        try:
            cleaned = finalize(samples, flags)
        except UnreviewedFlags as exc:
            print(f"decwatt-pipeline: {exc}; edit {review_path}", file=sys.stderr)
            return 2
        write_jsonl(args.out, (asdict(s) for s in cleaned))
        print(
            f"kept {len(cleaned)}/{len(samples)} records, anomaly rate {anomaly_rate(samples, flags):.1%}",
            file=sys.stderr,
        )
    elif args.command == "merge":
        save_aggregates(args.out, merge_by_model(_load_samples(args.inp)))
    else:
        stats = summary_statistics(load_aggregates(args.inp))
        with open(args.out, "w") as f:
            f.write(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
