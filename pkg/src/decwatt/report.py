"""Ranking tables and static charts from per-model aggregates.

Every chart is written next to a CSV table; numbers are formatted once by
:func:`fmt` and reused verbatim in both files.
"""

import argparse
import csv
import difflib
import io
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

from .pipeline import RESOLUTIONS, ModelAggregate, best_cell, load_aggregates

METRICS = {"play": ("play", "Δplay, %/h"), "decode": ("decode", "Δdecode, mA")}
MARKER_SIZE = {"sd": 9, "hd": 13, "fhd": 18}


class ModelNotFound(KeyError):
    def __init__(self, name: str, suggestions: List[str]):
        hint = f"; did you mean {', '.join(suggestions)}?" if suggestions else ""
        super().__init__(f"unknown model {name!r}{hint}")
        self.name = name
        self.suggestions = suggestions

    def __str__(self):
        return self.args[0]


def fmt(x: float) -> str:
    return f"{x:.4f}"


@dataclass(frozen=True)
class RankingRow:
    rank: int
    model: str
    decoder: str
    resolution: str
    value: float
    std: float
    count: int
    vendor: str = ""


def top_ranking(aggregates: Sequence[ModelAggregate], metric: str, resolution: str, n: int = 30) -> List[RankingRow]:
    """Best decoder of each model at ``resolution``, lowest metric first."""
    if n < 1:
        raise ValueError("n must be at least 1")
    field = METRICS[metric][0]
    best = []
    for agg in aggregates:
        cell = best_cell([c for c in agg.cells.values() if c.resolution == resolution], field)
        if cell is not None:
            best.append((agg.model, cell))
    best.sort(key=lambda mc: (getattr(mc[1], f"{field}_mean"), -mc[1].speed_mean, mc[0], mc[1].decoder))
    return [
        RankingRow(
            rank=i + 1,
            model=model,
            decoder=c.decoder,
            resolution=resolution,
            value=getattr(c, f"{field}_mean"),
            std=getattr(c, f"{field}_std"),
            count=c.count,
            vendor=c.vendor,
        )
        for i, (model, c) in enumerate(best[:n])
    ]


def find_model(aggregates: Sequence[ModelAggregate], name: str) -> ModelAggregate:
    for agg in aggregates:
        if agg.model == name:
            return agg
    names = [a.model for a in aggregates]
    suggestions = difflib.get_close_matches(name, names, n=3, cutoff=0.5)
    raise ModelNotFound(name, suggestions)


def model_rating(aggregates: Sequence[ModelAggregate], model: str) -> List[dict]:
    """One row per decoder with Δplay (mean, std, realtime) per resolution.

    Untested resolutions stay ``None`` rather than 0.
    """
    agg = find_model(aggregates, model)
    decoders = sorted({c.decoder for c in agg.cells.values()})
    rows = []
    for name in decoders:
        row = {"decoder": name}
        for res in RESOLUTIONS:
            c = agg.cells.get((name, res))
            row[res] = None if c is None else {
                "play_mean": c.play_mean,
                "play_std": c.play_std,
                "speed_mean": c.speed_mean,
                "non_realtime": c.non_realtime,
                "count": c.count,
            }
        first = next(c for c in agg.cells.values() if c.decoder == name)
        row.update(standard=first.standard, kind=first.kind, vendor=first.vendor)
        rows.append(row)
    # best overall decoder first, by its lowest tested Δplay
    rows.sort(key=lambda r: (min(r[res]["play_mean"] for res in RESOLUTIONS if r[res]), r["decoder"]))
    return rows


@dataclass(frozen=True)
class ScatterPoint:
    decoder: str
    vendor: str
    resolution: str
    speed: float
    play: float
    play_std: float
    fps: float

    @property
    def label(self) -> str:
        return (self.vendor or self.decoder)[:1].upper()

    @property
    def non_realtime(self) -> bool:
        return self.speed < self.fps


@dataclass(frozen=True)
class Scatter:
    model: str
    points: List[ScatterPoint]
    fps: float
    x_range: tuple
    y_range: tuple


def _padded(lo: float, hi: float, margin: float = 0.05) -> tuple:
    span = hi - lo
    pad = span * margin if span > 0 else max(abs(hi) * margin, 1.0)
    return (lo - pad, hi + pad)


def power_speed_scatter(aggregates: Sequence[ModelAggregate], model: str, fps: Optional[float] = None) -> Scatter:
    """Δplay against decode speed, one point per decoder and resolution."""
    agg = find_model(aggregates, model)
    points = [
        ScatterPoint(c.decoder, c.vendor, c.resolution, c.speed_mean, c.play_mean, c.play_std, c.fps)
        for _, c in sorted(agg.cells.items(), key=lambda kv: (RESOLUTIONS.index(kv[1].resolution), kv[0]))
    ]
    if fps is None:
        fps = points[0].fps if points else 25.0
    if points:
        xs = [p.speed for p in points] + [fps]
        ys = [p.play for p in points]
        x_range = _padded(min(xs), max(xs))
        y_range = _padded(min(ys), max(ys))
    else:
        x_range, y_range = (0.0, 2 * fps), (0.0, 1.0)
    return Scatter(model, points, fps, x_range, y_range)


# -- writers --------------------------------------------------------------


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerows(rows)
    return buf.getvalue()


def ranking_csv(rows: Sequence[RankingRow]) -> str:
    table = [("rank", "model", "decoder", "resolution", "value", "std", "count")]
    table += [(r.rank, r.model, r.decoder, r.resolution, fmt(r.value), fmt(r.std), r.count) for r in rows]
    return _csv(table)


def rating_csv(rows: Sequence[dict]) -> str:
    header = ["decoder", "standard", "kind", "vendor"]
    for res in RESOLUTIONS:
        header += [f"{res}_play", f"{res}_std", f"{res}_speed", f"{res}_realtime"]
    table = [header]
    for r in rows:
        line = [r["decoder"], r["standard"], r["kind"], r["vendor"]]
        for res in RESOLUTIONS:
            c = r[res]
            if c is None:
                line += ["missing", "", "", ""]
            else:
                line += [fmt(c["play_mean"]), fmt(c["play_std"]), fmt(c["speed_mean"]), "no" if c["non_realtime"] else "yes"]
        table.append(line)
    return _csv(table)


def scatter_csv(sc: Scatter) -> str:
    table = [("decoder", "vendor", "resolution", "speed", "play", "play_std", "realtime")]
    table += [
        (p.decoder, p.vendor, p.resolution, fmt(p.speed), fmt(p.play), fmt(p.play_std), "no" if p.non_realtime else "yes")
        for p in sc.points
    ]
    table.append(("fps-reference", "", "", fmt(sc.fps), "", "", ""))
    return _csv(table)


def _svg(width: int, height: int, body: List[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f"<title>{escape(title)}</title>", *body, "</svg>", ""])


def ranking_svg(rows: Sequence[RankingRow], metric: str, title: str = "") -> str:
    label = METRICS[metric][1]
    left, right, top, bar_h, gap = 260, 40, 40, 14, 6
    plot_w = 420
    height = top + len(rows) * (bar_h + gap) + 40
    width = left + plot_w + right
    vmax = max((r.value + r.std for r in rows), default=1.0) or 1.0
    scale = plot_w / (vmax * 1.05)
    body = [f'<text x="{left}" y="20" font-size="13">{escape(title or label)}</text>']
    for i, r in enumerate(rows):
        y = top + i * (bar_h + gap)
        w = r.value * scale
        body.append(
            f'<g class="row" data-rank="{r.rank}" data-value={quoteattr(fmt(r.value))} data-std={quoteattr(fmt(r.std))}>'
        )
        body.append(
            f'<text x="{left - 6}" y="{y + bar_h - 3}" text-anchor="end">'
            f"{escape(f'{r.rank}. {r.model} / {r.decoder}')}</text>"
        )
        body.append(f'<rect x="{left}" y="{y}" width="{w:.2f}" height="{bar_h}" fill="#4C72B0"/>')
        if r.count > 1 and r.std > 0:
            x0, x1 = left + (r.value - r.std) * scale, left + (r.value + r.std) * scale
            cy = y + bar_h / 2
            body.append(f'<line x1="{x0:.2f}" y1="{cy:.2f}" x2="{x1:.2f}" y2="{cy:.2f}" stroke="#000"/>')
        body.append(f'<text x="{left + w + 4:.2f}" y="{y + bar_h - 3}">{fmt(r.value)}</text>')
        body.append("</g>")
    axis_y = top + len(rows) * (bar_h + gap) + 4
    body.append(f'<line x1="{left}" y1="{axis_y}" x2="{left + plot_w}" y2="{axis_y}" stroke="#000"/>')
    body.append(f'<text x="{left + plot_w / 2:.1f}" y="{axis_y + 24}" text-anchor="middle">{escape(label)}</text>')
    return _svg(width, height, body, title or label)


def scatter_svg(sc: Scatter) -> str:
    left, top, plot_w, plot_h = 60, 30, 480, 320
    width, height = left + plot_w + 30, top + plot_h + 50
    (x0, x1), (y0, y1) = sc.x_range, sc.y_range

    def px(x):
        return left + (x - x0) / (x1 - x0) * plot_w

    def py(y):
        return top + plot_h - (y - y0) / (y1 - y0) * plot_h

    title = f"{sc.model}: Δplay vs decode speed"
    body = [
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#000"/>',
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" text-anchor="middle">decode speed, fps</text>',
        f'<text x="14" y="{top + plot_h / 2:.1f}" transform="rotate(-90 14 {top + plot_h / 2:.1f})" '
        f'text-anchor="middle">Δplay, %/h</text>',
    ]
    rx = px(sc.fps)
    body.append(
        f'<line class="fps-reference" data-fps={quoteattr(fmt(sc.fps))} x1="{rx:.2f}" y1="{top}" '
        f'x2="{rx:.2f}" y2="{top + plot_h}" stroke="#C44E52" stroke-dasharray="4 3"/>'
    )
    for p in sc.points:
        color = "#C44E52" if p.non_realtime else "#4C72B0"
        body.append(
            f'<text class="point" data-decoder={quoteattr(p.decoder)} data-resolution="{p.resolution}" '
            f'data-speed={quoteattr(fmt(p.speed))} data-play={quoteattr(fmt(p.play))} '
            f'x="{px(p.speed):.2f}" y="{py(p.play):.2f}" font-size="{MARKER_SIZE.get(p.resolution, 11)}" '
            f'text-anchor="middle" fill="{color}">{escape(p.label)}</text>'
        )
    for v, anchor in ((x0, "start"), (x1, "end")):
        body.append(f'<text x="{px(v):.2f}" y="{top + plot_h + 14}" text-anchor="{anchor}">{v:.1f}</text>')
    for v in (y0, y1):
        body.append(f'<text x="{left - 4}" y="{py(v):.2f}" text-anchor="end">{v:.2f}</text>')
    return _svg(width, height, body, title)


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as f:
        f.write(text)


def _slug(s: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in s).strip("_")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="decwatt-report", description="Rankings and charts from aggregates.")
    p.add_argument("--in", dest="inp", default="aggregates.jsonl", help="aggregates file from decwatt-pipeline merge")
    sub = p.add_subparsers(dest="command", required=True)
    top = sub.add_parser("top")
    top.add_argument("--metric", choices=tuple(METRICS), default="play")
    top.add_argument("--res", choices=RESOLUTIONS, default="sd")
    top.add_argument("--n", type=int, default=30)
    top.add_argument("--out", default=".")
    model = sub.add_parser("model")
    model.add_argument("--name", required=True)
    model.add_argument("--out", default=".")
    scatter = sub.add_parser("scatter")
    scatter.add_argument("--model", required=True)
    scatter.add_argument("--fps", type=float)
    scatter.add_argument("--out", default=".")
    args = p.parse_args(argv)

    aggregates = load_aggregates(args.inp)
    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "top":
            rows = top_ranking(aggregates, args.metric, args.res, args.n)
            stem = os.path.join(args.out, f"top_{args.metric}_{args.res}")
            _write(stem + ".csv", ranking_csv(rows))
            title = f"Top {args.n} decoders, {METRICS[args.metric][1]}, {args.res.upper()}"
            _write(stem + ".svg", ranking_svg(rows, args.metric, title))
        elif args.command == "model":
            rows = model_rating(aggregates, args.name)
            stem = os.path.join(args.out, f"model_{_slug(args.name)}")
            _write(stem + ".csv", rating_csv(rows))
            ranked = [
                RankingRow(i + 1, args.name, r["decoder"], res, r[res]["play_mean"], r[res]["play_std"], r[res]["count"])
                for i, (r, res) in enumerate(
                    (r, res) for r in rows for res in RESOLUTIONS if r[res] is not None
                )
            ]
            _write(stem + ".svg", ranking_svg(ranked, "play", f"{args.name}: Δplay per decoder"))
        else:
            sc = power_speed_scatter(aggregates, args.model, args.fps)
            stem = os.path.join(args.out, f"scatter_{_slug(args.model)}")
            _write(stem + ".csv", scatter_csv(sc))
            _write(stem + ".svg", scatter_svg(sc))
    except ModelNotFound as exc:
        print(f"decwatt-report: {exc}", file=sys.stderr)
        return 1
    print(stem + ".csv")
    print(stem + ".svg")
    return 0


if __name__ == "__main__":
    sys.exit(main())
