"""The three test sequences and asset-file loading."""

import json
import os
from dataclasses import asdict
from typing import List

from .metrics import VideoAsset

# name, width, height, SI_mean, TI_mean, bitrate kbit/s
SEQUENCES = (
    ("Shakewalk", 640, 480, 0.058, 124.76, 2560),
    ("Tractor", 1280, 720, 0.071, 100.57, 5120),
    ("Zombie", 1920, 1080, 0.073, 104.66, 12288),
)
PLAYBACK_FPS = 25.0


def sequence_assets(standard: str, n_seq: int = 250) -> List[VideoAsset]:
    """SD, HD and Full HD sequences encoded with ``standard`` at 25 fps.

    Frame counts are not fixed by the source material; 250 frames is ten
    seconds of playback.
    """
    return [
        VideoAsset(
            name=f"{name.lower()}_{standard.lower().replace('.', '').replace('-', '')}",
            width=w,
            height=h,
            fps=PLAYBACK_FPS,
            n_seq=n_seq,
            standard=standard,
            si_mean=si,
            ti_mean=ti,
            bitrate=rate,
        )
        for name, w, h, si, ti, rate in SEQUENCES
    ]


def load_assets(path) -> List[VideoAsset]:
    """Read assets from a JSON file (object or list) or a directory of them."""
    if os.path.isdir(path):
        files = sorted(os.path.join(path, f) for f in os.listdir(path) if f.endswith(".json"))
    else:
        files = [path]
    assets = []
    for fn in files:
        with open(fn) as f:
            data = json.load(f)
        for item in data if isinstance(data, list) else [data]:
            assets.append(VideoAsset(**item))
    if not assets:
        raise ValueError(f"no assets found in {path}")
    return assets


def asset_dicts(assets) -> List[dict]:
    return [asdict(a) for a in assets]
