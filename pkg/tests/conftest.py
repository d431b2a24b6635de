import pytest

from decwatt.metrics import VideoAsset
from decwatt.sim import SimConfig, SimDecoder


def make_assets(standard="H.264", n_seq=500, fps=25.0):
    return [
        VideoAsset("shakewalk", 640, 480, fps, n_seq, standard, 0.058, 124.76, 2560),
        VideoAsset("tractor", 1280, 720, fps, n_seq, standard, 0.071, 100.57, 5120),
        VideoAsset("zombie", 1920, 1080, fps, n_seq, standard, 0.073, 104.66, 12288),
    ]


def make_config(decoders=None, capacity=4000.0, level=90.0, screen=80.0, **kw):
    if decoders is None:
        decoders = [
            SimDecoder("c2.hw.avc", "H.264", "hardware", 300.0, 60.0, vendor="Qualcomm"),
            SimDecoder("c2.sw.avc", "H.264", "software", 450.0, 120.0, vendor="Google"),
        ]
    return SimConfig(
        capacity=capacity,
        initial_charge=capacity * level / 100.0,
        screen_current=screen,
        decoders=tuple(decoders),
        **kw,
    )


@pytest.fixture
def assets():
    return make_assets()


@pytest.fixture
def sim_config():
    return make_config()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
