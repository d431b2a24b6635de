"""Deterministic simulated handset with a constant-current discharge model.

The simulator implements both the device probe and the decoder harness used
by :mod:`decwatt.session`, and it knows the exact power figures it was
configured with, so it doubles as the ground truth for the estimator.
"""

import json
import math
from importlib import resources
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .metrics import SECONDS_PER_HOUR, DecoderDescriptor, DeviceProfile, PowerMetrics, VideoAsset
from .probe import ProbeLost

_NOISE_BLOCK = 4096


class DeviceOff(ProbeLost):
    """The simulated battery ran empty."""


class DecoderOpenError(RuntimeError):
    """The decoder refused the bitstream."""


@dataclass(frozen=True)
class SimDecoder:
    name: str
    standard: str
    kind: str
    decode_current: float  # mA on top of the screen
    true_speed: float  # frames/s
    vendor: str = ""
    fails_to_open: bool = False
    # resolution class -> {"decode_current": .., "true_speed": ..}
    overrides: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.true_speed <= 0:
            raise ValueError(f"{self.name}: true_speed must be positive")
        for res, o in self.overrides.items():
            if o.get("true_speed", self.true_speed) <= 0:
                raise ValueError(f"{self.name}/{res}: true_speed must be positive")

    @property
    def descriptor(self) -> DecoderDescriptor:
        return DecoderDescriptor(self.name, self.standard, self.kind, self.vendor)

    def current_for(self, asset: VideoAsset) -> float:
        return self.overrides.get(asset.resolution, {}).get("decode_current", self.decode_current)

    def speed_for(self, asset: VideoAsset) -> float:
        return self.overrides.get(asset.resolution, {}).get("true_speed", self.true_speed)


@dataclass(frozen=True)
class SimConfig:
    capacity: float  # mAh
    initial_charge: float  # mAh
    screen_current: float  # mA
    decoders: Tuple[SimDecoder, ...] = ()
    noise: float = 0.0  # amplitude of uniform current jitter, mA
    seed: int = 0
    dt: float = 0.1  # s, width of a noise cell
    charge_current: float = 1500.0  # mA while a charger is attached
    charger: Tuple[Tuple[float, float], ...] = ()  # [start, end) seconds
    model: str = "SimPhone"
    manufacturer: str = "Sim"
    serial_number: str = "SIM0001"
    build_host: str = "sim-build"
    voltage: float = 3.85
    os_version: str = "11"

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if not 0 < self.initial_charge <= self.capacity:
            raise ValueError("initial_charge must be within (0, capacity]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.noise < 0:
            raise ValueError("noise amplitude must be non-negative")
        object.__setattr__(self, "decoders", tuple(self.decoders))
        object.__setattr__(self, "charger", tuple(tuple(c) for c in self.charger))

    def decoder(self, name: str) -> SimDecoder:
        for d in self.decoders:
            if d.name == name:
                return d
        raise KeyError(name)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["charger"] = [list(c) for c in self.charger]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        data["decoders"] = tuple(SimDecoder(**d) for d in data.get("decoders", ()))
        data["charger"] = tuple(tuple(c) for c in data.get("charger", ()))
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def dump(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def reference_config(name: str = "repeatability", **changes) -> SimConfig:
    """A config shipped with the package, e.g. the jittered repeatability device."""
    text = resources.files("decwatt").joinpath("data", f"{name}.json").read_text()
    return replace(SimConfig.from_dict(json.loads(text)), **changes)


@dataclass(frozen=True)
class SimState:
    time: float
    charge: float  # mAh

    def level(self, capacity: float) -> int:
        return int(math.floor(100.0 * self.charge / capacity))


class _Jitter:
    """Piecewise-constant current jitter on a fixed time grid.

    Cell ``k`` covers ``[k*dt, (k+1)*dt)``; its value only depends on the
    seed and ``k``, so splitting an interval never changes the integral.
    """

    def __init__(self, amplitude: float, seed: int, dt: float):
        self.amplitude = amplitude
        self.seed = seed
        self.dt = dt
        self._blocks: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def _block(self, b: int):
        blk = self._blocks.get(b)
        if blk is None:
            rng = np.random.default_rng([self.seed, b])
            values = self.amplitude * (2.0 * rng.random(_NOISE_BLOCK) - 1.0)
            prefix = np.concatenate(([0.0], np.cumsum(values)))
            if len(self._blocks) > 64:
                self._blocks.clear()
            blk = self._blocks[b] = (values, prefix)
        return blk

    def cell(self, k: int) -> float:
        return float(self._block(k // _NOISE_BLOCK)[0][k % _NOISE_BLOCK])

    def _cells_sum(self, k0: int, k1: int) -> float:
        """Sum of cell values for k0 <= k < k1."""
        total = 0.0
        while k0 < k1:
            b, i0 = divmod(k0, _NOISE_BLOCK)
            i1 = min(_NOISE_BLOCK, i0 + (k1 - k0))
            prefix = self._block(b)[1]
            total += prefix[i1] - prefix[i0]
            k0 += i1 - i0
        return float(total)

    def integral(self, t0: float, t1: float) -> float:
        """Integral of the jitter over [t0, t1] in mA*s."""
        if self.amplitude == 0.0 or t1 <= t0:
            return 0.0
        k0 = int(math.floor(t0 / self.dt))
        k1 = int(math.floor(t1 / self.dt))
        if k0 == k1:
            return self.cell(k0) * (t1 - t0)
        head = self.cell(k0) * ((k0 + 1) * self.dt - t0)
        tail = self.cell(k1) * (t1 - k1 * self.dt)
        return head + self._cells_sum(k0 + 1, k1) * self.dt + tail


def advance(
    config: SimConfig,
    state: SimState,
    activity_current: float,
    dt: float,
    jitter: Optional[_Jitter] = None,
    charging: bool = False,
) -> SimState:
    """Move the battery forward by ``dt`` seconds.

    ``activity_current`` is the decoder draw on top of the screen (0 when
    idle). While ``charging`` the charger current is subtracted from the
    draw. Raises :class:`DeviceOff` when the charge would go below zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    current = config.screen_current + activity_current
    if charging:
        current -= config.charge_current
    amp_seconds = current * dt
    if jitter is not None:
        amp_seconds += jitter.integral(state.time, state.time + dt)
    charge = min(config.capacity, state.charge - amp_seconds / SECONDS_PER_HOUR)
    if charge <= 0:
        raise DeviceOff(f"battery exhausted at t={state.time + dt:.3f}s")
    return SimState(state.time + dt, charge)


def ground_truth(config: SimConfig, decoder: SimDecoder, asset: VideoAsset) -> PowerMetrics:
    """Closed-form metrics the estimator should recover for this decoder."""
    i_s = config.screen_current
    i_d = decoder.current_for(asset)
    speed = decoder.speed_for(asset)
    scale = 100.0 / config.capacity
    delta_seq = (i_s + i_d) * asset.n_seq / (speed * SECONDS_PER_HOUR) * scale
    if speed >= asset.fps:
        play = (i_s + i_d * asset.fps / speed) * scale
    else:
        # decoder never idles, the screen term is already inside delta_seq
        play = delta_seq * asset.fps / asset.n_seq * SECONDS_PER_HOUR
    return PowerMetrics(
        delta_seq=delta_seq,
        speed=speed,
        delta_play=play,
        delta_decode=i_d,
        delta_screen=i_s * scale,
        realtime=speed >= asset.fps,
        suspect=i_d <= 0,
    )


class SimDevice:
    """Simulated handset exposing the probe and harness interfaces.

    Time only moves when the caller decodes frames or idles, which keeps
    every run reproducible.
    """

    def __init__(self, config: SimConfig):
        self.config = config
        self.state = SimState(0.0, config.initial_charge)
        self.jitter = _Jitter(config.noise, config.seed, config.dt) if config.noise else None
        self.transitions: List[Tuple[float, int]] = []
        self.segments: List[Tuple[float, float, float]] = []  # (start, duration, mA incl. screen)
        self.record_segments = False
        self._decoder: Optional[SimDecoder] = None
        self._asset: Optional[VideoAsset] = None
        self._frames = 0
        self._frame_time = 0.0
        self._decode_current = 0.0

    # -- probe --------------------------------------------------------
    def level(self) -> int:
        return self.state.level(self.config.capacity)

    def charging(self) -> bool:
        t = self.state.time
        return any(a <= t < b for a, b in self.config.charger)

    def time(self) -> float:
        return self.state.time

    def profile(self) -> DeviceProfile:
        c = self.config
        return DeviceProfile(
            model=c.model,
            manufacturer=c.manufacturer,
            serial_number=c.serial_number,
            build_host=c.build_host,
            battery_capacity=c.capacity,
            voltage=c.voltage,
            battery_level=self.level(),
            os_version=c.os_version,
            charging=self.charging(),
        )

    def idle(self, seconds: float) -> None:
        """Screen on, nothing decoding."""
        self._run(0.0, seconds)

    def recharge(self, level: float) -> None:
        """Operator plugs in and unplugs at ``level`` percent, instantly."""
        self.state = replace(self.state, charge=self.config.capacity * level / 100.0)

    # -- harness ------------------------------------------------------
    def decoders(self) -> List[DecoderDescriptor]:
        return [d.descriptor for d in self.config.decoders]

    def open(self, decoder: DecoderDescriptor, asset: VideoAsset) -> None:
        sim = self.config.decoder(decoder.name)
        if sim.fails_to_open:
            raise DecoderOpenError(f"{decoder.name} cannot decode {asset.name}")
        self._decoder = sim
        self._asset = asset
        self._frames = 0
        self._frame_time = 1.0 / sim.speed_for(asset)
        self._decode_current = sim.current_for(asset)

    def close(self) -> None:
        self._decoder = None
        self._asset = None

    def reset(self) -> None:
        self._frames = 0

    def position(self) -> Tuple[int, int]:
        """(iteration, frame index) of the next frame to decode."""
        return divmod(self._frames, self._asset.n_seq)

    def decode_next_frame(self) -> Tuple[int, int]:
        return self.decode_frames(1)

    def decode_frames(self, count: int) -> Tuple[int, int]:
        if self._decoder is None:
            raise RuntimeError("no decoder open")
        self._run(self._decode_current, count * self._frame_time)
        self._frames += count
        return self.position()

    # -- internals ----------------------------------------------------
    def _run(self, activity_current: float, seconds: float) -> None:
        if seconds <= 0:
            return
        end = self.state.time + seconds
        while self.state.time < end:
            t = self.state.time
            # split at charger boundaries
            stop = end
            for a, b in self.config.charger:
                for edge in (a, b):
                    if t < edge < stop:
                        stop = edge
            self._step(activity_current, stop - t, self.charging())
            # t + (stop - t) can miss stop by one ulp
            self.state = replace(self.state, time=stop)

    def _step(self, activity_current: float, dt: float, charging: bool) -> None:
        before = self.state
        level0 = self.level()
        try:
            self.state = advance(self.config, before, activity_current, dt, self.jitter, charging)
        except DeviceOff:
            self.state = SimState(before.time + dt, 0.0)
            raise
        if self.record_segments:
            self.segments.append((before.time, dt, self.config.screen_current + activity_current))
        level1 = self.level()
        if level1 != level0:
            self._locate_transitions(before, level0, level1)

    def _locate_transitions(self, before: SimState, level0: int, level1: int) -> None:
        """Linear interpolation of the crossing times inside the last step."""
        cap = self.config.capacity
        q0, q1 = before.charge, self.state.charge
        if level1 < level0:
            crossings = [(lvl, cap * (lvl + 1) / 100.0) for lvl in range(level0 - 1, level1 - 1, -1)]
        else:
            crossings = [(lvl, cap * lvl / 100.0) for lvl in range(level0 + 1, level1 + 1)]
        for lvl, boundary in crossings:
            frac = (q0 - boundary) / (q0 - q1)
            t = before.time + min(1.0, max(0.0, frac)) * (self.state.time - before.time)
            self.transitions.append((t, lvl))
