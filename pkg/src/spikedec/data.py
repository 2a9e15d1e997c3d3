"""Recordings: binary/CSV ingestion, synthetic reaching data, splits, oracles.

A :class:`Recording` pairs time-binned spike counts (T x C, one byte per
count) with 2-D cursor velocities (T x 2, stored per bin) at 4 ms bins.

NDR1 container (little-endian throughout): magic ``NDR1``, u32 channel
count, u32 bin width in microseconds, u64 bin count T, then T*C unsigned
bytes of counts (time-major), then T*2 float32 velocities.  The CSV
alternative has header ``t,ch0..chN,vx,vy`` and one row per bin.

The synthetic generator mimics target-locked reaching: targets appear
uniformly in the workspace, the cursor moves along a minimum-jerk velocity
bell, and each channel fires Poisson spikes under a cosine tuning curve.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .bench import r2_score
from .errors import ConfigError, ParseError
from .layers import lerp_upsample
from .numerics import Rng

__all__ = ["Recording", "SplitSpec", "SynthParams", "load_ndr", "save_ndr",
           "load_csv", "save_csv", "synth_reaching", "split", "windows",
           "interp_oracle_r2", "population_vector_r2", "preferred_directions"]

MAGIC = b"NDR1"
_HEADER = struct.Struct("<4sIIQ")
_MAX_CELLS = 1 << 40  # sanity bound on T*C


@dataclass
class Recording:
    """Immutable-by-convention spike/velocity pair; velocities are per bin."""
    spikes: np.ndarray      # (T, C) uint8
    velocities: np.ndarray  # (T, 2) float64 holding float32-representable values
    bin_us: int = 4000

    def __post_init__(self):
        self.spikes = np.asarray(self.spikes, dtype=np.uint8)
        self.velocities = np.asarray(self.velocities, dtype=np.float64)
        if self.spikes.ndim != 2 or self.velocities.ndim != 2 or self.velocities.shape[1] != 2:
            raise ConfigError(
                f"bad recording shapes: spikes {self.spikes.shape}, velocities {self.velocities.shape}")
        if self.spikes.shape[0] != self.velocities.shape[0]:
            raise ConfigError(
                f"spikes T={self.spikes.shape[0]} != velocities T={self.velocities.shape[0]}")
        if self.bin_us <= 0:
            raise ConfigError("bin_us must be positive")

    @property
    def channels(self):
        return self.spikes.shape[1]

    @property
    def duration_s(self):
        return self.spikes.shape[0] * self.bin_us / 1e6

    def slice(self, lo, hi):
        return Recording(self.spikes[lo:hi].copy(), self.velocities[lo:hi].copy(), self.bin_us)

    def __eq__(self, other):
        return (isinstance(other, Recording) and self.bin_us == other.bin_us
                and np.array_equal(self.spikes, other.spikes)
                and np.array_equal(self.velocities, other.velocities))


def save_ndr(rec: Recording, path: str):
    T, C = rec.spikes.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, C, rec.bin_us, T))
        f.write(rec.spikes.tobytes())
        f.write(rec.velocities.astype("<f4").tobytes())


def load_ndr(path: str) -> Recording:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise ParseError(f"file too short for header: {len(raw)} bytes")
    magic, C, bin_us, T = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if T * C > _MAX_CELLS:
        raise ParseError(f"T*C overflow: {T} x {C} exceeds sane bounds")
    expect = _HEADER.size + T * C + T * 2 * 4
    if len(raw) != expect:
        raise ParseError(f"truncated payload: expected {expect} bytes, found {len(raw)}")
    spikes = np.frombuffer(raw, dtype=np.uint8, count=T * C, offset=_HEADER.size) \
        .reshape(T, C)
    vel = np.frombuffer(raw, dtype="<f4", count=T * 2, offset=_HEADER.size + T * C) \
        .reshape(T, 2).astype(np.float64)
    return Recording(spikes.copy(), vel, bin_us=bin_us)


def save_csv(rec: Recording, path: str):
    T, C = rec.spikes.shape
    with open(path, "w", encoding="utf-8") as f:
        f.write("t," + ",".join(f"ch{i}" for i in range(C)) + ",vx,vy\n")
        for t in range(T):
            counts = ",".join(str(int(v)) for v in rec.spikes[t])
            f.write(f"{t},{counts},{float(rec.velocities[t, 0])!r},{float(rec.velocities[t, 1])!r}\n")


def load_csv(path: str) -> Recording:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        if len(header) < 4 or header[0] != "t" or header[-2:] != ["vx", "vy"]:
            raise ParseError(f"bad CSV header: {header[:5]}...")
        C = len(header) - 3
        spikes, vels = [], []
        for lineno, line in enumerate(f, start=2):
            cells = line.strip().split(",")
            if len(cells) != C + 3:
                raise ParseError(f"line {lineno}: expected {C + 3} cells, found {len(cells)}")
            spikes.append([int(v) for v in cells[1:1 + C]])
            vels.append([float(cells[-2]), float(cells[-1])])
    if not spikes:
        raise ParseError("CSV holds no rows")
    return Recording(np.array(spikes, dtype=np.uint8), np.array(vels))


@dataclass
class SynthParams:
    """Cosine-tuned Poisson reaching generator settings.

    Each trial is a reaction-time dwell (cursor at rest after the new target
    appears) followed by a minimum-jerk reach; primate reaction times sit
    well above 100 ms, so the dwell keeps the velocity traces bursty the way
    real target-locked reaching is.
    """
    base_rate_hz: float = 10.0
    modulation_hz: float = 10.0     # Hz gained per unit/s of preferred-direction velocity
    workspace: float = 1.0          # targets drawn uniformly in [-w, w]^2
    min_duration_s: float = 0.3
    max_duration_s: float = 1.1
    dwell_min_s: float = 0.15
    dwell_max_s: float = 0.35
    bin_us: int = 4000


def preferred_directions(channels: int) -> np.ndarray:
    """Evenly spaced tuning directions."""
    return 2.0 * np.pi * np.arange(channels) / channels


def synth_reaching(rng: Rng, seconds: float, channels: int,
                   params: SynthParams = None) -> Recording:
    """Deterministic synthetic primate-style reaching recording.

    Successive targets appear uniformly in the workspace; the cursor moves
    with a minimum-jerk velocity bell; each channel fires per-bin Poisson
    counts with rate max(0, b + m*(v . d_i)), clamped at 255 per bin.
    """
    if seconds <= 0:
        raise ConfigError("seconds must be > 0")
    if channels < 2:
        raise ConfigError("need at least 2 channels")
    p = params or SynthParams()
    dt = p.bin_us / 1e6
    T = int(round(seconds / dt))

    vel = np.zeros((T, 2))  # units/s while building
    pos = np.zeros(2)
    t = 0
    while t < T:
        target = rng.uniform(-p.workspace, p.workspace, size=2)
        dwell = rng.uniform(p.dwell_min_s, p.dwell_max_s)
        t += int(round(dwell / dt))  # reaction time: velocity stays zero
        if t >= T:
            break
        delta = target - pos
        dist = float(np.hypot(*delta))
        dur = float(np.clip(0.25 + 0.4 * dist, p.min_duration_s, p.max_duration_s))
        n = max(2, int(round(dur / dt)))
        tau = (np.arange(n) + 0.5) / n
        bell = 30.0 * tau ** 2 - 60.0 * tau ** 3 + 30.0 * tau ** 4  # integrates to 1
        seg = min(n, T - t)
        vel[t:t + seg] = (delta / (n * dt))[None, :] * bell[:seg, None]
        pos = target
        t += n

    theta = preferred_directions(channels)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=0)  # (2, C)
    counts = np.empty((T, channels), dtype=np.uint8)
    chunk = 65536
    for lo in range(0, T, chunk):
        v = vel[lo:lo + chunk]
        rates = np.maximum(0.0, p.base_rate_hz + p.modulation_hz * (v @ dirs))
        c = rng.poisson(rates * dt)
        counts[lo:lo + chunk] = np.minimum(c, 255).astype(np.uint8)

    vel_per_bin = (vel * dt).astype(np.float32).astype(np.float64)  # exact f32 values
    return Recording(counts, vel_per_bin, bin_us=p.bin_us)


@dataclass
class SplitSpec:
    """Contiguous, ordered (train, val, test) fractions summing to 1."""
    fractions: tuple = (0.5, 0.25, 0.25)

    def __post_init__(self):
        fr = tuple(float(v) for v in self.fractions)
        if len(fr) != 3 or any(v < 0 for v in fr):
            raise ConfigError(f"fractions must be three non-negative values, got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1, got {sum(fr)}")
        self.fractions = fr


def split(rec: Recording, spec: SplitSpec = None, window: int = 1024):
    """Contiguous train/val/test partition, each truncated to whole windows.

    Parts are carved in order from the start, so concatenating them
    reproduces a prefix of the original recording.
    """
    spec = spec or SplitSpec()
    T = rec.spikes.shape[0]
    parts = []
    offset = 0
    for name, frac in zip(("train", "val", "test"), spec.fractions):
        length = (int(frac * T) // window) * window
        if length < window:
            raise ConfigError(
                f"{name} part would hold {int(frac * T)} bins (< one {window}-bin window)")
        parts.append(rec.slice(offset, offset + length))
        offset += length
    return tuple(parts)


def windows(rec: Recording, window: int = 1024):
    """Non-overlapping (n, C, window) inputs and (n, window, 2) targets."""
    T = rec.spikes.shape[0]
    n = T // window
    if n < 1:
        raise ConfigError(f"recording too short to window: {T} < {window}")
    x = rec.spikes[:n * window].astype(np.float64) \
        .reshape(n, window, rec.channels).transpose(0, 2, 1)
    y = rec.velocities[:n * window].reshape(n, window, 2).copy()
    return np.ascontiguousarray(x), y


def interp_oracle_r2(velocities: np.ndarray, stride: int) -> float:
    """R^2 of keeping every stride-th velocity and linearly interpolating back.

    Keypoints sit at 0, s, 2s, ..., T-s plus the final sample (endpoints are
    kept), so the reconstruction is piecewise linear over the whole signal
    and stride=1 reproduces it exactly (R^2 == 1.0).
    """
    v = np.asarray(velocities, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != 2:
        raise ConfigError(f"velocities must be (T, 2), got {v.shape}")
    T = v.shape[0]
    if stride < 1 or T % stride != 0 or T < 2 * stride:
        raise ConfigError(f"need T multiple of stride and T >= 2*stride (T={T}, s={stride})")
    kp = v[::stride]
    recon = np.empty_like(v)
    recon[:T - stride] = lerp_upsample(kp, stride)
    recon[T - stride] = kp[-1]
    if stride > 1:  # final segment: T-s .. T-1 spans stride-1 steps
        frac = (np.arange(1, stride) / (stride - 1))[:, None]
        recon[T - stride + 1:] = kp[-1] + frac * (v[T - 1] - kp[-1])
    return r2_score(recon, v)


def population_vector_r2(rec: Recording, smooth_bins: int = 51,
                         train_frac: float = 0.5) -> float:
    """Closed-form linear decode used as an oracle for the synthetic generator.

    Smooths counts with a centred boxcar, projects them onto the evenly
    spaced preferred directions, fits an affine map to the velocities on the
    leading fraction by least squares, and scores R^2 on the held-out rest.
    """
    T, C = rec.spikes.shape
    counts = rec.spikes.astype(np.float64)
    half = smooth_bins // 2
    cs = np.vstack([np.zeros((1, C)), np.cumsum(counts, axis=0)])
    lo = np.clip(np.arange(T) - half, 0, T)
    hi = np.clip(np.arange(T) + half + 1, 0, T)
    smoothed = (cs[hi] - cs[lo]) / (hi - lo)[:, None]

    theta = preferred_directions(C)
    proj = smoothed @ np.stack([np.cos(theta), np.sin(theta)], axis=1)  # (T, 2)
    X = np.hstack([proj, np.ones((T, 1))])
    n_train = int(T * train_frac)
    coef, *_ = np.linalg.lstsq(X[:n_train], rec.velocities[:n_train], rcond=None)
    pred = X[n_train:] @ coef
    return r2_score(pred, rec.velocities[n_train:])
