"""WAV ingestion, resampling, duration fixing and synthetic corpora."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ser.rng import Rng, derive_seed

DEFAULT_SR = 22050
DEFAULT_DURATION = 4.0

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    """Base class for WAV parsing failures; ``chunk`` names the offending chunk."""

    def __init__(self, chunk: str, message: str):
        super().__init__(f"{chunk}: {message}")
        self.chunk = chunk


class MalformedHeader(WavError):
    pass


class UnsupportedFormat(WavError):
    pass


class TruncatedChunk(WavError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s = np.clip(s, -1.0, 1.0)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


def parse_wav(data: bytes, source: str | None = None) -> AudioClip:
    """Decode a RIFF/WAVE byte string (PCM16 or float32, mono or stereo)."""
    if len(data) < 12:
        raise MalformedHeader("RIFF", "file shorter than the RIFF header")
    riff, _, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise MalformedHeader("RIFF", "missing RIFF/WAVE signature")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        name = cid.decode("latin-1")
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedHeader(name, "fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 40:
                    raise MalformedHeader(name, "extensible fmt chunk too short")
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise TruncatedChunk(name, f"declares {size} bytes, {len(body)} present")
            payload = body
            break
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise MalformedHeader("fmt ", "no fmt chunk before data")
    if payload is None:
        raise TruncatedChunk("data", "no data chunk found")

    tag, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormat("fmt ", f"{channels} channels")
    if rate <= 0:
        raise MalformedHeader("fmt ", "sample rate is zero")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormat("fmt ", f"format tag {tag:#06x} with {bits} bits")

    frame = dtype.itemsize * channels
    n_frames = len(payload) // frame
    raw = np.frombuffer(payload[: n_frames * frame], dtype=dtype).astype(np.float64)
    raw = raw.reshape(n_frames, channels).mean(axis=1) * scale
    if not np.all(np.isfinite(raw)):
        raise UnsupportedFormat("data", "non-finite float samples")
    return AudioClip(raw, int(rate), source)


def write_wav(clip: AudioClip, float32: bool = False) -> bytes:
    """Encode a clip as mono PCM16 (default) or IEEE float32 WAV."""
    if float32:
        body = np.asarray(clip.samples, dtype="<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        q = np.clip(np.round(clip.samples * 32768.0), -32768, 32767)
        body = q.astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate, clip.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_wav(path: str | Path) -> AudioClip:
    return parse_wav(Path(path).read_bytes(), source=str(path))


def resample(clip: AudioClip, target_sr: int) -> AudioClip:
    """Linear-interpolation resampling with end-point aligned index mapping."""
    if target_sr <= 0:
        raise ValueError("target_sr must be positive")
    if target_sr == clip.sample_rate:
        return clip
    n = len(clip.samples)
    m = int(round(n * target_sr / clip.sample_rate))
    if n == 0 or m == 0:
        return AudioClip(np.zeros(m), target_sr, clip.source)
    if m == 1 or n == 1:
        return AudioClip(np.full(m, clip.samples[0]), target_sr, clip.source)
    pos = np.arange(m) * ((n - 1) / (m - 1))
    out = np.interp(pos, np.arange(n), clip.samples)
    return AudioClip(out, target_sr, clip.source)


def fix_duration(clip: AudioClip, seconds: float) -> AudioClip:
    """Center-crop or symmetrically zero-pad to exactly round(seconds * sr) samples."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    target = int(round(seconds * clip.sample_rate))
    s = clip.samples
    if len(s) >= target:
        start = (len(s) - target) // 2
        out = s[start : start + target]
    else:
        left = (target - len(s)) // 2
        out = np.zeros(target)
        out[left : left + len(s)] = s
    return AudioClip(out, clip.sample_rate, clip.source)


# --- synthetic corpora ------------------------------------------------------

# (carrier Hz, AM rate Hz, pitch slope Hz/s). Classes 1 and 2 differ only in the
# sign of the slope; classes 6 and 7 likewise.
DEFAULT_CLASS_PARAMS = [
    (300.0, 3.0, 0.0),
    (600.0, 3.0, 100.0),
    (600.0, 3.0, -100.0),
    (1200.0, 7.0, 0.0),
    (450.0, 6.0, 0.0),
    (900.0, 2.0, 0.0),
    (1600.0, 4.0, 150.0),
    (1600.0, 4.0, -150.0),
]


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 4
    per_class: int = 50
    duration_s: float = DEFAULT_DURATION
    seed: int = 0
    class_params: tuple = ()
    noise_level: float = 0.05
    sample_rate: int = DEFAULT_SR
    jitter: float = 0.03
    am_depth: float = 0.8
    carrier_jitter: float | None = None  # defaults to ``jitter``

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if not self.class_params:
            if self.n_classes > len(DEFAULT_CLASS_PARAMS):
                raise ValueError(f"at most {len(DEFAULT_CLASS_PARAMS)} default classes")
            object.__setattr__(self, "class_params", tuple(DEFAULT_CLASS_PARAMS[: self.n_classes]))
        params = tuple(tuple(float(v) for v in p) for p in self.class_params)
        if len(params) != self.n_classes:
            raise ValueError("class_params length must equal n_classes")
        if len(set(params)) != len(params):
            raise ValueError("class parameter tuples must be pairwise distinct")
        object.__setattr__(self, "class_params", params)


def synth_clip(spec: SynthSpec, label: int, index: int) -> AudioClip:
    """One amplitude-modulated chirp for class ``label``.

    The envelope and the sweep are both centered on the clip midpoint, so a
    clip with slope -s is statistically the time reversal of one with +s.
    """
    carrier, am_rate, slope = spec.class_params[label]
    rng = Rng(derive_seed(spec.seed, "synth", label, index))
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    t = np.arange(n) / sr - spec.duration_s / 2
    cj = spec.jitter if spec.carrier_jitter is None else spec.carrier_jitter
    f0 = carrier * (1.0 + cj * rng.uniform(-1.0, 1.0))
    am = am_rate * (1.0 + spec.jitter * rng.uniform(-1.0, 1.0))
    gain = 0.5 * (1.0 + 0.2 * rng.uniform(-1.0, 1.0))
    phase = rng.uniform(0.0, 2 * np.pi)
    env = 0.5 * (1.0 + spec.am_depth * np.cos(2 * np.pi * am * t))
    tone = np.sin(2 * np.pi * (f0 * t + 0.5 * slope * t * t) + phase)
    x = gain * env * tone
    if spec.noise_level > 0:
        x = x + spec.noise_level * rng.normal(size=n)
    return AudioClip(np.clip(x, -1.0, 1.0), sr)


def synth_corpus(spec: SynthSpec, out_dir: str | Path, ratios=(0.9, 0.05, 0.05)):
    """Write ``n_classes * per_class`` WAV files and return a split Manifest."""
    from ser.dataset import Emotion, ExampleMeta, Manifest, stratified_split

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label in range(spec.n_classes):
        for i in range(spec.per_class):
            path = out / f"class{label}_{i:04d}.wav"
            path.write_bytes(write_wav(synth_clip(spec, label, i)))
            rows.append(ExampleMeta(str(path), "synth", f"s{i % 10:02d}", Emotion(label)))
    manifest = Manifest(rows)
    if ratios is None:
        return manifest
    return stratified_split(manifest, ratios, derive_seed(spec.seed, "split"))
