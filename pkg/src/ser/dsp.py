"""Signal processing: FFT, STFT, mel filterbank, log-mel, DCT-II, MFCC, image resize."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ser.audio_io import AudioClip

N_FFT = 2048
HOP = 512
N_MELS = 128
N_MFCC = 20
LOG_FLOOR = 1e-10


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=32)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(buffer, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey FFT over the last axis.

    Forward transform is unnormalized; the inverse applies 1/N.
    """
    x = np.asarray(buffer, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"FFT length {n} is not a power of two")
    x = x[..., _bit_reverse(n)]
    lead = x.shape[:-1]
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        blocks = x.reshape(lead + (n // m, m))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        x = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
        m *= 2
    if inverse:
        x = x / n
    return x


@dataclass(frozen=True)
class PowerSpectrogram:
    values: np.ndarray  # (n_fft/2 + 1, n_frames)
    bin_hz: float
    hop: int


@dataclass(frozen=True)
class LogMelSpectrogram:
    values: np.ndarray  # (n_mels, n_frames), dB

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, n_fft: int = N_FFT, hop: int = HOP) -> PowerSpectrogram:
    if not _is_pow2(n_fft):
        raise ValueError("n_fft must be a power of two")
    if hop <= 0:
        raise ValueError("hop must be positive")
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < 1:
        raise ValueError("clip has no samples")
    pad = n_fft // 2
    padded = np.pad(x, pad, mode="reflect") if len(x) > 1 else np.pad(x, pad, mode="edge")
    n_frames = 1 + len(x) // hop
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    spec = fft_radix2(frames * hann(n_fft))[:, : n_fft // 2 + 1]
    power = (spec.real**2 + spec.imag**2).T
    return PowerSpectrogram(np.ascontiguousarray(power), clip.sample_rate / n_fft, hop)


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    m = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(m) if m.ndim == 0 else m


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("mel value must be non-negative")
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(f) if f.ndim == 0 else f


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, sr: int = 22050,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Peak-normalized triangular filters, shape (n_mels, n_fft/2 + 1)."""
    if fmax is None:
        fmax = sr / 2
    if n_mels < 1 or not (0 <= fmin < fmax <= sr / 2):
        raise ValueError("need n_mels >= 1 and 0 <= fmin < fmax <= sr/2")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs - lo) / (ctr - lo)
    down = (hi - freqs) / (hi - ctr)
    fb = np.maximum(0.0, np.minimum(up, down))
    peak = fb.max(axis=1, keepdims=True)
    if np.any(peak <= 0):
        raise ValueError("a mel filter covers no FFT bin; lower n_mels or raise n_fft")
    return fb / peak


def log_mel(ps: PowerSpectrogram, fb: np.ndarray) -> LogMelSpectrogram:
    power = ps.values if isinstance(ps, PowerSpectrogram) else np.asarray(ps)
    if fb.shape[1] != power.shape[0]:
        raise ValueError(f"filterbank has {fb.shape[1]} bins, spectrogram {power.shape[0]}")
    mel = fb @ power
    return LogMelSpectrogram(10.0 * np.log10(np.maximum(mel, LOG_FLOOR)))


@lru_cache(maxsize=16)
def dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


def dct2_orthonormal(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return dct_matrix(x.shape[0]) @ x


def mfcc(lm, n_mfcc: int = N_MFCC) -> np.ndarray:
    values = lm.values if isinstance(lm, LogMelSpectrogram) else np.asarray(lm)
    n_mels = values.shape[0]
    if n_mfcc > n_mels:
        raise ValueError(f"n_mfcc={n_mfcc} exceeds n_mels={n_mels}")
    return dct_matrix(n_mels)[:n_mfcc] @ values


def time_average(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise ValueError("need a matrix with at least one frame")
    return m.mean(axis=1)


def resize_bilinear(img, h: int, w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling (src = i * (H-1)/(h-1))."""
    img = np.asarray(img, dtype=np.float64)
    if h <= 0 or w <= 0:
        raise ValueError("target dimensions must be positive")
    if img.size == 0:
        raise ValueError("empty image")
    H, W = img.shape
    if (H, W) == (h, w):
        return img.copy()
    ys = np.arange(h) * ((H - 1) / (h - 1)) if h > 1 else np.zeros(1)
    xs = np.arange(w) * ((W - 1) / (w - 1)) if w > 1 else np.zeros(1)
    y0 = np.minimum(np.floor(ys).astype(int), max(H - 2, 0))
    x0 = np.minimum(np.floor(xs).astype(int), max(W - 2, 0))
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def minmax_normalize(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.size == 0:
        raise ValueError("empty image")
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.full(img.shape, 0.5)
    return (img - lo) / (hi - lo)


# --- feature pipeline -----------------------------------------------------

@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = 22050
    duration: float = 4.0
    n_fft: int = N_FFT
    hop: int = HOP
    n_mels: int = N_MELS
    n_mfcc: int = N_MFCC
    fmin: float = 0.0
    fmax: float | None = None


FEATURE_KINDS = ("logmel", "mfcc", "mfcc-mean")


def featurize(clip: AudioClip, kind: str = "logmel", cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Resample, fix duration and extract one feature array from a clip."""
    from ser.audio_io import fix_duration, resample

    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    clip = fix_duration(resample(clip, cfg.sample_rate), cfg.duration)
    fb = _cached_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax)
    lm = log_mel(stft(clip, cfg.n_fft, cfg.hop), fb)
    if kind == "logmel":
        return lm.values
    m = mfcc(lm, cfg.n_mfcc)
    return m if kind == "mfcc" else time_average(m)


@lru_cache(maxsize=8)
def _cached_filterbank(n_mels, n_fft, sr, fmin, fmax):
    fb = mel_filterbank(n_mels, n_fft, sr, fmin, fmax)
    fb.setflags(write=False)
    return fb


def to_feature_vector(features: np.ndarray, n_mfcc: int = N_MFCC) -> np.ndarray:
    """Reduce logmel / mfcc / mfcc-mean features to the time-averaged MFCC vector."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        return f
    if f.shape[0] > n_mfcc:
        f = mfcc(f, n_mfcc)
    return time_average(f)
