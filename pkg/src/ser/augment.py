"""Mixup, spectrogram-image transforms and time/frequency masking."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ser.dsp import resize_bilinear


def mixup(x_i, x_j, y_i, y_j, lam: float):
    """Return the convex combinations lam*a + (1-lam)*b of inputs and labels."""
    x_i, x_j = np.asarray(x_i, dtype=np.float64), np.asarray(x_j, dtype=np.float64)
    y_i, y_j = np.asarray(y_i, dtype=np.float64), np.asarray(y_j, dtype=np.float64)
    if x_i.shape != x_j.shape or y_i.shape != y_j.shape:
        raise ValueError("mixup pair shapes differ")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return lam * x_i + (1.0 - lam) * x_j, lam * y_i + (1.0 - lam) * y_j


def sample_lambda(alpha: float, rng, size=None):
    """Beta(alpha, alpha) draw(s)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return rng.beta(alpha, alpha, size)


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at fractional coordinates; points outside the grid read as 0."""
    H, W = img.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy, fx = ys - y0, xs - x0
    out = np.zeros(ys.shape)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            ok = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
            vals = np.zeros(ys.shape)
            vals[ok] = img[yy[ok], xx[ok]]
            out += wy * wx * vals
    return out


def rotate(img, degrees: float) -> np.ndarray:
    """Rotate about the image center (counter-clockwise in row-up view), zero fill."""
    img = np.asarray(img, dtype=np.float64)
    if degrees == 0:
        return img.copy()
    H, W = img.shape
    cy, cx = (H - 1) / 2, (W - 1) / 2
    th = np.deg2rad(degrees)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    # inverse map: output pixel -> source coordinate
    dy, dx = yy - cy, xx - cx
    sy = cy + np.cos(th) * dy - np.sin(th) * dx
    sx = cx + np.sin(th) * dy + np.cos(th) * dx
    sy = np.where(np.abs(sy - np.round(sy)) < 1e-9, np.round(sy), sy)
    sx = np.where(np.abs(sx - np.round(sx)) < 1e-9, np.round(sx), sx)
    return np.clip(_sample_bilinear(img, sy, sx), 0.0, 1.0)


def zoom(img, factor: float) -> np.ndarray:
    """Scale about the center by ``factor`` >= 1 and center-crop back to shape."""
    img = np.asarray(img, dtype=np.float64)
    if factor < 1:
        raise ValueError("zoom factor must be >= 1")
    H, W = img.shape
    if factor == 1:
        return img.copy()
    big = resize_bilinear(img, max(H, int(round(H * factor))), max(W, int(round(W * factor))))
    top = (big.shape[0] - H) // 2
    left = (big.shape[1] - W) // 2
    return np.clip(big[top : top + H, left : left + W], 0.0, 1.0)


def brightness(img, delta: float) -> np.ndarray:
    return np.clip(np.asarray(img, dtype=np.float64) + delta, 0.0, 1.0)


def spec_mask(img, n_time: int, n_freq: int, max_width: int, rng) -> np.ndarray:
    """Zero random time columns and frequency rows of width 1..max_width."""
    img = np.array(img, dtype=np.float64)
    H, W = img.shape
    if n_time == 0 and n_freq == 0:
        return img
    if max_width < 1 or max_width >= min(H, W):
        raise ValueError("max_width must be in [1, min(dim))")
    for _ in range(n_time):
        w = rng.integers(1, max_width + 1)
        start = rng.integers(0, W - w + 1)
        img[:, start : start + w] = 0.0
    for _ in range(n_freq):
        w = rng.integers(1, max_width + 1)
        start = rng.integers(0, H - w + 1)
        img[start : start + w, :] = 0.0
    return img


@dataclass(frozen=True)
class AugmentPolicy:
    rotation: tuple = (-5.0, 5.0)
    zoom: tuple = (1.0, 1.1)
    brightness: tuple = (-0.1, 0.1)
    p_rotate: float = 0.5
    p_zoom: float = 0.5
    p_brightness: float = 0.5
    n_time_masks: int = 0
    n_freq_masks: int = 0
    mask_width: int = 8
    p_mask: float = 0.0
    mixup_alpha: float = 0.4

    def __post_init__(self):
        for name in ("rotation", "zoom", "brightness"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is not ordered")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.zoom[0] < 1:
            raise ValueError("zoom range must start at >= 1")
        for name in ("p_rotate", "p_zoom", "p_brightness", "p_mask"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.mixup_alpha <= 0:
            raise ValueError("mixup_alpha must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("rotation", "zoom", "brightness"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def apply_policy(img, policy: AugmentPolicy, rng) -> np.ndarray:
    """Apply each transform independently with its probability."""
    out = np.asarray(img, dtype=np.float64)
    # fixed number of draws per call keeps streams aligned across examples
    u = rng.random(4)
    params = rng.random(3)
    if u[0] < policy.p_rotate:
        lo, hi = policy.rotation
        out = rotate(out, lo + (hi - lo) * params[0])
    if u[1] < policy.p_zoom:
        lo, hi = policy.zoom
        out = zoom(out, lo + (hi - lo) * params[1])
    if u[2] < policy.p_brightness:
        lo, hi = policy.brightness
        out = brightness(out, lo + (hi - lo) * params[2])
    if u[3] < policy.p_mask:
        out = spec_mask(out, policy.n_time_masks, policy.n_freq_masks, policy.mask_width, rng)
    return out.copy() if out is img else out
