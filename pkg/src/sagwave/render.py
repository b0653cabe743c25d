"""Binary PGM/PPM rendering of grids and maps.

One pixel per cell. Image row 0 is the most downstream grid row, so space
increases upward as in a time-space diagram; column 0 is ``t0``. Invalid or
unmasked cells get a sentinel color that no scale produces: gray 0 in P5
images, pure green in P6 images.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import ActivationMap, BinaryMap
from .grid import TimeSpaceGrid
from .uq import ProbabilityMap

SENTINEL_GRAY = 0
SENTINEL_RGB = (0, 255, 0)
DIM_FACTOR = 0.4

_WHITE = np.array([255.0, 255.0, 255.0])
_BLUE = np.array([33.0, 102.0, 172.0])
_RED = np.array([178.0, 24.0, 43.0])
_NAVY = np.array([8.0, 48.0, 107.0])


@dataclass(frozen=True)
class ColorScale:
    kind: str  # "grayscale" | "diverging" | "sequential"
    vmin: float
    vmax: float

    def __post_init__(self):
        if self.kind not in ("grayscale", "diverging", "sequential"):
            raise ValueError(f"unknown scale kind {self.kind!r}")
        if not self.vmin < self.vmax:
            raise ValueError("scale needs vmin < vmax")

    def fraction(self, values: np.ndarray) -> np.ndarray:
        f = (np.asarray(values, dtype=float) - self.vmin) / (self.vmax - self.vmin)
        return np.clip(f, 0.0, 1.0)


def _round(x):
    return np.floor(np.asarray(x) + 0.5).astype(np.uint8)


def _rgb(frac: np.ndarray, kind: str) -> np.ndarray:
    f = frac[..., None]
    if kind == "sequential":
        return _WHITE + f * (_NAVY - _WHITE)
    # diverging: 0.5 is neutral white
    s = np.abs(2.0 * f - 1.0)
    hue = np.where(f < 0.5, _BLUE, _RED)
    return _WHITE + s * (hue - _WHITE)


def _values_and_valid(m):
    if isinstance(m, TimeSpaceGrid):
        return m.speeds, m.mask
    if isinstance(m, ActivationMap):
        return m.values, m.valid
    if isinstance(m, ProbabilityMap):
        return m.probs, m.valid
    if isinstance(m, BinaryMap):
        return m.indicators.astype(float), m.valid
    values, valid = m
    return np.asarray(values, dtype=float), np.asarray(valid, dtype=bool)


def _comment(scale: ColorScale, sentinel: str, extra: str = "") -> str:
    return (f"# sagwave scale={scale.kind} domain={scale.vmin:.6f},{scale.vmax:.6f} "
            f"sentinel={sentinel}{extra}\n")


def _encode(pixels: np.ndarray, comment: str) -> bytes:
    height, width = pixels.shape[:2]
    magic = "P5" if pixels.ndim == 2 else "P6"
    head = f"{magic}\n{comment}{width} {height}\n255\n".encode("ascii")
    return head + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def render_grid(m, scale: ColorScale) -> bytes:
    """Encode a grid, activation, binary or probability map as P5/P6 bytes.

    Grayscale maps ``[vmin, vmax]`` linearly onto gray levels 1..255 (0 is
    the sentinel); values outside the domain clamp to the endpoints.
    """
    values, valid = _values_and_valid(m)
    if values.size == 0:
        raise ValueError("empty map")
    frac = scale.fraction(values)[::-1]
    valid = valid[::-1]
    if scale.kind == "grayscale":
        pixels = _round(1.0 + 254.0 * frac)
        pixels[~valid] = SENTINEL_GRAY
        return _encode(pixels, _comment(scale, str(SENTINEL_GRAY)))
    pixels = _round(_rgb(frac, scale.kind))
    pixels[~valid] = SENTINEL_RGB
    return _encode(pixels, _comment(scale, "%d,%d,%d" % SENTINEL_RGB))


def boost_overlay(activation: ActivationMap, epsilon: float) -> bytes:
    """Diverging activation image with cells at or above ``epsilon`` at full
    color and every other valid cell faded toward white by ``DIM_FACTOR``."""
    scale = ColorScale("diverging", -1.0, 1.0)
    values, valid = activation.values[::-1], activation.valid[::-1]
    rgb = _rgb(scale.fraction(values), "diverging")
    boosted = valid & (values >= epsilon)
    dimmed = _WHITE + DIM_FACTOR * (rgb - _WHITE)
    rgb = np.where(boosted[..., None], rgb, dimmed)
    pixels = _round(rgb)
    pixels[~valid] = SENTINEL_RGB
    comment = _comment(scale, "%d,%d,%d" % SENTINEL_RGB, f" epsilon={epsilon:.6f} dim={DIM_FACTOR}")
    return _encode(pixels, comment)


def read_pnm(data: bytes) -> np.ndarray:
    """Decode the P5/P6 bytes written here (single comment line allowed)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end]
        pos = end + 1
        if line.startswith(b"#"):
            continue
        tokens.extend(line.split())
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError("only maxval 255 supported")
    channels = {b"P5": 1, b"P6": 3}[magic]
    arr = np.frombuffer(data[pos:pos + width * height * channels], dtype=np.uint8)
    return arr.reshape((height, width) if channels == 1 else (height, width, 3))
