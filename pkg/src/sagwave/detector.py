"""Stop-and-go detection with a width-parameterised diagonal edge kernel.

The kernel is a 3-row Sobel-like template. Its rows index space (row 0 is the
downstream end), its columns index time, and each row is the row above it
shifted one column to the right: a low-speed band that drifts upstream as time
advances. Its weights for ``w = 4``::

    [[0, -1, -1, -1, -1, 0, 2, 2],
     [2, 0, -1, -1, -1, -1, 0, 2],
     [2, 2, 0, -1, -1, -1, -1, 0]]
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .grid import GridSpec, TimeSpaceGrid, read_map_csv, write_map_csv

logger = logging.getLogger(__name__)

ACTIVATION_TAG = "sagwave-activation v1"
BINARY_TAG = "sagwave-binary v1"


class GridTooSmallError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Kernel:
    width: int
    weights: np.ndarray

    @property
    def shape(self):
        return self.weights.shape

    @property
    def left(self) -> int:
        """Columns of the window before the target column."""
        return self.weights.shape[1] // 2

    @property
    def right(self) -> int:
        return self.weights.shape[1] - 1 - self.left

    @property
    def positive_mass(self) -> float:
        return float(self.weights[self.weights > 0].sum())


@dataclass(frozen=True)
class DetectorConfig:
    width: int = 4
    epsilon: float = 0.30
    v_ref: float = 33.3

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not self.v_ref > 0:
            raise ValueError("v_ref must be > 0")


@dataclass(frozen=True, eq=False)
class ActivationMap:
    spec: GridSpec
    values: np.ndarray
    valid: np.ndarray
    n_clamped: int = 0

    def __eq__(self, other):
        if not isinstance(other, ActivationMap):
            return NotImplemented
        return (self.spec == other.spec and np.array_equal(self.values, other.values)
                and np.array_equal(self.valid, other.valid))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryMap:
    spec: GridSpec
    indicators: np.ndarray
    valid: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, BinaryMap):
            return NotImplemented
        return (self.spec == other.spec and np.array_equal(self.indicators, other.indicators)
                and np.array_equal(self.valid, other.valid))

    __hash__ = None


def build_kernel(w: int) -> Kernel:
    """Kernel for a wave whose low-speed band lasts ``w`` columns.

    Row 0 is ``[0, -1 (w times), 0, w/2, w/2]``; rows 1 and 2 are circular right
    shifts by one and two. Every row sums to zero, so constant speed fields
    give zero response.
    """
    if isinstance(w, bool) or int(w) != w or w < 2 or w % 2:
        raise ValueError(f"unsupported width: {w!r} (need a positive even integer)")
    w = int(w)
    base = np.array([0] + [-1] * w + [0, w // 2, w // 2], dtype=float)
    weights = np.stack([np.roll(base, r) for r in range(3)])
    weights.flags.writeable = False
    return Kernel(w, weights)


def kernel_activation(grid: TimeSpaceGrid, config: DetectorConfig) -> ActivationMap:
    """Normalised cross-correlation of the kernel with every grid window.

    The window for cell ``(r, c)`` spans rows ``r-1..r+1`` and columns
    ``c-left..c+right`` (``left = (w+4)//2``). Kernel row 0 lines up with grid
    row ``r+1`` because grid rows run upstream to downstream. The response is
    divided by ``3*w*v_ref``, the response of a perfect match of amplitude
    ``v_ref``. Cells whose window leaves the grid or touches an unmasked cell
    are invalid and hold 0.
    """
    kernel = build_kernel(config.width)
    kh, kw = kernel.shape
    n_x, n_t = grid.spec.shape
    if n_x < kh or n_t < kw:
        raise GridTooSmallError(
            f"grid too small: {n_x}x{n_t} grid, {kh}x{kw} kernel"
        )
    # grid rows ascend downstream, kernel rows descend
    k = kernel.weights[::-1]
    windows = sliding_window_view(grid.speeds, (kh, kw))
    raw = np.einsum("ijkl,kl->ij", windows, k)
    ok = sliding_window_view(grid.mask, (kh, kw)).all(axis=(2, 3))

    norm = raw / (kernel.positive_mass * config.v_ref)
    over = ok & (np.abs(norm) > 1.0)
    n_clamped = int(over.sum())
    if n_clamped:
        logger.warning("%d activations clamped to [-1, 1]; speeds exceed v_ref", n_clamped)
        norm = np.clip(norm, -1.0, 1.0)

    values = np.zeros((n_x, n_t))
    valid = np.zeros((n_x, n_t), dtype=bool)
    r0, c0 = 1, kernel.left
    values[r0:r0 + norm.shape[0], c0:c0 + norm.shape[1]] = np.where(ok, norm, 0.0)
    valid[r0:r0 + norm.shape[0], c0:c0 + norm.shape[1]] = ok
    return ActivationMap(grid.spec, values, valid, n_clamped)


def classify(activation: ActivationMap, epsilon: float) -> BinaryMap:
    """Indicator 1 where a valid activation is ``>= epsilon``."""
    ind = (activation.valid & (activation.values >= epsilon)).astype(np.uint8)
    return BinaryMap(activation.spec, ind, np.array(activation.valid))


def detect(grid: TimeSpaceGrid, config: DetectorConfig) -> tuple[ActivationMap, BinaryMap]:
    act = kernel_activation(grid, config)
    return act, classify(act, config.epsilon)


def write_activation_csv(act: ActivationMap, stream) -> None:
    write_map_csv(stream, ACTIVATION_TAG, act.spec, act.values, act.valid)


def read_activation_csv(stream) -> ActivationMap:
    spec, values, valid, _ = read_map_csv(stream, ACTIVATION_TAG)
    return ActivationMap(spec, values, valid)


def write_binary_csv(bm: BinaryMap, stream) -> None:
    write_map_csv(stream, BINARY_TAG, bm.spec, bm.indicators, bm.valid, fmt="{:.0f}")


def read_binary_csv(stream) -> BinaryMap:
    spec, values, valid, _ = read_map_csv(stream, BINARY_TAG)
    return BinaryMap(spec, values.astype(np.uint8), valid)
