"""Time-space diagrams: mean vehicle speed on a regular (position x time) grid.

Arrays are indexed ``[row, col]`` with rows along space (row 0 is the most
upstream, ``x0``) and columns along time (column 0 starts at ``t0``). Speeds
are in m/s.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    t0: float = 300.0
    x0: float = 0.0
    dt: float = 1.0
    dx: float = 10.0
    n_t: int = 900
    n_x: int = 50

    def __post_init__(self):
        if not (self.dt > 0 and self.dx > 0):
            raise ValueError("dt and dx must be > 0")
        if self.n_t < 0 or self.n_x < 0:
            raise ValueError("cell counts must be >= 0")

    @classmethod
    def covering(cls, t0: float, duration: float, x0: float, length: float,
                 dt: float = 1.0, dx: float = 10.0) -> "GridSpec":
        """Spec whose cells tile ``[t0, t0+duration) x [x0, x0+length)`` exactly."""
        n_t = duration / dt
        n_x = length / dx
        if abs(n_t - round(n_t)) > 1e-9 or abs(n_x - round(n_x)) > 1e-9:
            raise ValueError("window extent must be a whole number of cells")
        return cls(t0=t0, x0=x0, dt=dt, dx=dx, n_t=int(round(n_t)), n_x=int(round(n_x)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_t)

    @property
    def t_end(self) -> float:
        return self.t0 + self.n_t * self.dt

    @property
    def x_end(self) -> float:
        return self.x0 + self.n_x * self.dx

    def col_of(self, t):
        return np.floor((np.asarray(t) - self.t0) / self.dt).astype(np.int64)

    def row_of(self, x):
        return np.floor((np.asarray(x) - self.x0) / self.dx).astype(np.int64)

    def row_centers(self) -> np.ndarray:
        return self.x0 + (np.arange(self.n_x) + 0.5) * self.dx

    def col_starts(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_t) * self.dt


@dataclass(frozen=True, eq=False)
class TimeSpaceGrid:
    spec: GridSpec
    speeds: np.ndarray
    mask: np.ndarray
    counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.speeds.shape != self.spec.shape or self.mask.shape != self.spec.shape:
            raise ValueError("array shapes do not match the grid spec")
        self.speeds.flags.writeable = False
        self.mask.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, TimeSpaceGrid):
            return NotImplemented
        return (
            self.spec == other.spec
            and np.array_equal(self.speeds, other.speeds)
            and np.array_equal(self.mask, other.mask)
        )

    __hash__ = None

    @property
    def shape(self):
        return self.spec.shape


@dataclass(frozen=True, eq=False)
class Neighborhood:
    center: tuple[int, int]
    half_time: int
    half_space: int
    values: np.ndarray


def aggregate_trajectories(trajectories: Sequence, spec: GridSpec) -> TimeSpaceGrid:
    """Bin trajectory samples into cells and average their speeds.

    Bins are half-open, ``[t0 + j*dt, t0 + (j+1)*dt)``; samples outside the
    window are skipped. Empty cells get speed 0 and ``mask = False``; run
    :func:`fill_gaps` to give them a value.
    """
    if len(trajectories) == 0:
        raise ValueError("no input trajectories")
    if spec.n_t == 0 or spec.n_x == 0:
        raise ValueError("degenerate grid")
    t = np.concatenate([np.asarray(tr.t, dtype=float) for tr in trajectories])
    x = np.concatenate([np.asarray(tr.x, dtype=float) for tr in trajectories])
    v = np.concatenate([np.asarray(tr.v, dtype=float) for tr in trajectories])
    cols = spec.col_of(t)
    rows = spec.row_of(x)
    keep = (cols >= 0) & (cols < spec.n_t) & (rows >= 0) & (rows < spec.n_x)
    flat = rows[keep] * spec.n_t + cols[keep]
    v = v[keep]
    # sort by cell then speed so per-cell sums do not depend on input order
    order = np.lexsort((v, flat))
    flat, v = flat[order], v[order]
    size = spec.n_x * spec.n_t
    counts = np.bincount(flat, minlength=size)
    sums = np.zeros(size)
    if len(flat):
        starts = np.flatnonzero(np.r_[True, np.diff(flat) != 0])
        sums[flat[starts]] = np.add.reduceat(v, starts)
    mask = counts > 0
    speeds = np.zeros(size)
    speeds[mask] = sums[mask] / counts[mask]
    return TimeSpaceGrid(
        spec,
        speeds.reshape(spec.shape),
        mask.reshape(spec.shape),
        counts.reshape(spec.shape),
    )


def fill_gaps(grid: TimeSpaceGrid, v_fill: float) -> TimeSpaceGrid:
    """Give every unmasked cell a speed; the mask is left as is.

    An empty cell takes the value of the nearest masked cell in the same row
    (ties go to the earlier one). Rows with no data at all get ``v_fill``,
    normally the free-flow speed.
    """
    speeds = np.array(grid.speeds, dtype=float)
    mask = grid.mask
    n_t = grid.spec.n_t
    cols = np.arange(n_t)
    for i in range(grid.spec.n_x):
        row_mask = mask[i]
        if row_mask.all():
            continue
        if not row_mask.any():
            speeds[i] = v_fill
            continue
        idx = np.flatnonzero(row_mask)
        pos = np.searchsorted(idx, cols)
        before = idx[np.clip(pos - 1, 0, len(idx) - 1)]
        after = idx[np.clip(pos, 0, len(idx) - 1)]
        d_before = np.where(before <= cols, cols - before, np.iinfo(np.int64).max)
        d_after = np.where(after >= cols, after - cols, np.iinfo(np.int64).max)
        src = np.where(d_before <= d_after, before, after)
        gaps = ~row_mask
        speeds[i, gaps] = grid.speeds[i, src[gaps]]
    return TimeSpaceGrid(grid.spec, speeds, np.array(mask), grid.counts)


def extract_neighborhood(grid: TimeSpaceGrid, center: tuple[int, int], m: int, n: int) -> Neighborhood:
    """Copy the ``(2n+1) x (2m+1)`` window around ``center = (row, col)``."""
    r, c = center
    if m < 0 or n < 0:
        raise ValueError("half widths must be >= 0")
    if r - n < 0 or c - m < 0 or r + n >= grid.spec.n_x or c + m >= grid.spec.n_t:
        raise IndexError("boundary")
    values = np.array(grid.speeds[r - n:r + n + 1, c - m:c + m + 1])
    return Neighborhood((r, c), m, n, values)


def write_neighborhood(grid: TimeSpaceGrid, nb: Neighborhood) -> TimeSpaceGrid:
    """Return a copy of ``grid`` with ``nb`` written back at its center."""
    r, c = nb.center
    m, n = nb.half_time, nb.half_space
    speeds = np.array(grid.speeds)
    speeds[r - n:r + n + 1, c - m:c + m + 1] = nb.values
    return TimeSpaceGrid(grid.spec, speeds, np.array(grid.mask), grid.counts)


# --------------------------------------------------------------------------
# CSV framing shared by grids, activation, binary and probability maps

GRID_TAG = "sagwave-grid v1"


def _fmt_header(tag: str, spec: GridSpec, extra: dict | None = None) -> str:
    parts = [
        f"# {tag}",
        f"t0={float(spec.t0)!r}",
        f"x0={float(spec.x0)!r}",
        f"dt={float(spec.dt)!r}",
        f"dx={float(spec.dx)!r}",
        f"n_t={spec.n_t}",
        f"n_x={spec.n_x}",
    ]
    for key, value in (extra or {}).items():
        parts.append(f"{key}={value}")
    return ", ".join(parts) + "\n"


def write_map_csv(stream, tag: str, spec: GridSpec, values: np.ndarray, mask: np.ndarray,
                  fmt: str = "{:.6f}", extra: dict | None = None) -> None:
    stream.write(_fmt_header(tag, spec, extra))
    for row in values:
        stream.write(",".join(fmt.format(float(v)) for v in row) + "\n")
    for row in mask:
        stream.write(",".join("1" if b else "0" for b in row) + "\n")


def read_map_csv(stream, tag: str):
    """Parse the framing written by :func:`write_map_csv`.

    Returns ``(spec, values, mask, extra)``.
    """
    header = stream.readline()
    if not header.startswith("# "):
        raise ValueError("bad header")
    fields = [f.strip() for f in header[2:].strip().split(",")]
    if fields[0] != tag:
        raise ValueError(f"bad header: expected {tag!r}, got {fields[0]!r}")
    kv = {}
    for f in fields[1:]:
        key, _, value = f.partition("=")
        kv[key.strip()] = value.strip()
    try:
        spec = GridSpec(
            t0=float(kv.pop("t0")), x0=float(kv.pop("x0")),
            dt=float(kv.pop("dt")), dx=float(kv.pop("dx")),
            n_t=int(kv.pop("n_t")), n_x=int(kv.pop("n_x")),
        )
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad header: {exc}") from None
    lines = [ln for ln in stream.read().splitlines() if ln.strip()]
    if len(lines) != 2 * spec.n_x:
        raise ValueError(f"expected {2 * spec.n_x} data rows, found {len(lines)}")

    def parse_rows(rows, conv):
        out = []
        for ln in rows:
            cells = ln.split(",")
            if len(cells) != spec.n_t:
                raise ValueError(f"expected {spec.n_t} columns, found {len(cells)}")
            out.append([conv(c) for c in cells])
        return out

    values = np.array(parse_rows(lines[:spec.n_x], float), dtype=float).reshape(spec.shape)
    mask = np.array(parse_rows(lines[spec.n_x:], lambda c: c.strip() == "1"), dtype=bool).reshape(spec.shape)
    return spec, values, mask, kv


def write_grid_csv(grid: TimeSpaceGrid, stream) -> None:
    write_map_csv(stream, GRID_TAG, grid.spec, grid.speeds, grid.mask)


def read_grid_csv(stream) -> TimeSpaceGrid:
    spec, values, mask, _ = read_map_csv(stream, GRID_TAG)
    return TimeSpaceGrid(spec, values, mask)


def round_trip_equal(a: TimeSpaceGrid, b: TimeSpaceGrid, decimals: int = 6) -> bool:
    return (
        a.spec == b.spec
        and np.array_equal(np.round(a.speeds, decimals), np.round(b.speeds, decimals))
        and np.array_equal(a.mask, b.mask)
    )

