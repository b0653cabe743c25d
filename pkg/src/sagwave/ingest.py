"""Loop-detector data: a PeMS-like 30 s CSV layout and virtual detectors.

CSV layout, one row per (station, bin)::

    station_id,position_m,t_start_s,flow_veh,occupancy,speed_mps
    s1,0,300.0,12,0.08,24.6

An empty ``speed_mps`` field means no vehicle passed during the bin.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import GridSpec, TimeSpaceGrid, fill_gaps

HEADER = ("station_id", "position_m", "t_start_s", "flow_veh", "occupancy", "speed_mps")


class DetectorParseError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorBin:
    t_start: float
    flow: int
    occupancy: float
    mean_speed: Optional[float]


@dataclass(frozen=True)
class DetectorSeries:
    station_id: str
    position: float
    bin_duration: float = 30.0
    bins: tuple[DetectorBin, ...] = field(default_factory=tuple)

    def bin_at(self, t: float) -> Optional[DetectorBin]:
        """The bin whose interval ``[t_start, t_start + bin_duration)`` holds ``t``."""
        if not self.bins:
            return None
        starts = np.fromiter((b.t_start for b in self.bins), float, len(self.bins))
        i = int(np.searchsorted(starts, t, side="right")) - 1
        if i < 0 or t >= self.bins[i].t_start + self.bin_duration:
            return None
        return self.bins[i]


@dataclass(frozen=True)
class Reject:
    row_number: int
    line: str
    reason: str


def _validate_bin(b: DetectorBin, bin_duration: float) -> Optional[str]:
    if b.flow < 0:
        return "negative flow"
    if not 0.0 <= b.occupancy <= 1.0:
        return "occupancy outside [0, 1]"
    if (b.mean_speed is None) != (b.flow == 0):
        return "speed must be missing exactly when flow is 0"
    if b.mean_speed is not None and not (math.isfinite(b.mean_speed) and b.mean_speed >= 0):
        return "invalid speed"
    ratio = b.t_start / bin_duration
    if abs(ratio - round(ratio)) > 1e-9:
        return f"t_start not a multiple of {bin_duration:g} s"
    return None


def parse_detector_csv(stream, bin_duration: float = 30.0) -> tuple[list[DetectorSeries], list[Reject]]:
    """Read detector rows into one series per station.

    Malformed rows do not abort the parse; they come back as
    :class:`Reject` records with their 1-based line number (header is line 1).

    Raises
    ------
    DetectorParseError
        ``"bad header"`` if the header row is wrong, ``"unsorted input"`` if a
        station's timestamps do not strictly increase.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise DetectorParseError("bad header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise DetectorParseError("bad header")

    rejects: list[Reject] = []
    stations: dict[str, tuple[float, list[DetectorBin]]] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        raw = ",".join(row)
        if len(row) != len(HEADER):
            rejects.append(Reject(line_no, raw, f"expected {len(HEADER)} fields, got {len(row)}"))
            continue
        sid, pos, t_start, flow, occ, speed = (c.strip() for c in row)
        try:
            if not sid:
                raise ValueError("empty station id")
            position = float(pos)
            flow_f = float(flow)
            if flow_f != int(flow_f):
                raise ValueError("flow must be an integer")
            b = DetectorBin(
                t_start=float(t_start),
                flow=int(flow_f),
                occupancy=float(occ),
                mean_speed=float(speed) if speed else None,
            )
        except ValueError as exc:
            rejects.append(Reject(line_no, raw, str(exc)))
            continue
        problem = _validate_bin(b, bin_duration)
        if problem is None and sid in stations and stations[sid][0] != position:
            problem = "station position changed"
        if problem:
            rejects.append(Reject(line_no, raw, problem))
            continue
        _, bins = stations.setdefault(sid, (position, []))
        if bins and b.t_start <= bins[-1].t_start:
            raise DetectorParseError(f"unsorted input: station {sid} at line {line_no}")
        bins.append(b)

    series = [
        DetectorSeries(sid, pos, bin_duration, tuple(bins))
        for sid, (pos, bins) in stations.items()
    ]
    return series, rejects


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_detector_csv(series: Sequence[DetectorSeries], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(HEADER)
    for s in series:
        for b in s.bins:
            writer.writerow([
                s.station_id, _fmt(s.position), _fmt(b.t_start), b.flow,
                _fmt(b.occupancy), "" if b.mean_speed is None else _fmt(b.mean_speed),
            ])


def _crossings(tr, position: float):
    """Times and speeds at which ``tr`` passes ``position``.

    A crossing between consecutive samples is ``x_prev < p <= x_next``, or a
    wrap on a ring (``x_next < x_prev``) with ``p > x_prev`` or ``p <= x_next``.
    Time and speed are interpolated linearly in position.
    """
    t, x, v = (np.asarray(a, dtype=float) for a in (tr.t, tr.x, tr.v))
    if len(t) < 2:
        return np.empty(0), np.empty(0)
    x_prev, x_next = x[:-1], x[1:]
    wrapped = x_next < x_prev
    straight = ~wrapped & (x_prev < position) & (position <= x_next)
    if wrapped.any():
        # advance across the wrap: distance travelled is (L - x_prev) + x_next,
        # but L is unknown here, so interpolate on the two pieces separately
        wrap_hit = wrapped & ((position > x_prev) | (position <= x_next))
    else:
        wrap_hit = np.zeros_like(straight)
    times, speeds = [], []
    idx = np.flatnonzero(straight)
    if len(idx):
        frac = (position - x_prev[idx]) / (x_next[idx] - x_prev[idx])
        times.append(t[idx] + frac * (t[idx + 1] - t[idx]))
        speeds.append(v[idx] + frac * (v[idx + 1] - v[idx]))
    idx = np.flatnonzero(wrap_hit)
    if len(idx):
        # use the speed-based travel distance for the wrapped step
        dist = np.maximum(v[idx + 1] * (t[idx + 1] - t[idx]), 1e-12)
        before = position > x_prev[idx]
        offset = np.where(before, position - x_prev[idx], dist - (x_next[idx] - position))
        frac = np.clip(offset / dist, 0.0, 1.0)
        times.append(t[idx] + frac * (t[idx + 1] - t[idx]))
        speeds.append(v[idx] + frac * (v[idx + 1] - v[idx]))
    if not times:
        return np.empty(0), np.empty(0)
    return np.concatenate(times), np.concatenate(speeds)


def virtual_detectors(trajectories, positions: Sequence[float], bin_duration: float = 30.0,
                      vehicle_length: float = 5.0) -> list[DetectorSeries]:
    """Loop-detector readings a station at each position would have reported.

    Per bin: flow is the number of crossings, mean speed the harmonic mean of
    crossing speeds, occupancy ``sum(vehicle_length / speed) / bin_duration``
    capped at 1. Bins cover the time span of the trajectories.
    """
    if not trajectories or not positions:
        return [DetectorSeries(f"vd{i}", float(p), bin_duration, ()) for i, p in enumerate(positions)]
    t_min = min(float(tr.t[0]) for tr in trajectories if len(tr))
    t_max = max(float(tr.t[-1]) for tr in trajectories if len(tr))
    first = math.floor(t_min / bin_duration)
    last = math.floor(t_max / bin_duration)
    n_bins = last - first + 1
    out = []
    for i, p in enumerate(positions):
        times, speeds = [], []
        for tr in trajectories:
            tc, vc = _crossings(tr, float(p))
            times.append(tc)
            speeds.append(vc)
        times = np.concatenate(times) if times else np.empty(0)
        speeds = np.concatenate(speeds) if speeds else np.empty(0)
        b_idx = np.floor(times / bin_duration).astype(np.int64) - first
        keep = (b_idx >= 0) & (b_idx < n_bins)
        b_idx, speeds = b_idx[keep], speeds[keep]
        flow = np.bincount(b_idx, minlength=n_bins)
        inv = np.bincount(b_idx, weights=1.0 / np.maximum(speeds, 1e-9), minlength=n_bins)
        bins = []
        for j in range(n_bins):
            f = int(flow[j])
            bins.append(DetectorBin(
                t_start=float((first + j) * bin_duration),
                flow=f,
                occupancy=float(min(1.0, vehicle_length * inv[j] / bin_duration)),
                mean_speed=float(f / inv[j]) if f else None,
            ))
        out.append(DetectorSeries(f"vd{i}", float(p), bin_duration, tuple(bins)))
    return out


def series_to_grid(series: Sequence[DetectorSeries], spec: GridSpec, v_fill: float = 33.3) -> TimeSpaceGrid:
    """Piecewise-constant grid from sparse stations.

    Each row copies the station nearest to its center (ties go upstream);
    each cell takes the speed of the station bin containing the cell's start
    time. Only rows that contain a station are masked, and only where the
    station reported a speed. Gaps in a station row are filled along time
    (see :func:`sagwave.grid.fill_gaps`) before rows are copied.
    """
    if not series:
        raise ValueError("no detector series")
    ordered = sorted(series, key=lambda s: s.position)
    positions = np.array([s.position for s in ordered])
    t_cols = spec.col_starts()
    station_speeds = np.zeros((len(ordered), spec.n_t))
    station_mask = np.zeros((len(ordered), spec.n_t), dtype=bool)
    for k, s in enumerate(ordered):
        for j, t in enumerate(t_cols):
            b = s.bin_at(float(t))
            if b is not None and b.mean_speed is not None:
                station_speeds[k, j] = b.mean_speed
                station_mask[k, j] = True
    filled = fill_gaps(
        TimeSpaceGrid(GridSpec(spec.t0, 0.0, spec.dt, 1.0, spec.n_t, len(ordered)),
                      station_speeds, station_mask),
        v_fill,
    ).speeds

    centers = spec.row_centers()
    dist = np.abs(centers[:, None] - positions[None, :])
    nearest = np.argmin(dist, axis=1)  # argmin keeps the first (upstream) on ties
    speeds = filled[nearest]
    mask = np.zeros(spec.shape, dtype=bool)
    station_rows = spec.row_of(positions)
    for k, r in enumerate(station_rows):
        if 0 <= r < spec.n_x:
            mask[r] = station_mask[k]
    return TimeSpaceGrid(spec, speeds, mask)
