"""Single-corridor car-following microsimulation with the Intelligent Driver Model.

Two corridor topologies are supported: a ring road, where stop-and-go waves
emerge on their own from string instability, and an open stretch fed by a
departure schedule. Every stochastic element of a run (desired speed, driver
parameters, departure offsets) is drawn from a per-replication RNG stream, so a
run is a pure function of ``(scenario, seed)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .rng import derive_seed


class CollisionError(RuntimeError):
    """Raised when an update leaves a follower overlapping its leader."""

    def __init__(self, message: str, vehicle_ids: Sequence[int] = ()):
        super().__init__(message)
        self.vehicle_ids = tuple(int(i) for i in vehicle_ids)


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters (SI units)."""

    v0: float = 33.3
    T: float = 1.6
    a_max: float = 0.73
    b: float = 1.67
    delta: float = 4.0
    s0: float = 2.0
    vehicle_length: float = 5.0

    def __post_init__(self):
        for name in ("v0", "T", "a_max", "b", "delta", "s0", "vehicle_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"IdmParams.{name} must be strictly positive")
        if self.delta < 1:
            raise ValueError("IdmParams.delta must be >= 1")

    def desired_gap(self, v: float, dv: float = 0.0) -> float:
        return self.s0 + v * self.T + v * dv / (2.0 * math.sqrt(self.a_max * self.b))

    def equilibrium_gap(self, v: float) -> float:
        """Net gap at which speed ``v`` is stationary behind an equal-speed leader."""
        if not 0 <= v < self.v0:
            raise ValueError("equilibrium speed must lie in [0, v0)")
        return self.desired_gap(v) / math.sqrt(1.0 - (v / self.v0) ** self.delta)

    def equilibrium_speed(self, gap: float) -> float:
        """Invert :meth:`equilibrium_gap` by bisection."""
        if gap <= self.s0:
            return 0.0
        lo, hi = 0.0, self.v0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.equilibrium_gap(mid) < gap:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15:
                break
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PerturbationSpec:
    """Scales of the stochastic elements resampled in every replication.

    ``speed_dev_sigma`` is in m/s and perturbs each driver's desired speed.
    The ``*_rel_sigma`` fields are relative scales for the matching IDM
    parameter. All draws are Gaussian truncated at three sigma.
    """

    speed_dev_sigma: float = 1.0
    departure_jitter_sigma: float = 2.0
    T_rel_sigma: float = 0.1
    a_max_rel_sigma: float = 0.1
    b_rel_sigma: float = 0.1

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"PerturbationSpec.{name} must be >= 0")

    @property
    def is_zero(self) -> bool:
        return all(value == 0 for value in vars(self).values())


@dataclass(frozen=True)
class Ring:
    length: float = 1000.0


@dataclass(frozen=True)
class Stretch:
    length: float = 2000.0


Topology = Union[Ring, Stretch]


@dataclass(frozen=True)
class Scenario:
    """A corridor, its demand, and the knobs of the stochastic replication.

    For a ring, ``n_vehicles`` are placed at uniform spacing moving at the
    equilibrium speed of ``base_params``. For a stretch, vehicles enter at
    ``x = 0`` at the times in ``departures`` with speed ``entry_speed``.

    ``vehicle_params`` is filled in by :func:`sample_replication`; when it is
    ``None`` every vehicle drives with ``base_params``.
    """

    topology: Topology = field(default_factory=Ring)
    n_vehicles: int = 50
    departures: tuple[float, ...] = ()
    entry_speed: float = 25.0
    base_params: IdmParams = field(default_factory=IdmParams)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec)
    sim_dt: float = 0.1
    duration: float = 1200.0
    warmup: float = 300.0
    detector_positions: tuple[float, ...] = (0.0, 250.0, 500.0, 750.0)
    vehicle_params: Optional[tuple[IdmParams, ...]] = None

    def __post_init__(self):
        if not self.sim_dt > 0:
            raise ValueError("sim_dt must be > 0")
        if not (self.duration > self.warmup >= 0):
            raise ValueError("need duration > warmup >= 0")
        if self.topology.length <= 0:
            raise ValueError("corridor length must be > 0")
        if isinstance(self.topology, Ring):
            p = self.base_params
            if self.n_vehicles < 1:
                raise ValueError("ring needs at least one vehicle")
            if self.n_vehicles * (p.s0 + p.vehicle_length) >= self.topology.length:
                raise ValueError("vehicles do not fit on the ring")
        if self.vehicle_params is not None and len(self.vehicle_params) != self.demand_size:
            raise ValueError("vehicle_params length must match the vehicle count")
        if any(b < a for a, b in zip(self.departures, self.departures[1:])):
            raise ValueError("departures must be sorted")

    @property
    def is_ring(self) -> bool:
        return isinstance(self.topology, Ring)

    @property
    def demand_size(self) -> int:
        return self.n_vehicles if self.is_ring else len(self.departures)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.sim_dt))

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup / self.sim_dt))

    def params_for(self, i: int) -> IdmParams:
        return self.base_params if self.vehicle_params is None else self.vehicle_params[i]


@dataclass(frozen=True)
class VehicleState:
    id: int
    position: float
    speed: float
    params: IdmParams = field(default_factory=IdmParams)


@dataclass(frozen=True)
class Trajectory:
    """Samples ``(t, x, v)`` of one vehicle, one per simulation step after warmup.

    On a ring ``x`` is wrapped into ``[0, length)``.
    """

    vehicle_id: int
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.t.tolist(), self.x.tolist(), self.v.tolist()))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.vehicle_id == other.vehicle_id
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.v, other.v)
        )

    __hash__ = None


@dataclass
class RunResult:
    trajectories: list[Trajectory]
    detectors: list  # list[DetectorSeries]
    deferred_entries: int = 0
    unserved: int = 0

    def __iter__(self):
        # allows ``trajectories, detectors = run_replication(...)``
        return iter((self.trajectories, self.detectors))


# --------------------------------------------------------------------------
# dynamics


def idm_accel(me: VehicleState, leader: Optional[tuple[float, float]] = None) -> float:
    """IDM acceleration of ``me``.

    Parameters
    ----------
    me : VehicleState
    leader : (gap, leader_speed), optional
        Net bumper-to-bumper gap in metres and the leader's speed. ``None``
        means open road ahead.
    """
    p = me.params
    v = me.speed
    free = 1.0 - (v / p.v0) ** p.delta
    if leader is None:
        return p.a_max * free
    gap, leader_speed = leader
    if not gap > 0:
        raise CollisionError("vehicle overlap", (me.id,))
    s_star = p.s0 + v * p.T + v * (v - leader_speed) / (2.0 * math.sqrt(p.a_max * p.b))
    return p.a_max * (free - (s_star / gap) ** 2)


def _accel_arrays(v, gap, dv, has_leader, P):
    """Vectorised IDM. ``P`` maps parameter name to per-vehicle arrays."""
    free = 1.0 - (v / P["v0"]) ** P["delta"]
    s_star = P["s0"] + v * P["T"] + v * dv / (2.0 * np.sqrt(P["a_max"] * P["b"]))
    safe_gap = np.where(has_leader, gap, 1.0)
    interaction = np.where(has_leader, (s_star / safe_gap) ** 2, 0.0)
    return P["a_max"] * (free - interaction)


def _leader_arrays(x, v, P, ring_length):
    """Gap and speed difference to the leader for position-sorted arrays.

    Arrays are ordered upstream to downstream; the leader of ``i`` is ``i + 1``
    (wrapping on a ring).
    """
    n = len(x)
    gap = np.empty(n)
    dv = np.empty(n)
    has_leader = np.ones(n, dtype=bool)
    if n == 0:
        return gap, dv, has_leader
    gap[:-1] = x[1:] - P["vehicle_length"][1:] - x[:-1]
    dv[:-1] = v[:-1] - v[1:]
    if ring_length is not None:
        gap[-1] = x[0] + ring_length - P["vehicle_length"][0] - x[-1]
        dv[-1] = v[-1] - v[0]
        if n == 1:
            dv[-1] = 0.0
    else:
        gap[-1] = np.inf
        dv[-1] = 0.0
        has_leader[-1] = False
    return gap, dv, has_leader


def _advance(x, v, ids, P, ring_length, dt):
    gap, dv, has_leader = _leader_arrays(x, v, P, ring_length)
    bad = has_leader & ~(gap > 0)
    if bad.any():
        raise CollisionError("vehicle overlap", ids[bad])
    a = _accel_arrays(v, gap, dv, has_leader, P)
    v_new = np.maximum(0.0, v + a * dt)
    x_new = x + v_new * dt
    gap_new, _, has_leader = _leader_arrays(x_new, v_new, P, ring_length)
    bad = has_leader & ~(gap_new > 0)
    if bad.any():
        raise CollisionError(f"collision: vehicles {ids[bad].tolist()}", ids[bad])
    return x_new, v_new


def _param_arrays(params: Sequence[IdmParams]) -> dict[str, np.ndarray]:
    names = ("v0", "T", "a_max", "b", "delta", "s0", "vehicle_length")
    return {n: np.array([getattr(p, n) for p in params], dtype=float) for n in names}


def step(states: Sequence[VehicleState], topology: Topology, sim_dt: float) -> list[VehicleState]:
    """Advance vehicles one semi-implicit ballistic step.

    ``states`` are sorted upstream to downstream. On a ring positions may be
    unwrapped (monotone over time); the gap of the lead vehicle is taken
    modulo the ring length.
    """
    if not states:
        return []
    xs = np.array([s.position for s in states], dtype=float)
    vs = np.array([s.speed for s in states], dtype=float)
    ids = np.array([s.id for s in states])
    P = _param_arrays([s.params for s in states])
    ring_length = topology.length if isinstance(topology, Ring) else None
    x_new, v_new = _advance(xs, vs, ids, P, ring_length, sim_dt)
    return [
        replace(s, position=float(xn), speed=float(vn))
        for s, xn, vn in zip(states, x_new, v_new)
    ]


# --------------------------------------------------------------------------
# replication sampling


def _truncnorm(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal draws truncated to [-3, 3] by rejection."""
    z = rng.standard_normal(size)
    bad = np.abs(z) > 3.0
    while bad.any():
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > 3.0
    return z


_POSITIVE_FLOOR = 1e-3


def _realize(scenario: Scenario, rng: np.random.Generator) -> Scenario:
    pert = scenario.perturbation
    if pert.is_zero:
        return scenario
    n = scenario.demand_size
    base = scenario.base_params
    # fixed draw order keeps streams stable when a sigma is zero
    z_v0, z_T, z_a, z_b, z_dep = (_truncnorm(rng, n) for _ in range(5))
    v0 = np.maximum(base.v0 + pert.speed_dev_sigma * z_v0, _POSITIVE_FLOOR)
    T = np.maximum(base.T * (1.0 + pert.T_rel_sigma * z_T), _POSITIVE_FLOOR)
    a = np.maximum(base.a_max * (1.0 + pert.a_max_rel_sigma * z_a), _POSITIVE_FLOOR)
    b = np.maximum(base.b * (1.0 + pert.b_rel_sigma * z_b), _POSITIVE_FLOOR)
    params = tuple(
        replace(base, v0=float(v0[i]), T=float(T[i]), a_max=float(a[i]), b=float(b[i]))
        for i in range(n)
    )
    departures = scenario.departures
    if departures and pert.departure_jitter_sigma > 0:
        jittered = np.asarray(departures) + pert.departure_jitter_sigma * z_dep
        departures = tuple(float(t) for t in np.sort(np.maximum(jittered, 0.0)))
    return replace(scenario, vehicle_params=params, departures=departures)


def sample_replication(scenario: Scenario, master_seed: int, replication_index: int) -> Scenario:
    """Draw the concrete scenario for one bootstrap replication.

    The RNG stream depends on ``(master_seed, replication_index)`` only.
    """
    if replication_index < 0:
        raise ValueError("replication_index must be >= 0")
    rng = np.random.default_rng(derive_seed(master_seed, replication_index))
    return _realize(scenario, rng)


# --------------------------------------------------------------------------
# running


def _ring_initial(scenario: Scenario):
    n = scenario.n_vehicles
    L = scenario.topology.length
    spacing = L / n
    base = scenario.base_params
    v_eq = base.equilibrium_speed(spacing - base.vehicle_length)
    x = np.arange(n, dtype=float) * spacing
    v = np.full(n, v_eq)
    return x, v


def run_replication(scenario: Scenario, seed: int) -> RunResult:
    """Simulate one replication.

    If the scenario has not been realised yet (``vehicle_params is None`` and
    the perturbation is nonzero) its stochastic elements are drawn from
    ``seed`` first. Trajectories are recorded from ``warmup`` on; virtual
    detector series are produced at ``scenario.detector_positions``.
    """
    from .ingest import virtual_detectors

    if scenario.vehicle_params is None:
        scenario = _realize(scenario, np.random.default_rng(derive_seed(seed, 0)))
    dt = scenario.sim_dt
    n_steps = scenario.n_steps
    k_warm = scenario.warmup_steps
    all_params = [scenario.params_for(i) for i in range(scenario.demand_size)]
    P_all = _param_arrays(all_params) if all_params else _param_arrays([scenario.base_params])

    rec_ids, rec_x, rec_v, rec_k = [], [], [], []
    deferred: set[int] = set()

    if scenario.is_ring:
        ring_length = scenario.topology.length
        x, v = _ring_initial(scenario)
        ids = np.arange(scenario.n_vehicles)
        P = P_all
        for k in range(n_steps):
            if k >= k_warm:
                rec_ids.append(ids)
                rec_x.append(np.mod(x, ring_length))
                rec_v.append(v)
                rec_k.append(np.full(len(ids), k))
            x, v = _advance(x, v, ids, P, ring_length, dt)
        unserved = 0
    else:
        length = scenario.topology.length
        departures = list(scenario.departures)
        entry_speed = scenario.entry_speed
        # arrays ordered upstream -> downstream
        x = np.empty(0)
        v = np.empty(0)
        ids = np.empty(0, dtype=int)
        next_vehicle = 0
        for k in range(n_steps):
            t = k * dt
            while next_vehicle < len(departures) and departures[next_vehicle] <= t + 1e-9:
                p = all_params[next_vehicle]
                if len(x):
                    leader_len = P_all["vehicle_length"][ids[0]]
                    gap = x[0] - leader_len
                    if gap <= p.s0:
                        deferred.add(next_vehicle)
                        break
                    v_in = entry_speed
                    if gap < p.equilibrium_gap(min(entry_speed, 0.999 * p.v0)):
                        v_in = min(entry_speed, float(v[0]))
                else:
                    v_in = entry_speed
                x = np.concatenate(([0.0], x))
                v = np.concatenate(([v_in], v))
                ids = np.concatenate(([next_vehicle], ids))
                next_vehicle += 1
            if k >= k_warm and len(ids):
                rec_ids.append(ids)
                rec_x.append(x)
                rec_v.append(v)
                rec_k.append(np.full(len(ids), k))
            if len(ids):
                P = {name: arr[ids] for name, arr in P_all.items()}
                x, v = _advance(x, v, ids, P, None, dt)
                keep = x <= length
                x, v, ids = x[keep], v[keep], ids[keep]
        unserved = len(departures) - next_vehicle

    trajectories = _collect(rec_ids, rec_x, rec_v, rec_k, dt)
    vl = scenario.base_params.vehicle_length
    detectors = virtual_detectors(trajectories, list(scenario.detector_positions), vehicle_length=vl)
    return RunResult(trajectories, detectors, deferred_entries=len(deferred), unserved=unserved)


def _collect(rec_ids, rec_x, rec_v, rec_k, dt) -> list[Trajectory]:
    if not rec_ids:
        return []
    ids = np.concatenate(rec_ids)
    xs = np.concatenate(rec_x)
    vs = np.concatenate(rec_v)
    ks = np.concatenate(rec_k)
    order = np.lexsort((ks, ids))
    ids, xs, vs, ks = ids[order], xs[order], vs[order], ks[order]
    ts = np.round(ks * dt, 9)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    out = []
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, len(ids)]):
        out.append(Trajectory(int(ids[lo]), ts[lo:hi], xs[lo:hi], vs[lo:hi]))
    return out


def write_trajectories_csv(trajectories: Sequence[Trajectory], stream) -> None:
    stream.write("vehicle_id,t,x,v\n")
    for tr in trajectories:
        for t, x, v in zip(tr.t, tr.x, tr.v):
            stream.write(f"{tr.vehicle_id},{t:.4f},{x:.4f},{v:.4f}\n")


def read_trajectories_csv(stream) -> list[Trajectory]:
    header = stream.readline().strip()
    if header != "vehicle_id,t,x,v":
        raise ValueError("bad header")
    data = np.loadtxt(stream, delimiter=",", ndmin=2)
    if data.size == 0:
        return []
    ids = data[:, 0].astype(int)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    return [
        Trajectory(int(ids[lo]), data[lo:hi, 1], data[lo:hi, 2], data[lo:hi, 3])
        for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, len(ids)])
    ]


def default_ring() -> Scenario:
    return Scenario()


def replication_seeds(master_seed: int, k: int) -> list[int]:
    return [derive_seed(master_seed, i) for i in range(k)]
