"""Flat ``key = value`` scenario files.

Blank lines and ``#`` comments are ignored. Recognised keys::

    topology                  ring | stretch
    ring_length_m             ring circumference
    stretch_length_m          stretch length
    n_vehicles                ring vehicle count; stretch count with departure_headway_s
    departures_s              stretch departure times, comma separated
    departure_headway_s       stretch: evenly spaced departures (needs n_vehicles)
    entry_speed_mps           stretch entry speed
    sim_dt_s, duration_s, warmup_s
    idm.v0 idm.T idm.a_max idm.b idm.delta idm.s0 idm.vehicle_length
    perturb.speed_dev_sigma perturb.departure_jitter_sigma
    perturb.T_rel_sigma perturb.a_max_rel_sigma perturb.b_rel_sigma
    detectors.positions_m     virtual detector positions, comma separated
    grid.dt_s grid.dx_m grid.x0_m grid.length_m

Unknown keys are an error.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .grid import GridSpec
from .simulator import IdmParams, PerturbationSpec, Ring, Scenario, Stretch


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


_IDM_KEYS = {f"idm.{f.name}": f.name for f in fields(IdmParams)}
_PERTURB_KEYS = {f"perturb.{f.name}": f.name for f in fields(PerturbationSpec)}
_PLAIN_KEYS = {
    "topology", "ring_length_m", "stretch_length_m", "n_vehicles", "departures_s",
    "departure_headway_s", "entry_speed_mps", "sim_dt_s", "duration_s", "warmup_s",
    "detectors.positions_m", "grid.dt_s", "grid.dx_m", "grid.x0_m", "grid.length_m",
}
KNOWN_KEYS = _PLAIN_KEYS | set(_IDM_KEYS) | set(_PERTURB_KEYS)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    grid_dt: float = 1.0
    grid_dx: float = 10.0
    grid_x0: float = 0.0
    grid_length: float = 500.0
    raw: dict = field(default_factory=dict)

    def grid_spec(self) -> GridSpec:
        sc = self.scenario
        length = min(self.grid_length, sc.topology.length - self.grid_x0)
        return GridSpec.covering(sc.warmup, sc.duration - sc.warmup, self.grid_x0, length,
                                 self.grid_dt, self.grid_dx)

    def resolved(self) -> dict:
        """Every effective setting, defaults included, for manifests."""
        sc = self.scenario
        out = {
            "topology": "ring" if sc.is_ring else "stretch",
            "sim_dt_s": sc.sim_dt,
            "duration_s": sc.duration,
            "warmup_s": sc.warmup,
            "detectors.positions_m": list(sc.detector_positions),
            "grid.dt_s": self.grid_dt,
            "grid.dx_m": self.grid_dx,
            "grid.x0_m": self.grid_x0,
            "grid.length_m": self.grid_length,
        }
        if sc.is_ring:
            out["ring_length_m"] = sc.topology.length
            out["n_vehicles"] = sc.n_vehicles
        else:
            out["stretch_length_m"] = sc.topology.length
            out["departures_s"] = list(sc.departures)
            out["entry_speed_mps"] = sc.entry_speed
        for key, name in _IDM_KEYS.items():
            out[key] = getattr(sc.base_params, name)
        for key, name in _PERTURB_KEYS.items():
            out[key] = getattr(sc.perturbation, name)
        return out


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def parse_config_text(text: str) -> RunConfig:
    raw: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {line!r}", line_no)
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", line_no, key)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r}", line_no, key)
        raw[key] = (value, line_no)

    def get(key, conv, default):
        if key not in raw:
            return default
        value, line_no = raw[key]
        try:
            return conv(value)
        except ValueError:
            raise ConfigError(f"bad value {value!r} for key {key!r}", line_no, key) from None

    def build(cls, keymap, key_prefix):
        kwargs = {name: get(key, float, getattr(cls(), name)) for key, name in keymap.items()}
        try:
            return cls(**kwargs)
        except ValueError as exc:
            named = [k for k, name in keymap.items() if k in raw and f".{name} " in str(exc)]
            bad = next(iter(named or [k for k in keymap if k in raw]), key_prefix)
            raise ConfigError(f"key {bad!r}: {exc}", raw.get(bad, (None, None))[1], bad) from None

    topology = get("topology", str, "ring")
    if topology not in ("ring", "stretch"):
        raise ConfigError(f"bad value {topology!r} for key 'topology'", raw["topology"][1], "topology")
    params = build(IdmParams, _IDM_KEYS, "idm")
    perturbation = build(PerturbationSpec, _PERTURB_KEYS, "perturb")
    kwargs = dict(
        base_params=params,
        perturbation=perturbation,
        sim_dt=get("sim_dt_s", float, 0.1),
        duration=get("duration_s", float, 1200.0),
        warmup=get("warmup_s", float, 300.0),
        detector_positions=get("detectors.positions_m", _floats, (0.0, 250.0, 500.0, 750.0)),
    )
    if topology == "ring":
        kwargs["topology"] = Ring(get("ring_length_m", float, 1000.0))
        kwargs["n_vehicles"] = get("n_vehicles", int, 50)
    else:
        kwargs["topology"] = Stretch(get("stretch_length_m", float, 2000.0))
        kwargs["entry_speed"] = get("entry_speed_mps", float, 25.0)
        departures = get("departures_s", _floats, None)
        if departures is None:
            headway = get("departure_headway_s", float, 2.0)
            count = get("n_vehicles", int, 300)
            departures = tuple(i * headway for i in range(count))
        kwargs["departures"] = departures
    try:
        scenario = Scenario(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        cfg = RunConfig(
            scenario,
            grid_dt=get("grid.dt_s", float, 1.0),
            grid_dx=get("grid.dx_m", float, 10.0),
            grid_x0=get("grid.x0_m", float, 0.0),
            grid_length=get("grid.length_m", float, 500.0),
            raw={k: v for k, (v, _) in raw.items()},
        )
        cfg.grid_spec()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"grid: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
