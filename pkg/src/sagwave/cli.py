"""``sagwave`` command line: simulate, ingest, detect, bootstrap, render.

Exit codes: 0 success, 2 configuration or parse error, 3 simulation
integrity (collision), 4 detection precondition (grid too small).
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .detector import (DetectorConfig, GridTooSmallError, detect, read_activation_csv,
                       read_binary_csv, write_activation_csv, write_binary_csv)
from .grid import GridSpec, aggregate_trajectories, fill_gaps, read_grid_csv, write_grid_csv
from .ingest import DetectorParseError, parse_detector_csv, series_to_grid, write_detector_csv
from .render import ColorScale, boost_overlay, render_grid
from .simulator import CollisionError, run_replication, write_trajectories_csv
from .uq import (ReplicationError, read_probability_csv, run_bootstrap, workers_from_env,
                 write_probability_csv)

EXIT_OK, EXIT_CONFIG, EXIT_COLLISION, EXIT_DETECT = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_text(path: Path, writer) -> Path:
    buf = io.StringIO()
    writer(buf)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _write_manifest(out: Path, subcommand: str, config: dict, seeds: dict, inputs: list,
                    outputs: list[Path]) -> Path:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): _digest(Path(p)) for p in inputs},
        "outputs": {p.name: _digest(p) for p in outputs},
        "version": __version__,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error in {path}: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_replication(cfg.scenario, args.seed)
    except CollisionError as exc:
        raise CliError(EXIT_COLLISION, str(exc)) from None
    spec = cfg.grid_spec()
    grid = fill_gaps(aggregate_trajectories(result.trajectories, spec), cfg.scenario.base_params.v0)
    outputs = [
        _write_text(out / "trajectories.csv", lambda s: write_trajectories_csv(result.trajectories, s)),
        _write_text(out / "detectors.csv", lambda s: write_detector_csv(result.detectors, s)),
        _write_text(out / "grid.csv", lambda s: write_grid_csv(grid, s)),
    ]
    img = out / "grid.pgm"
    img.write_bytes(render_grid(grid, ColorScale("grayscale", 0.0, cfg.scenario.base_params.v0)))
    outputs.append(img)
    if result.deferred_entries or result.unserved:
        print(f"deferred entries: {result.deferred_entries}, never entered: {result.unserved}",
              file=sys.stderr)
    _write_manifest(out, "simulate", cfg.resolved(), {"seed": args.seed}, [args.config], outputs)
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        with open(args.grid, encoding="utf-8") as fh:
            grid = read_grid_csv(fh)
        config = DetectorConfig(args.width, args.epsilon, args.v_ref)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"cannot load grid: {exc}") from None
    try:
        act, binary = detect(grid, config)
    except GridTooSmallError as exc:
        raise CliError(EXIT_DETECT, str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = [
        _write_text(out / "activation.csv", lambda s: write_activation_csv(act, s)),
        _write_text(out / "binary.csv", lambda s: write_binary_csv(binary, s)),
    ]
    (out / "activation.ppm").write_bytes(render_grid(act, ColorScale("diverging", -1.0, 1.0)))
    (out / "overlay.ppm").write_bytes(boost_overlay(act, config.epsilon))
    outputs += [out / "activation.ppm", out / "overlay.ppm"]
    resolved = {"width": config.width, "epsilon": config.epsilon, "v_ref": config.v_ref,
                "clamped_activations": act.n_clamped}
    _write_manifest(out, "detect", resolved, {}, [args.grid], outputs)
    print(f"flagged={int(binary.indicators.sum())} valid={int(binary.valid.sum())}")
    return EXIT_OK


def _parse_band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected lo,hi") from None
    if not 0 <= lo < hi <= 1:
        raise argparse.ArgumentTypeError("need 0 <= lo < hi <= 1")
    return lo, hi


def cmd_bootstrap(args) -> int:
    cfg = _load(args.config)
    v_ref = args.v_ref if args.v_ref is not None else cfg.scenario.base_params.v0
    try:
        config = DetectorConfig(args.width, args.epsilon, v_ref)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    workers = args.workers if args.workers is not None else workers_from_env()
    try:
        report = run_bootstrap(cfg.scenario, config, k=args.replications, master_seed=args.seed,
                               spec=cfg.grid_spec(), workers=workers, u_band=args.u_band)
    except ReplicationError as exc:
        raise CliError(EXIT_COLLISION, str(exc)) from None
    except GridTooSmallError as exc:
        raise CliError(EXIT_DETECT, str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pm = report.probability
    outputs = [
        _write_text(out / "prob.csv", lambda s: write_probability_csv(pm, s)),
        _write_text(out / "summary.txt", lambda s: s.write(report.summary())),
    ]
    img = out / "prob.ppm"
    img.write_bytes(render_grid(pm, ColorScale("sequential", 0.0, 1.0)))
    outputs.append(img)
    resolved = dict(cfg.resolved(), width=config.width, epsilon=config.epsilon, v_ref=config.v_ref,
                    replications=args.replications, u_band=list(args.u_band))
    seeds = {"master_seed": args.seed, "replication_seeds": report.seeds}
    _write_manifest(out, "bootstrap", resolved, seeds, [args.config], outputs)
    print(f"U={report.U:.6f}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with open(args.csv, encoding="utf-8", newline="") as fh:
            series, rejects = parse_detector_csv(fh, bin_duration=args.bin_duration)
    except (OSError, DetectorParseError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if rejects:
        report = out / "rejects.csv"
        with open(report, "w", encoding="utf-8") as fh:
            fh.write("row_number,reason,line\n")
            for r in rejects:
                fh.write(f"{r.row_number},{r.reason!r},{r.line!r}\n")
        if not args.allow_rejects:
            raise CliError(EXIT_CONFIG, f"{len(rejects)} malformed rows; see {report}")
    if not any(s.bins for s in series):
        raise CliError(EXIT_CONFIG, "no data rows")
    starts = [b.t_start for s in series for b in s.bins]
    t0 = args.t0 if args.t0 is not None else min(starts)
    t_end = max(starts) + args.bin_duration
    n_t = args.n_t if args.n_t is not None else int(round((t_end - t0) / args.dt))
    try:
        spec = GridSpec(t0=t0, x0=args.x0, dt=args.dt, dx=args.dx, n_t=n_t, n_x=args.n_x)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    grid = series_to_grid(series, spec, v_fill=args.v_fill)
    outputs = [_write_text(out / "grid.csv", lambda s: write_grid_csv(grid, s))]
    resolved = {"t0": spec.t0, "x0": spec.x0, "dt": spec.dt, "dx": spec.dx, "n_t": spec.n_t,
                "n_x": spec.n_x, "v_fill": args.v_fill, "bin_duration": args.bin_duration,
                "rejects": len(rejects)}
    _write_manifest(out, "ingest", resolved, {}, [args.csv], outputs)
    return EXIT_OK


# header tag -> (reader, default scale kind, default domain or None for data range)
_RENDERABLE = {
    "sagwave-grid": (read_grid_csv, "grayscale", None),
    "sagwave-activation": (read_activation_csv, "diverging", (-1.0, 1.0)),
    "sagwave-binary": (read_binary_csv, "sequential", (0.0, 1.0)),
    "sagwave-prob": (read_probability_csv, "sequential", (0.0, 1.0)),
}


def cmd_render(args) -> int:
    try:
        text = Path(args.csv).read_text(encoding="utf-8")
        tag = text.split(" ", 2)[1] if text.startswith("# ") else ""
        if tag not in _RENDERABLE:
            raise ValueError(f"unrecognised map header in {args.csv}")
        reader, kind, domain = _RENDERABLE[tag]
        m = reader(io.StringIO(text))
        if args.epsilon is not None:
            if tag != "sagwave-activation":
                raise ValueError("--epsilon overlay needs an activation map")
            data = boost_overlay(m, args.epsilon)
        else:
            kind = args.scale or kind
            if args.vmin is not None and args.vmax is not None:
                domain = (args.vmin, args.vmax)
            elif domain is None:
                domain = (0.0, float(m.speeds.max()) or 1.0)
            data = render_grid(m, ColorScale(kind, *domain))
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sagwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sagwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one replication and write trajectories, detectors, grid")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="kernel activation and SAG map for a grid CSV")
    p.add_argument("grid")
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=0.30)
    p.add_argument("--v-ref", type=float, default=33.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("bootstrap", help="replicate, detect and aggregate into a probability map")
    p.add_argument("config")
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=0.30)
    p.add_argument("--v-ref", type=float, default=None, help="defaults to the config's idm.v0")
    p.add_argument("--workers", type=int, default=None, help="falls back to $SAGWAVE_WORKERS, then 1")
    p.add_argument("--u-band", type=_parse_band, default=(0.25, 0.75))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("ingest", help="nearest-station grid from a detector CSV")
    p.add_argument("csv")
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--dx", type=float, default=10.0)
    p.add_argument("--n-t", type=int, default=None)
    p.add_argument("--n-x", type=int, default=50)
    p.add_argument("--v-fill", type=float, default=33.3)
    p.add_argument("--bin-duration", type=float, default=30.0)
    p.add_argument("--allow-rejects", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("render", help="PGM/PPM image of any grid or map CSV")
    p.add_argument("csv")
    p.add_argument("--scale", choices=["grayscale", "diverging", "sequential"], default=None)
    p.add_argument("--vmin", type=float, default=None)
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None,
                   help="activation maps only: boost cells at or above this value")
    p.add_argument("--out", required=True, help="output image file")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"sagwave {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
