"""Bootstrap replication of the reconstruction and SAG probability maps."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import BinaryMap, DetectorConfig, detect
from .grid import GridSpec, aggregate_trajectories, fill_gaps, read_map_csv, write_map_csv
from .rng import derive_seed
from .simulator import CollisionError, Scenario, run_replication, sample_replication

PROB_TAG = "sagwave-prob v1"

logger = logging.getLogger(__name__)


class ReplicationError(RuntimeError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"replication {index} failed: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    spec: GridSpec
    probs: np.ndarray
    valid: np.ndarray
    k: int

    def __eq__(self, other):
        if not isinstance(other, ProbabilityMap):
            return NotImplemented
        return (self.spec == other.spec and self.k == other.k
                and np.array_equal(self.probs, other.probs)
                and np.array_equal(self.valid, other.valid))

    __hash__ = None


@dataclass
class BootstrapReport:
    k: int
    master_seed: int
    seeds: list[int]
    probability: ProbabilityMap
    U: float
    u_band: tuple[float, float] = (0.25, 0.75)
    n_clamped: int = 0
    runtime_s: float = 0.0
    workers: int = 1
    binaries: Optional[list[BinaryMap]] = field(default=None, repr=False)

    def summary(self) -> str:
        lo, hi = self.u_band
        return (
            f"k={self.k}\n"
            f"master_seed={self.master_seed}\n"
            f"u_band={lo!r},{hi!r}\n"
            f"U={self.U:.6f}\n"
            f"valid_cells={int(self.probability.valid.sum())}\n"
            f"warnings=clamped_activations:{self.n_clamped}\n"
        )


def probability_map(binaries: Sequence[BinaryMap]) -> ProbabilityMap:
    """Fraction of replications flagging each cell.

    A cell is valid only if it is valid in every replication; invalid cells
    hold 0.
    """
    if not binaries:
        raise ValueError("no replications")
    spec = binaries[0].spec
    if any(b.spec != spec for b in binaries):
        raise ValueError("incompatible replications")
    k = len(binaries)
    counts = np.zeros(spec.shape, dtype=np.int64)
    valid = np.ones(spec.shape, dtype=bool)
    for b in binaries:
        counts += b.indicators.astype(np.int64)
        valid &= b.valid
    probs = np.where(valid, counts / k, 0.0)
    return ProbabilityMap(spec, probs, valid, k)


def uncertainty_fraction(pm: ProbabilityMap, lo: float = 0.25, hi: float = 0.75) -> float:
    """Share of valid cells with ``lo < p < hi`` (strict on both sides)."""
    if not 0 <= lo < hi <= 1:
        raise ValueError("need 0 <= lo < hi <= 1")
    n_valid = int(pm.valid.sum())
    if n_valid == 0:
        raise ValueError("empty map")
    p = pm.probs[pm.valid]
    return float(np.count_nonzero((p > lo) & (p < hi)) / n_valid)


def default_grid_spec(scenario: Scenario, dt: float = 1.0, dx: float = 10.0,
                      x0: float = 0.0, length: float = 500.0) -> GridSpec:
    """Window from the end of warmup to the end of the run over the first
    ``length`` metres of the corridor."""
    length = min(length, scenario.topology.length - x0)
    return GridSpec.covering(scenario.warmup, scenario.duration - scenario.warmup,
                             x0, length, dt, dx)


def replicate(scenario: Scenario, config: DetectorConfig, master_seed: int, index: int,
              spec: GridSpec) -> tuple[BinaryMap, int]:
    """Sample, simulate, grid and detect one replication."""
    try:
        concrete = sample_replication(scenario, master_seed, index)
        result = run_replication(concrete, derive_seed(master_seed, index))
    except CollisionError as exc:
        raise ReplicationError(index, exc) from exc
    grid = fill_gaps(aggregate_trajectories(result.trajectories, spec), scenario.base_params.v0)
    act, binary = detect(grid, config)
    return binary, act.n_clamped


def _replicate_star(args):
    return replicate(*args)


def run_bootstrap(scenario: Scenario, config: DetectorConfig, k: int = 100, master_seed: int = 0,
                  spec: Optional[GridSpec] = None, workers: int = 1,
                  u_band: tuple[float, float] = (0.25, 0.75),
                  keep_binaries: bool = False) -> BootstrapReport:
    """Run ``k`` replications and aggregate their SAG indicators.

    Results are reduced by replication index, so the report is the same for
    any ``workers`` count.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    spec = spec or default_grid_spec(scenario)
    start = time.perf_counter()
    jobs = [(scenario, config, master_seed, i, spec) for i in range(k)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_star, jobs))
    else:
        results = [_replicate_star(j) for j in jobs]
    binaries = [b for b, _ in results]
    pm = probability_map(binaries)
    lo, hi = u_band
    if pm.valid.any():
        u = uncertainty_fraction(pm, lo, hi)
    else:
        logger.warning("no cell is valid in every replication; U is undefined")
        u = float("nan")
    return BootstrapReport(
        k=k,
        master_seed=master_seed,
        seeds=[derive_seed(master_seed, i) for i in range(k)],
        probability=pm,
        U=u,
        u_band=(lo, hi),
        n_clamped=sum(c for _, c in results),
        runtime_s=time.perf_counter() - start,
        workers=workers,
        binaries=binaries if keep_binaries else None,
    )


def workers_from_env(default: int = 1) -> int:
    value = os.environ.get("SAGWAVE_WORKERS")
    return int(value) if value else default


def write_probability_csv(pm: ProbabilityMap, stream) -> None:
    write_map_csv(stream, PROB_TAG, pm.spec, pm.probs, pm.valid, extra={"k": pm.k})


def read_probability_csv(stream) -> ProbabilityMap:
    spec, values, valid, extra = read_map_csv(stream, PROB_TAG)
    if "k" not in extra:
        raise ValueError("bad header: missing k")
    return ProbabilityMap(spec, values, valid, int(extra["k"]))
