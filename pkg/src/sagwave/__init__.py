"""Stop-and-go wave reconstruction, detection and bootstrap uncertainty maps."""

__version__ = "0.1.0"

from .detector import (ActivationMap, BinaryMap, DetectorConfig, Kernel, build_kernel,
                       classify, detect, kernel_activation)
from .grid import (GridSpec, Neighborhood, TimeSpaceGrid, aggregate_trajectories,
                   extract_neighborhood, fill_gaps)
from .ingest import (DetectorSeries, parse_detector_csv, series_to_grid, virtual_detectors,
                     write_detector_csv)
from .simulator import (IdmParams, PerturbationSpec, Ring, Scenario, Stretch, Trajectory,
                        VehicleState, idm_accel, run_replication, sample_replication, step)
from .uq import (BootstrapReport, ProbabilityMap, probability_map, run_bootstrap,
                 uncertainty_fraction)
from .render import ColorScale, boost_overlay, render_grid
