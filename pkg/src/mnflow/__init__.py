"""Pel-recursive optical flow with a kurtosis-adaptive mixed L2/L4 norm."""

from mnflow.imagecore import (
    FlowField,
    Image,
    PgmError,
    bilinear_sample,
    dfd,
    load_pgm,
    motion_compensate,
    save_pgm,
    spatial_gradient,
)
from mnflow.hos import (
    GammaParams,
    KurtosisEstimate,
    KurtosisUndefined,
    excess_kurtosis_window,
    fourth_cumulant,
    gamma_of_kurtosis,
)
from mnflow.mnsolver import (
    ObservationSystem,
    SolverConfig,
    UpdateResult,
    assemble,
    mixed_norm_cost,
    mixed_norm_gradient,
    solve_update,
)
from mnflow.noiselab import NoiseSpec, SnrReport, degrade_to_snr, sample_noise, snr_between
from mnflow.pelrec import (
    FloError,
    PelRecConfig,
    estimate_flow,
    flow_to_color,
    predict_displacement,
    read_flo,
    write_flo,
)

__version__ = "0.1.0"
