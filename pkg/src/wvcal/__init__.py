"""Wavelet-variance calibration of inertial sensor noise models."""

__version__ = "0.1.0"

from .dataio import (
    ImuBinarySchema,
    SensorDataset,
    read_imu_binary,
    read_table,
    write_imu_binary,
)
from .estimator import FitOptions, FitResult, bootstrap_V, gmwm_fit, gof_test, param_ci
from .grammar import (
    LatentModel,
    ModelError,
    ModelSyntaxError,
    ProcessBlock,
    ar1_to_gm,
    gm_to_ar1,
    parse_model,
    render_model,
)
from .implied import ImpliedWv, implied_wv, implied_wv_jacobian
from .selection import RankingTable, auto_rank, rank_models, wic, wic_fast
from .simulate import SimSpec, simulate
from .start import dominating_process, draw_process_start, initial_guess
from .sumstats import (
    AvSeries,
    ComparisonReport,
    WvSeries,
    avar,
    compare_wvar,
    hvar,
    wvar,
    wvar_robust,
)
from .wavelets import WaveletDecomposition, dwt_haar, modwt_haar

__all__ = [
    "AvSeries",
    "ComparisonReport",
    "FitOptions",
    "FitResult",
    "ImpliedWv",
    "ImuBinarySchema",
    "LatentModel",
    "ModelError",
    "ModelSyntaxError",
    "ProcessBlock",
    "RankingTable",
    "SensorDataset",
    "SimSpec",
    "WaveletDecomposition",
    "WvSeries",
    "ar1_to_gm",
    "auto_rank",
    "avar",
    "bootstrap_V",
    "compare_wvar",
    "dominating_process",
    "draw_process_start",
    "dwt_haar",
    "gm_to_ar1",
    "gmwm_fit",
    "gof_test",
    "hvar",
    "implied_wv",
    "implied_wv_jacobian",
    "initial_guess",
    "modwt_haar",
    "param_ci",
    "parse_model",
    "rank_models",
    "read_imu_binary",
    "read_table",
    "render_model",
    "simulate",
    "wic",
    "wic_fast",
    "write_imu_binary",
    "wvar",
    "wvar_robust",
]
