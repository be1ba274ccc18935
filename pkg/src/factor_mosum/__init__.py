"""MOSUM detection of multiple change points in the loadings of a factor model."""

from .errors import FactorMosumError, IngestionError, NumericalError, ValidationError
from .factor import (
    FactorCountReport,
    FactorEstimate,
    bai_ng_ic,
    eigenvalue_ratio_count,
    estimate_factors,
    stable_factor_count,
)
from .mosum import (
    ChangePointReport,
    DetectorConfig,
    GammaChoice,
    LongRunCov,
    MosumProfile,
    PipelineResult,
    asymptotic_pvalue,
    default_gamma,
    detect_changes,
    hac_long_run_cov,
    mosum_profile,
    run_pipeline,
    threshold_gumbel,
)
from .panel import Panel, load_panel, save_panel, unvech, vech
from .simlab import DgpSpec, EvalSummary, SimulatedPanel, evaluate, monte_carlo, table_config, simulate
from .volatility import OhlcSeries, load_ohlc, log_range_volatility

__version__ = "0.1.0"

__all__ = [
    "ChangePointReport",
    "DetectorConfig",
    "DgpSpec",
    "EvalSummary",
    "FactorCountReport",
    "FactorEstimate",
    "FactorMosumError",
    "GammaChoice",
    "IngestionError",
    "LongRunCov",
    "MosumProfile",
    "NumericalError",
    "OhlcSeries",
    "Panel",
    "PipelineResult",
    "SimulatedPanel",
    "ValidationError",
    "asymptotic_pvalue",
    "bai_ng_ic",
    "default_gamma",
    "detect_changes",
    "eigenvalue_ratio_count",
    "estimate_factors",
    "evaluate",
    "hac_long_run_cov",
    "load_ohlc",
    "load_panel",
    "log_range_volatility",
    "monte_carlo",
    "mosum_profile",
    "table_config",
    "run_pipeline",
    "save_panel",
    "simulate",
    "stable_factor_count",
    "threshold_gumbel",
    "unvech",
    "vech",
]
