"""Dynamic factor analysis of return panels.

Estimates latent common factors from panels of returns through a state-space
Kalman filter and maximum likelihood, validates them against principal
components and CAPM betas, selects model orders with information criteria,
and feeds the factors into a mixed-frequency GDP nowcasting bridge.
"""

from .exceptions import DataError, NumericalError
from .panels import (
    PricePanel,
    ReturnsPanel,
    compute_returns,
    filter_missing,
    load_price_csv,
    load_returns_csv,
    write_returns_csv,
)
from .pca import PCAResult, pca_residual_mse, principal_components, sample_covariance
from .statespace import (
    DFMParams,
    DFMSpec,
    StateSpaceModel,
    StationarityReport,
    assemble_state_space,
    check_stationarity,
    disassemble_state_space,
    implied_return_variance,
    params_from_json,
    params_to_json,
    stationary_state_covariance,
)
from .kalman import (
    FilterResult,
    SmootherResult,
    default_initialization,
    kalman_filter,
    kalman_smoother,
    log_likelihood,
)
from .simulate import SimOutput, simulate_dfm
from .criteria import CriteriaTable, OrderCandidate, bai_ng_table, bic, order_search, select_order
from .estimation import (
    FitOptions,
    FittedModel,
    ParamStdErrors,
    ParamTransform,
    fit_mle,
    initialize_params,
    standard_errors,
)
from .validation import CapmResult, capm_betas, correlation, regress
from .nowcast import (
    BridgeModel,
    MonthlyIndicators,
    QuarterlySeries,
    fit_ar1,
    fit_bridge,
    load_gdp_csv,
    monthly_indicators,
    rmse,
)

__all__ = [
    "DataError",
    "NumericalError",
    "PricePanel",
    "ReturnsPanel",
    "compute_returns",
    "filter_missing",
    "load_price_csv",
    "load_returns_csv",
    "write_returns_csv",
    "PCAResult",
    "sample_covariance",
    "principal_components",
    "pca_residual_mse",
    "DFMSpec",
    "DFMParams",
    "StateSpaceModel",
    "StationarityReport",
    "assemble_state_space",
    "disassemble_state_space",
    "check_stationarity",
    "stationary_state_covariance",
    "implied_return_variance",
    "params_to_json",
    "params_from_json",
    "FilterResult",
    "SmootherResult",
    "default_initialization",
    "kalman_filter",
    "kalman_smoother",
    "log_likelihood",
    "SimOutput",
    "simulate_dfm",
    "CriteriaTable",
    "OrderCandidate",
    "bai_ng_table",
    "bic",
    "order_search",
    "select_order",
    "FitOptions",
    "FittedModel",
    "ParamStdErrors",
    "ParamTransform",
    "fit_mle",
    "initialize_params",
    "standard_errors",
    "CapmResult",
    "capm_betas",
    "correlation",
    "regress",
    "BridgeModel",
    "MonthlyIndicators",
    "QuarterlySeries",
    "fit_ar1",
    "fit_bridge",
    "load_gdp_csv",
    "monthly_indicators",
    "rmse",
]

__version__ = "0.1.0"
