"""Evolutionary trader-ensemble return forecasting with calibrated uncertainty."""

from .backtest import (
    BacktestReport,
    StrategyReturns,
    UncertaintyFilterConfig,
    compute_metrics,
    market_returns,
    rolling_backtest,
    strategy_returns,
    uncertainty_gate,
)
from .company import (
    MODE_TC,
    MODE_UTC,
    Company,
    PredictionWithUncertainty,
    TrainConfig,
    TrainSchedule,
    aggregate_predict,
    aggregate_predict_series,
    educate_tc,
    educate_utc,
    evaluate_traders,
    load_company,
    new_company,
    prune_and_generate,
    save_company,
    train,
)
from .errors import (
    ConfigError,
    HistoryError,
    MixtureError,
    PanelError,
    SingularDesignError,
    TraderCompanyError,
)
from .estimators import TraderCompanyRegressor, VarRegressor, panel_from_array
from .mixture import EMConfig, GaussianMixture, fit_em, log_likelihood
from .panels import (
    CsvFormat,
    PricePanel,
    ReturnPanel,
    WindowSpec,
    compute_log_returns,
    load_price_csv,
    load_return_csv,
    slice_window,
    sub_panel,
    write_price_csv,
    write_return_csv,
)
from .synthetic import SyntheticSpec, gen_market, gen_nonlinear, gen_shift
from .traders import (
    Activation,
    Operator,
    TermParams,
    Trader,
    TraderHyperParams,
    TraderParams,
    WeightPosterior,
    compute_signal,
    cumulative_return,
    predict_point,
    predict_with_uncertainty,
    sample_random_trader,
)
from .var import VarModel, fit_var, predict_var, select_lag_aic

__version__ = "0.1.0"
