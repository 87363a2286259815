"""Scikit-learn style estimators wrapping the forecasting machinery.

``X`` is a time-ordered (T, S) matrix of log returns, rows = periods and
columns = stocks, so the estimators compose with the wider ecosystem
(``get_params``/``set_params``/``clone`` all work).  Predictions are aligned
to the period they forecast: ``predict(X)[t]`` estimates ``X[t, target]``
using rows strictly before ``t``; entries with insufficient history are NaN.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .company import (
    MODE_UTC,
    Company,
    TrainConfig,
    TrainSchedule,
    aggregate_predict_series,
    new_company,
    train,
)
from .mixture import EMConfig
from .errors import ConfigError
from .panels import ReturnPanel
from .rng import substream
from .traders import TraderHyperParams
from .var import VarModel, fit_var, predict_var, select_lag_aic


def panel_from_array(x: np.ndarray, symbols=None) -> ReturnPanel:
    """Wrap a (T, S) return matrix in a panel with synthetic labels."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ConfigError("expected a 2-D (periods, stocks) matrix")
    t, s = x.shape
    if symbols is None:
        symbols = tuple(f"s{i:02d}" for i in range(s))
    timestamps = tuple(f"t{k:08d}" for k in range(t))
    return ReturnPanel(symbols=symbols, timestamps=timestamps, returns=x.T)


def _as_panel(x) -> ReturnPanel:
    if isinstance(x, ReturnPanel):
        return x
    return panel_from_array(check_array(x, ensure_min_samples=2))


class TraderCompanyRegressor(BaseEstimator, RegressorMixin):
    """One-step-ahead return forecaster built on a trained trader population.

    Parameters mirror the training configuration: ``mode`` selects plain
    point weights ("tc") or Gaussian weight posteriors ("utc"); only the
    latter provides predictive sigmas.
    """

    def __init__(
        self,
        target: int = 0,
        mode: str = MODE_UTC,
        n_traders: int = 200,
        rounds: int = 5,
        prune_ratio: float = 0.1,
        fit_rounds: int = 2,
        noise_var: float = 0.01,
        prior_var: float = 1.0,
        gm_components: int = 3,
        max_terms: int = 10,
        max_delay: int = 10,
        corr_window: int = 10,
        random_state: int = 0,
    ):
        self.target = target
        self.mode = mode
        self.n_traders = n_traders
        self.rounds = rounds
        self.prune_ratio = prune_ratio
        self.fit_rounds = fit_rounds
        self.noise_var = noise_var
        self.prior_var = prior_var
        self.gm_components = gm_components
        self.max_terms = max_terms
        self.max_delay = max_delay
        self.corr_window = corr_window
        self.random_state = random_state

    def _hyper(self, num_stocks: int) -> TraderHyperParams:
        return TraderHyperParams(
            num_stocks=num_stocks,
            target_stock=self.target,
            max_terms=self.max_terms,
            max_delay=self.max_delay,
            corr_window=self.corr_window,
        )

    def _train_cfg(self) -> TrainConfig:
        return TrainConfig(
            prune_ratio=self.prune_ratio,
            fit_rounds=self.fit_rounds,
            noise_var=self.noise_var,
            prior_var=self.prior_var,
            gm_components=self.gm_components,
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        panel = _as_panel(X)
        hyper = self._hyper(panel.num_stocks)
        company = new_company(self.mode, hyper, self._train_cfg(), self.n_traders)
        schedule = TrainSchedule(
            t_start=0, t_end=panel.num_periods - 1, rounds=self.rounds
        )
        self.company_, self.train_log_ = train(company, panel, schedule)
        self.n_features_in_ = panel.num_stocks
        return self

    def _min_prediction_time(self) -> int:
        return self.company_.hyper.min_history + 1

    def predict(self, X, return_std: bool = False):
        """Forecast each period's target return from strictly earlier rows."""
        check_is_fitted(self, "company_")
        if return_std and self.company_.mode != MODE_UTC:
            raise ConfigError("predictive sigmas are only available in utc mode")
        panel = _as_panel(X)
        t0 = self._min_prediction_time()
        out = np.full(panel.num_periods, np.nan)
        std = np.full(panel.num_periods, np.nan)
        if panel.num_periods > t0:
            ts = np.arange(t0, panel.num_periods)
            mu, _, _, sigma = aggregate_predict_series(self.company_, panel, ts - 1)
            out[t0:] = mu
            std[t0:] = sigma
        if return_std:
            return out, std
        return out


class VarRegressor(BaseEstimator, RegressorMixin):
    """Vector-autoregression one-step forecaster, optionally AIC-selected."""

    def __init__(self, lag: int = 1, select_by_aic: bool = False, max_lag: int = 10):
        self.lag = lag
        self.select_by_aic = select_by_aic
        self.max_lag = max_lag

    def fit(self, X, y=None):
        panel = _as_panel(X)
        if self.select_by_aic:
            self.lag_ = select_lag_aic(panel, self.max_lag)
        else:
            self.lag_ = self.lag
        self.model_ = fit_var(panel, self.lag_)
        self.n_features_in_ = panel.num_stocks
        return self

    def predict(self, X):
        """(T, S) matrix: row t forecasts period t from rows before it."""
        check_is_fitted(self, "model_")
        panel = _as_panel(X)
        out = np.full((panel.num_periods, panel.num_stocks), np.nan)
        for t in range(self.lag_ + 1, panel.num_periods):
            out[t] = predict_var(self.model_, panel, t - 1)
        return out


# ---------------------------------------------------------------------------
# Adapters used by the walk-forward harness


class CompanyGroupModel:
    """One trained company per target stock, exposed as a one-step model."""

    def __init__(self, companies: list[Company], report_sigma: bool):
        self.companies = list(companies)
        self.report_sigma = report_sigma

    def predict_step(self, panel: ReturnPanel, t: int):
        ts = np.array([t])
        mus = np.empty(len(self.companies))
        sigmas = np.empty(len(self.companies))
        for i, company in enumerate(self.companies):
            mu, _, _, sigma = aggregate_predict_series(company, panel, ts)
            mus[i] = mu[0]
            sigmas[i] = sigma[0]
        return mus, (sigmas if self.report_sigma else None)


class VarGroupModel:
    """Fitted VAR restricted to the target stocks; provides no sigmas."""

    def __init__(self, model: VarModel, targets: list[int]):
        self.model = model
        self.targets = list(targets)

    def predict_step(self, panel: ReturnPanel, t: int):
        full = predict_var(self.model, panel, t)
        return full[self.targets], None


def company_model_factory(
    mode: str,
    targets: list[int],
    train_cfg: TrainConfig,
    n_traders: int,
    rounds: int,
    max_terms: int = 10,
    max_delay: int = 10,
    corr_window: int = 10,
    em_config: EMConfig = EMConfig(),
    warm_start: bool = False,
    warm_rounds: int = 1,
):
    """ModelFactory training one company per target on each rolling window.

    With ``warm_start`` the population persists across retrain points: the
    first call trains from scratch for ``rounds`` rounds, and every later
    call advances the existing population by ``warm_rounds`` educate and
    prune rounds on the new window (the sequential-update protocol).  With
    it off, every retrain trains a fresh company.  Every retrain point and
    target gets its own seed substream derived from the config seed, so
    walks are reproducible end to end.
    """
    state: dict[int, Company] = {}

    def _cfg_for(t: int, target: int) -> TrainConfig:
        child_seed = int(substream(train_cfg.seed, "retrain", t, target).integers(2**31))
        return TrainConfig(
            prune_ratio=train_cfg.prune_ratio,
            fit_rounds=train_cfg.fit_rounds,
            noise_var=train_cfg.noise_var,
            prior_var=train_cfg.prior_var,
            gm_components=train_cfg.gm_components,
            seed=child_seed,
        )

    def factory(train_panel: ReturnPanel, t: int) -> CompanyGroupModel:
        companies = []
        for target in targets:
            hyper = TraderHyperParams(
                num_stocks=train_panel.num_stocks,
                target_stock=target,
                max_terms=max_terms,
                max_delay=max_delay,
                corr_window=corr_window,
            )
            cfg = _cfg_for(t, target)
            schedule_rounds = rounds
            if warm_start and target in state:
                company = replace(state[target], train_cfg=cfg)
                schedule_rounds = warm_rounds
            else:
                company = new_company(mode, hyper, cfg, n_traders)
            schedule = TrainSchedule(
                t_start=0, t_end=train_panel.num_periods - 1, rounds=schedule_rounds
            )
            company, _ = train(company, train_panel, schedule, em_config)
            if warm_start:
                state[target] = company
            companies.append(company)
        return CompanyGroupModel(companies, report_sigma=(mode == MODE_UTC))

    return factory


def var_model_factory(targets: list[int], lag: int = 1, select_by_aic: bool = False, max_lag: int = 10):
    """ModelFactory fitting a VAR on each rolling window."""

    def factory(train_panel: ReturnPanel, t: int) -> VarGroupModel:
        p = select_lag_aic(train_panel, max_lag) if select_by_aic else lag
        return VarGroupModel(fit_var(train_panel, p), targets)

    return factory
