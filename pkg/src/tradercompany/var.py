"""Vector autoregression baseline: least-squares fit, AIC lag selection, prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, HistoryError, SingularDesignError
from .panels import ReturnPanel


@dataclass(frozen=True)
class VarModel:
    """VAR(p): intercept plus ``p`` lag coefficient matrices and residual covariance."""

    lag: int
    intercept: np.ndarray
    coefficients: np.ndarray  # (p, S, S); coefficients[k-1] multiplies y[t-k]
    residual_cov: np.ndarray

    def __post_init__(self):
        if self.lag < 1:
            raise ConfigError("lag must be >= 1")
        s = self.intercept.shape[0]
        if self.coefficients.shape != (self.lag, s, s):
            raise ConfigError("coefficient array shape inconsistent with lag/intercept")
        if self.residual_cov.shape != (s, s):
            raise ConfigError("residual covariance shape inconsistent")

    @property
    def num_stocks(self) -> int:
        return self.intercept.shape[0]

    @property
    def num_parameters(self) -> int:
        s = self.num_stocks
        return s * (s * self.lag + 1)


def _design(returns: np.ndarray, p: int, first_row: int):
    """Rows t = first_row..T-1: target y[t], regressors [1, y[t-1], ..., y[t-p]]."""
    s, t_total = returns.shape
    rows = np.arange(first_row, t_total)
    y = returns[:, rows].T
    x = np.empty((rows.size, 1 + s * p))
    x[:, 0] = 1.0
    for k in range(1, p + 1):
        x[:, 1 + (k - 1) * s : 1 + k * s] = returns[:, rows - k].T
    return x, y


def _fit_from_rows(returns: np.ndarray, p: int, first_row: int) -> VarModel:
    s, t_total = returns.shape
    n_rows = t_total - first_row
    if n_rows <= s * p + 1:
        raise HistoryError(
            f"need more than {s * p + 1} usable rows to fit VAR({p}), got {n_rows}"
        )
    x, y = _design(returns, p, first_row)
    beta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise SingularDesignError(
            f"VAR({p}) design matrix is rank deficient (rank {rank} of "
            f"{x.shape[1]}); use fewer lags"
        )
    resid = y - x @ beta
    resid_cov = resid.T @ resid / n_rows
    coefficients = np.stack(
        [beta[1 + (k - 1) * s : 1 + k * s, :].T for k in range(1, p + 1)]
    )
    return VarModel(
        lag=p,
        intercept=beta[0].copy(),
        coefficients=coefficients,
        residual_cov=resid_cov,
    )


def fit_var(panel: ReturnPanel, p: int) -> VarModel:
    """Least-squares VAR(p) on the whole panel.

    Residual covariance uses denominator T - p, the number of fitted rows.
    """
    if p < 1:
        raise ConfigError("lag must be >= 1")
    return _fit_from_rows(panel.returns, p, p)


def var_aic(model: VarModel, t_eff: int) -> float:
    """Gaussian AIC: log det residual covariance plus 2 * n_params / t_eff."""
    sign, logdet = np.linalg.slogdet(model.residual_cov)
    if sign <= 0:
        return np.inf
    return float(logdet + 2.0 * model.num_parameters / t_eff)


def select_lag_aic(panel: ReturnPanel, p_max: int) -> int:
    """Smallest-AIC lag among 1..p_max, fitted on a common sample.

    All candidates use rows starting at p_max so their likelihoods are
    comparable; ties go to the smaller lag.
    """
    if p_max < 1:
        raise ConfigError("p_max must be >= 1")
    t_eff = panel.num_periods - p_max
    aics = []
    for p in range(1, p_max + 1):
        model = _fit_from_rows(panel.returns, p, p_max)
        aics.append(var_aic(model, t_eff))
    return int(np.argmin(aics)) + 1


def predict_var(model: VarModel, panel: ReturnPanel, t: int) -> np.ndarray:
    """One-step conditional mean for time t+1 given returns through t."""
    if t < model.lag:
        raise HistoryError(
            f"prediction at t={t} needs at least {model.lag} periods of history"
        )
    if t >= panel.num_periods:
        raise HistoryError(
            f"t={t} out of range for a panel with {panel.num_periods} periods"
        )
    out = model.intercept.copy()
    for k in range(1, model.lag + 1):
        out += model.coefficients[k - 1] @ panel.returns[:, t - k + 1]
    return out
