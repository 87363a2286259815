"""Strategy simulation and performance metrics.

Positions are unit signs of the forecasts; the per-period strategy return is
the cross-stock mean of position times realised return.  The uncertainty
gate zeroes forecasts whose predictive sigma exceeds a trailing-history
quantile, so the strategy only trades names it is currently confident about.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import ConfigError, HistoryError, PanelError
from .panels import ReturnPanel, sub_panel

ANNUALIZATION_DAILY = 250.0
ANNUALIZATION_HOURLY = 1250.0


@dataclass(frozen=True)
class StrategyReturns:
    """Per-period strategy returns plus the pieces they are computed from."""

    timestamps: tuple[str, ...]
    R: np.ndarray
    positions: np.ndarray  # (S, T) in {-1, 0, +1}
    realized: np.ndarray  # (S, T)

    RECOMPUTE_TOL = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        r = np.asarray(self.R, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        real = np.asarray(self.realized, dtype=float)
        if pos.shape != real.shape or r.shape != (pos.shape[1],):
            raise PanelError("strategy return arrays have inconsistent shapes")
        if len(self.timestamps) != r.size:
            raise PanelError("timestamps do not match the return series length")
        if not np.all(np.isin(pos, (-1.0, 0.0, 1.0))):
            raise PanelError("positions must be -1, 0, or +1")
        recomputed = (pos * real).mean(axis=0)
        if np.max(np.abs(recomputed - r), initial=0.0) > self.RECOMPUTE_TOL:
            raise PanelError("R is not the cross-stock mean of position * return")
        for arr in (r, pos, real):
            arr.setflags(write=False)
        object.__setattr__(self, "R", r)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "realized", real)


@dataclass(frozen=True)
class UncertaintyFilterConfig:
    """Trailing-quantile gate on predictive sigma.

    A forecast is suppressed when its sigma exceeds the ``quantile`` level of
    that stock's previous ``lookback`` sigmas; no gating happens until
    ``min_history`` past sigmas exist.  ``invert`` flips the rule (trade only
    high-sigma names); ``pooled`` shares one threshold across stocks.
    """

    lookback: int = 250
    quantile: float = 0.9
    min_history: int = 20
    invert: bool = False
    pooled: bool = False

    def __post_init__(self):
        if self.lookback < 1:
            raise ConfigError("lookback must be >= 1")
        if not 0.0 < self.quantile < 1.0:
            raise ConfigError("quantile must be in (0, 1)")
        if self.min_history < 1:
            raise ConfigError("min_history must be >= 1")


@dataclass(frozen=True)
class BacktestReport:
    """Annualised performance metrics and the cumulative return curve.

    ``mdd`` is the additive peak-to-trough drop of the cumulative curve
    (nonnegative; larger is worse).  ``mdd_ratio`` is the raw ratio-form
    drawdown kept for reference; it misbehaves when the curve crosses zero.
    ``sr``/``cr`` are None when their denominators vanish.
    """

    ar: float
    risk: float
    sr: Optional[float]
    mdd: float
    mdd_ratio: Optional[float]
    cr: Optional[float]
    t_y: float
    cumulative: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "ar": self.ar,
            "risk": self.risk,
            "sr": self.sr,
            "mdd": self.mdd,
            "mdd_ratio": self.mdd_ratio,
            "cr": self.cr,
            "t_y": self.t_y,
        }


def strategy_returns(predictions: np.ndarray, realized: ReturnPanel) -> StrategyReturns:
    """Sign-the-forecast strategy: R[t] = mean_i sign(pred[i,t]) * r[i,t].

    A zero forecast takes no position but still counts in the denominator.
    """
    pred = np.asarray(predictions, dtype=float)
    if pred.shape != realized.returns.shape:
        raise PanelError(
            f"predictions shape {pred.shape} does not match realised returns "
            f"shape {realized.returns.shape}"
        )
    positions = np.sign(pred)
    r = (positions * realized.returns).mean(axis=0)
    return StrategyReturns(
        timestamps=realized.timestamps,
        R=r,
        positions=positions,
        realized=realized.returns,
    )


def market_returns(realized: ReturnPanel) -> StrategyReturns:
    """Buy-everything baseline: R[t] is the plain cross-stock mean return."""
    positions = np.ones_like(realized.returns)
    return StrategyReturns(
        timestamps=realized.timestamps,
        R=realized.returns.mean(axis=0),
        positions=positions,
        realized=realized.returns,
    )


def uncertainty_gate(
    predictions: np.ndarray, sigmas: np.ndarray, cfg: UncertaintyFilterConfig
) -> np.ndarray:
    """Zero out forecasts whose sigma exceeds its trailing-quantile threshold.

    Thresholds use strictly past sigmas only, so gating never looks ahead,
    and the gated strategy never holds more positions than the ungated one.
    """
    pred = np.asarray(predictions, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    if pred.shape != sig.shape:
        raise PanelError("predictions and sigmas must have the same shape")
    gated = pred.copy()
    n_periods = pred.shape[1]
    for t in range(n_periods):
        if t < cfg.min_history:
            continue
        lo = max(0, t - cfg.lookback)
        window = sig[:, lo:t]
        if cfg.pooled:
            threshold = np.quantile(window, cfg.quantile)
        else:
            threshold = np.quantile(window, cfg.quantile, axis=1)
        exceeded = sig[:, t] > threshold
        suppress = ~exceeded if cfg.invert else exceeded
        gated[suppress, t] = 0.0
    return gated


def compute_metrics(returns: np.ndarray, t_y: float) -> BacktestReport:
    """Annualised return/risk/Sharpe, max drawdown, and drawdown-adjusted return."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ConfigError("metrics need a 1-D return series of length >= 2")
    if t_y <= 0:
        raise ConfigError("t_y must be positive")
    ar = float(t_y * r.mean())
    risk = float(np.sqrt(t_y) * r.std(ddof=1))
    sr = ar / risk if risk > 0 else None
    cumulative = np.cumsum(r)
    running_peak = np.maximum.accumulate(cumulative)
    mdd = float(np.max(running_peak - cumulative))
    mdd_ratio = _ratio_drawdown(cumulative)
    cr = ar / abs(mdd) if mdd != 0 else None
    return BacktestReport(
        ar=ar,
        risk=risk,
        sr=sr,
        mdd=mdd,
        mdd_ratio=mdd_ratio,
        cr=cr,
        t_y=float(t_y),
        cumulative=tuple(float(c) for c in cumulative),
    )


def _ratio_drawdown(cumulative: np.ndarray) -> Optional[float]:
    # Raw ratio form max over t < s of (1 - C[t]/C[s]); undefined terms
    # (C[s] = 0) are skipped.  Reference only.
    best = None
    for s in range(1, cumulative.size):
        c_s = cumulative[s]
        if c_s == 0.0:
            continue
        candidate = float(np.max(1.0 - cumulative[:s] / c_s))
        if best is None or candidate > best:
            best = candidate
    return best


class OneStepModel(Protocol):
    """Anything that can forecast next-period returns for a set of stocks."""

    def predict_step(
        self, panel: ReturnPanel, t: int
    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Forecast returns at t+1 from rows <= t: (means, sigmas-or-None)."""
        ...


ModelFactory = Callable[[ReturnPanel, int], OneStepModel]


def rolling_backtest(
    model_factory: ModelFactory,
    panel: ReturnPanel,
    window: int,
    retrain_every: int,
    t_start: int,
    t_end: int,
    targets: Optional[list[int]] = None,
) -> tuple[np.ndarray, Optional[np.ndarray], StrategyReturns]:
    """Walk-forward harness: retrain on the trailing window, predict forward.

    At every ``retrain_every``-th step starting at ``t_start`` the factory is
    called with the trailing ``window`` observations (and the current time,
    for seeding); the fitted model then serves predictions until the next
    retrain point.  Predictions of the return at time ``tau`` use panel rows
    strictly before ``tau``.  Returns the stitched prediction matrix, the
    stitched sigma matrix (None when the model provides no sigmas), and the
    resulting sign strategy over ``targets``.
    """
    if window < 1:
        raise ConfigError("window must be >= 1")
    if retrain_every < 1:
        raise ConfigError("retrain_every must be >= 1")
    if t_start - window < 0:
        raise HistoryError(
            f"first prediction at t={t_start} needs a trailing window of {window}"
        )
    if not t_start < t_end <= panel.num_periods:
        raise HistoryError(f"invalid prediction range [{t_start}, {t_end})")
    if targets is None:
        targets = list(range(panel.num_stocks))
    n_steps = t_end - t_start
    predictions = np.empty((len(targets), n_steps))
    sigmas = np.empty((len(targets), n_steps))
    have_sigmas = True
    model: Optional[OneStepModel] = None
    for k, tau in enumerate(range(t_start, t_end)):
        if k % retrain_every == 0:
            train_panel = sub_panel(panel, tau - window, tau)
            model = model_factory(train_panel, tau)
        mu, sig = model.predict_step(panel, tau - 1)
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (len(targets),):
            raise ConfigError(
                f"model predicted {mu.shape} values for {len(targets)} targets"
            )
        predictions[:, k] = mu
        if sig is None:
            have_sigmas = False
        else:
            sigmas[:, k] = sig
    realized = ReturnPanel(
        symbols=tuple(panel.symbols[i] for i in targets),
        timestamps=panel.timestamps[t_start:t_end],
        returns=panel.returns[np.asarray(targets, dtype=int), t_start:t_end],
    )
    strategy = strategy_returns(predictions, realized)
    return predictions, (sigmas if have_sigmas else None), strategy
