"""Synthetic return panels: a nonlinear bivariate system, a regime-shift
series driven by it, and a multi-stock stress panel with injected shifts.

All generators are pure functions of their spec: noise for each series comes
from an independent named substream of the seed, so adding one series never
perturbs the others.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .errors import ConfigError
from .panels import ReturnPanel
from .rng import substream


@dataclass(frozen=True)
class SyntheticSpec:
    """Sample count, seed, noise scale, and (for the shift series) shift time.

    ``noise_sd`` is the standard deviation of the Gaussian innovations.
    ``burn_in`` leading samples are generated and discarded so the analysed
    series starts near the stationary regime.
    """

    n_samples: int
    seed: int = 0
    noise_sd: float = 0.1
    shift_time: int | None = None
    burn_in: int = 50

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.noise_sd <= 0:
            raise ConfigError("noise_sd must be positive")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")


def _timestamps(n: int) -> list[str]:
    start = date(2000, 1, 3)
    return [(start + timedelta(days=k)).isoformat() for k in range(n)]


def gen_nonlinear(spec: SyntheticSpec) -> ReturnPanel:
    """Two coupled series with product, min, and max interactions.

        y0(t) = 0.5 y0(t-1) - 0.5 y0(t-1) y1(t-1) + 0.1 min(y0(t-1), y1(t-1)) + e0(t)
        y1(t) = -0.2 y1(t-1) + 0.8 y0(t-1) + 0.5 max(y0(t-1), y1(t-1)) + e1(t)

    starting from zeros, with i.i.d. N(0, noise_sd^2) innovations.
    """
    total = spec.burn_in + spec.n_samples
    eps0 = substream(spec.seed, "noise", "y0").normal(0.0, spec.noise_sd, size=total)
    eps1 = substream(spec.seed, "noise", "y1").normal(0.0, spec.noise_sd, size=total)
    y0 = np.zeros(total)
    y1 = np.zeros(total)
    y0[0] = eps0[0]
    y1[0] = eps1[0]
    for t in range(1, total):
        a, b = y0[t - 1], y1[t - 1]
        y0[t] = 0.5 * a - 0.5 * a * b + 0.1 * min(a, b) + eps0[t]
        y1[t] = -0.2 * b + 0.8 * a + 0.5 * max(a, b) + eps1[t]
    returns = np.vstack([y0, y1])[:, spec.burn_in :]
    return ReturnPanel(
        symbols=("y0", "y1"),
        timestamps=_timestamps(spec.n_samples),
        returns=returns,
    )


def gen_shift(spec: SyntheticSpec, base_panel: ReturnPanel) -> ReturnPanel:
    """Extend a (y0, y1) panel with a regime-switching third series.

        y2(t) = y0(t-1) + y1(t-1) + e2(t)   for t <  shift_time
        y2(t) = y0(t-1) - y1(t-1) + e2(t)   for t >= shift_time

    The sign of the y1 coefficient flips at ``shift_time`` (indices on the
    base panel).  A shift time at or past the end of the panel leaves the
    pre-shift regime in force throughout.  ``y2(0)`` has no lagged inputs and
    is pure noise.
    """
    if spec.shift_time is None or spec.shift_time < 1:
        raise ConfigError("gen_shift needs shift_time >= 1")
    for name in ("y0", "y1"):
        if name not in base_panel.symbols:
            raise ConfigError(f"base panel is missing series {name!r}")
    n = base_panel.num_periods
    y0 = base_panel.returns[base_panel.symbol_index("y0")]
    y1 = base_panel.returns[base_panel.symbol_index("y1")]
    eps2 = substream(spec.seed, "noise", "y2").normal(0.0, spec.noise_sd, size=n)
    y2 = np.empty(n)
    y2[0] = eps2[0]
    t = np.arange(1, n)
    sign = np.where(t < spec.shift_time, 1.0, -1.0)
    y2[1:] = y0[:-1] + sign * y1[:-1] + eps2[1:]
    return ReturnPanel(
        symbols=base_panel.symbols + ("y2",),
        timestamps=base_panel.timestamps,
        returns=np.vstack([base_panel.returns, y2]),
    )


def gen_market(
    n_stocks: int,
    n_samples: int,
    seed: int = 0,
    noise_sd: float = 0.01,
    shift_times: tuple[int, ...] = (),
    burn_in: int = 20,
) -> ReturnPanel:
    """Multi-stock panel with cross-stock lead-lag structure and regime flips.

    Stock i loads on yesterday's market average and on its neighbour's lagged
    return; at each time in ``shift_times`` the neighbour coefficient flips
    sign for the odd-indexed half of the stocks.  Used to stress-test the
    end-to-end pipeline on a panel wide enough to trade.
    """
    if n_stocks < 2:
        raise ConfigError("n_stocks must be >= 2")
    if n_samples < 2:
        raise ConfigError("n_samples must be >= 2")
    coef_rng = substream(seed, "market", "coefficients")
    market_beta = coef_rng.uniform(0.1, 0.3, size=n_stocks)
    neighbour_beta = coef_rng.uniform(0.2, 0.4, size=n_stocks)
    noise = substream(seed, "market", "noise").normal(
        0.0, noise_sd, size=(n_stocks, burn_in + n_samples)
    )
    total = burn_in + n_samples
    shift_set = {int(s) + burn_in for s in shift_times}
    flip = np.ones(n_stocks)
    r = np.zeros((n_stocks, total))
    r[:, 0] = noise[:, 0]
    for t in range(1, total):
        if t in shift_set:
            flip[1::2] = -flip[1::2]
        market = r[:, t - 1].mean()
        neighbour = np.roll(r[:, t - 1], 1)
        r[:, t] = market_beta * market + flip * neighbour_beta * neighbour + noise[:, t]
    symbols = tuple(f"s{i:02d}" for i in range(n_stocks))
    return ReturnPanel(
        symbols=symbols,
        timestamps=_timestamps(n_samples),
        returns=r[:, burn_in:],
    )
