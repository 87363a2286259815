"""Traders: weighted sums of nonlinear terms over lagged returns.

A trader forecasts the next-period return of one target stock as

    prediction(t) = sum_j  m[j] * A_j(O_j(r[P_j, t - D_j], r[Q_j, t - F_j]))

where each term applies an activation ``A_j`` to a binary operator ``O_j``
over two lagged stock returns.  The weight vector is carried as a Gaussian
(mean ``m``, covariance ``Sigma``), so a trader reports both a mean and a
variance for its forecast; the plain point-forecasting trader is the
degenerate case ``Sigma = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, HistoryError
from .panels import ReturnPanel

DEFAULT_CORR_WINDOW = 10

# Operands fed to exp() are clamped to this band so evolved formulas cannot
# produce inf/overflow signals.
EXP_CLAMP = 20.0


class Activation(str, Enum):
    IDENTITY = "identity"
    TANH = "tanh"
    EXP = "exp"
    SIGN = "sign"
    RELU = "relu"


class Operator(str, Enum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    LEFT = "left"
    RIGHT = "right"
    MAX = "max"
    MIN = "min"
    GREATER = "greater"
    LESS = "less"
    CORR = "corr"


# Canonical orders; these index the enums inside the continuous encoding used
# by the prune-and-generate resampler, so they must stay stable.
ACTIVATIONS: tuple[Activation, ...] = tuple(Activation)
OPERATORS: tuple[Operator, ...] = tuple(Operator)


def _activate(act: Activation, v: np.ndarray) -> np.ndarray:
    if act is Activation.IDENTITY:
        return v
    if act is Activation.TANH:
        return np.tanh(v)
    if act is Activation.EXP:
        return np.exp(np.clip(v, -EXP_CLAMP, EXP_CLAMP))
    if act is Activation.SIGN:
        return np.sign(v)
    if act is Activation.RELU:
        return np.maximum(v, 0.0)
    raise ConfigError(f"unknown activation {act!r}")


def _apply_binary(op: Operator, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if op is Operator.ADD:
        return x + y
    if op is Operator.SUB:
        return x - y
    if op is Operator.MUL:
        return x * y
    if op is Operator.LEFT:
        return x
    if op is Operator.RIGHT:
        return y
    if op is Operator.MAX:
        return np.maximum(x, y)
    if op is Operator.MIN:
        return np.minimum(x, y)
    if op is Operator.GREATER:
        return np.sign(x - y)
    if op is Operator.LESS:
        return np.sign(y - x)
    raise ConfigError(f"unknown binary operator {op!r}")


@dataclass(frozen=True)
class TermParams:
    """One formula term: stocks ``p, q``, delays ``d, f``, operator, activation."""

    p: int
    q: int
    d: int
    f: int
    op: Operator
    act: Activation

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ConfigError("stock indices must be nonnegative")
        if self.d < 0 or self.f < 0:
            raise ConfigError("delays must be nonnegative")


@dataclass(frozen=True)
class TraderParams:
    """Discrete structure of a trader: target stock plus its formula terms."""

    target_stock: int
    terms: tuple[TermParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.terms) < 1:
            raise ConfigError("a trader needs at least one term")
        if self.target_stock < 0:
            raise ConfigError("target_stock must be nonnegative")

    @property
    def num_terms(self) -> int:
        return len(self.terms)


def min_valid_time(params: TraderParams, corr_window: int = DEFAULT_CORR_WINDOW) -> int:
    """Earliest time index at which every term of ``params`` can be evaluated."""
    worst = 0
    for term in params.terms:
        need = max(term.d, term.f)
        if term.op is Operator.CORR:
            need += corr_window - 1
        worst = max(worst, need)
    return worst


def _corr_term(
    returns: np.ndarray, term: TermParams, ts: np.ndarray, corr_window: int
) -> np.ndarray:
    # Pearson correlation of the trailing windows ending at t-d and t-f.
    wins_p = sliding_window_view(returns[term.p], corr_window)
    wins_q = sliding_window_view(returns[term.q], corr_window)
    a = wins_p[ts - term.d - (corr_window - 1)]
    b = wins_q[ts - term.f - (corr_window - 1)]
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    cov = (ac * bc).mean(axis=1)
    sa = np.sqrt((ac * ac).mean(axis=1))
    sb = np.sqrt((bc * bc).mean(axis=1))
    denom = sa * sb
    out = np.zeros(len(ts))
    ok = denom > 0
    out[ok] = cov[ok] / denom[ok]
    return out


def signal_matrix(
    params: TraderParams,
    panel: ReturnPanel,
    ts: np.ndarray,
    corr_window: int = DEFAULT_CORR_WINDOW,
) -> np.ndarray:
    """Evaluate all terms at each time in ``ts``; returns a (len(ts), M) matrix.

    Row ``k`` is the signal vector z(ts[k]) whose dot product with the weight
    mean is the trader's forecast of the return at ``ts[k] + 1``.
    """
    ts = np.asarray(ts, dtype=int)
    if ts.size and int(ts.max()) >= panel.num_periods:
        raise HistoryError(
            f"time index {int(ts.max())} out of range for a panel with "
            f"{panel.num_periods} periods"
        )
    returns = panel.returns
    z = np.empty((ts.size, params.num_terms))
    for j, term in enumerate(params.terms):
        if term.p >= panel.num_stocks or term.q >= panel.num_stocks:
            raise HistoryError(
                f"term {j} references stock {max(term.p, term.q)} but the panel "
                f"has only {panel.num_stocks} stocks"
            )
        need = max(term.d, term.f)
        if term.op is Operator.CORR:
            need += corr_window - 1
        if ts.size and int(ts.min()) < need:
            raise HistoryError(
                f"term {j} needs {need} periods of history; earliest valid "
                f"t is {min_valid_time(params, corr_window)}, requested {int(ts.min())}"
            )
        if term.op is Operator.CORR:
            v = _corr_term(returns, term, ts, corr_window)
        else:
            x = returns[term.p, ts - term.d]
            y = returns[term.q, ts - term.f]
            v = _apply_binary(term.op, x, y)
        z[:, j] = _activate(term.act, v)
    return z


def compute_signal(
    params: TraderParams,
    panel: ReturnPanel,
    t: int,
    corr_window: int = DEFAULT_CORR_WINDOW,
) -> np.ndarray:
    """Signal vector z(t) of length M."""
    return signal_matrix(params, panel, np.array([t]), corr_window)[0]


@dataclass(frozen=True)
class WeightPosterior:
    """Gaussian over term weights: mean vector and PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    SYMMETRY_TOL = 1e-12
    EIGENVALUE_FLOOR = -1e-10

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.ndim != 1:
            raise ConfigError("weight mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ConfigError(
                f"weight covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ConfigError("weight posterior contains non-finite entries")
        if np.max(np.abs(cov - cov.T), initial=0.0) > self.SYMMETRY_TOL:
            raise ConfigError("weight covariance is not symmetric")
        if cov.size and np.linalg.eigvalsh(cov).min() < self.EIGENVALUE_FLOOR:
            raise ConfigError("weight covariance is not positive semi-definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def point(cls, mean) -> "WeightPosterior":
        """Degenerate posterior with zero covariance (plain point weights)."""
        mean = np.asarray(mean, dtype=float)
        return cls(mean=mean, cov=np.zeros((mean.size, mean.size)))

    @classmethod
    def isotropic(cls, mean, scale: float) -> "WeightPosterior":
        mean = np.asarray(mean, dtype=float)
        return cls(mean=mean, cov=float(scale) * np.eye(mean.size))

    @property
    def num_terms(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class Trader:
    params: TraderParams
    weights: WeightPosterior

    def __post_init__(self):
        if self.weights.num_terms != self.params.num_terms:
            raise ConfigError(
                f"weight posterior has {self.weights.num_terms} entries for "
                f"{self.params.num_terms} terms"
            )


def predict_point(
    trader: Trader, panel: ReturnPanel, t: int, corr_window: int = DEFAULT_CORR_WINDOW
) -> float:
    """Mean forecast m'z(t) of the target's return at t+1."""
    z = compute_signal(trader.params, panel, t, corr_window)
    return float(trader.weights.mean @ z)


def predict_with_uncertainty(
    trader: Trader, panel: ReturnPanel, t: int, corr_window: int = DEFAULT_CORR_WINDOW
) -> tuple[float, float]:
    """Forecast mean and standard deviation: (m'z, sqrt(z' Sigma z)).

    Tiny negative variances from round-off are clamped to zero.
    """
    z = compute_signal(trader.params, panel, t, corr_window)
    mu = float(trader.weights.mean @ z)
    var = float(z @ trader.weights.cov @ z)
    return mu, float(np.sqrt(max(var, 0.0)))


def prediction_series(
    trader: Trader,
    panel: ReturnPanel,
    ts: np.ndarray,
    corr_window: int = DEFAULT_CORR_WINDOW,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (mu, sigma) over many time indices."""
    z = signal_matrix(trader.params, panel, np.asarray(ts, dtype=int), corr_window)
    mu = z @ trader.weights.mean
    var = np.einsum("ij,jk,ik->i", z, trader.weights.cov, z)
    return mu, np.sqrt(np.maximum(var, 0.0))


def cumulative_return(
    trader: Trader,
    panel: ReturnPanel,
    rows: np.ndarray,
    corr_window: int = DEFAULT_CORR_WINDOW,
) -> float:
    """Fitness of a trader: sum over u of sign(prediction at u) * r[target, u+1].

    ``sign(0) = 0``: a flat forecast takes no position and earns nothing.
    """
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise HistoryError("cumulative_return needs a nonempty evaluation range")
    if int(rows.max()) + 1 >= panel.num_periods:
        raise HistoryError(
            f"evaluation row {int(rows.max())} has no realised next-period return"
        )
    mu, _ = prediction_series(trader, panel, rows, corr_window)
    realized = panel.returns[trader.params.target_stock, rows + 1]
    return float(np.sign(mu) @ realized)


@dataclass(frozen=True)
class TraderHyperParams:
    """Sampling domains for random traders (term count, delays, universe)."""

    num_stocks: int
    target_stock: int = 0
    max_terms: int = 10
    max_delay: int = 10
    corr_window: int = DEFAULT_CORR_WINDOW

    def __post_init__(self):
        if self.num_stocks < 1:
            raise ConfigError("num_stocks must be >= 1")
        if not 0 <= self.target_stock < self.num_stocks:
            raise ConfigError(
                f"target_stock {self.target_stock} outside universe of {self.num_stocks}"
            )
        if self.max_terms < 1:
            raise ConfigError("max_terms must be >= 1")
        if self.max_delay < 0:
            raise ConfigError("max_delay must be >= 0")
        if self.corr_window < 2:
            raise ConfigError("corr_window must be >= 2")

    @property
    def min_history(self) -> int:
        """Worst-case earliest evaluation time over all samplable traders."""
        return self.max_delay + self.corr_window - 1


def sample_random_trader(
    hyper: TraderHyperParams, rng: np.random.Generator, init_cov_scale: float = 1.0
) -> Trader:
    """Draw a trader uniformly over the hyper-parameter domains.

    Term count is uniform on {1..max_terms}, stock indices uniform on the
    universe, delays uniform on {0..max_delay}, operators and activations
    uniform over their sets, and each weight-mean coordinate uniform on
    [-1, 1].  The weight covariance starts at ``init_cov_scale * I`` (pass 0
    for point-weight traders).
    """
    m = int(rng.integers(1, hyper.max_terms + 1))
    ps = rng.integers(0, hyper.num_stocks, size=m)
    qs = rng.integers(0, hyper.num_stocks, size=m)
    ds = rng.integers(0, hyper.max_delay + 1, size=m)
    fs = rng.integers(0, hyper.max_delay + 1, size=m)
    ops = rng.integers(0, len(OPERATORS), size=m)
    acts = rng.integers(0, len(ACTIVATIONS), size=m)
    mean = rng.uniform(-1.0, 1.0, size=m)
    terms = tuple(
        TermParams(
            p=int(ps[j]),
            q=int(qs[j]),
            d=int(ds[j]),
            f=int(fs[j]),
            op=OPERATORS[int(ops[j])],
            act=ACTIVATIONS[int(acts[j])],
        )
        for j in range(m)
    )
    params = TraderParams(target_stock=hyper.target_stock, terms=terms)
    if init_cov_scale > 0:
        weights = WeightPosterior.isotropic(mean, init_cov_scale)
    else:
        weights = WeightPosterior.point(mean)
    return Trader(params=params, weights=weights)


def with_weights(trader: Trader, weights: WeightPosterior) -> Trader:
    """New trader value with the same formula but different weight posterior."""
    return replace(trader, weights=weights)
