"""Companies: populations of traders, their training loop, and aggregation.

A company maintains N traders for one target stock.  Training alternates an
Educate step (refit the weights of the worst performers: ridge least squares
for point-weight companies, MAP posteriors for uncertainty-aware ones) with
a Prune-and-Generate step (drop the worst performers and resample their
parameters from a Gaussian mixture fitted to the survivors).  Prediction
averages the traders and decomposes the variance into disagreement between
traders and average per-trader posterior variance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ConfigError, HistoryError, SingularDesignError
from .mixture import EMConfig, MixtureError, fit_em, sample
from .panels import ReturnPanel
from .rng import substream
from .traders import (
    ACTIVATIONS,
    OPERATORS,
    Activation,
    Operator,
    Trader,
    TraderHyperParams,
    TraderParams,
    TermParams,
    WeightPosterior,
    cumulative_return,
    prediction_series,
    sample_random_trader,
    signal_matrix,
    with_weights,
)

logger = logging.getLogger(__name__)

MODE_TC = "tc"
MODE_UTC = "utc"

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters shared by both company modes.

    ``noise_var`` and ``prior_var`` are the observation-noise and weight-prior
    variances of the MAP update; their ratio is the ridge penalty used by the
    point-weight update, so the two modes stay weight-for-weight comparable.
    """

    prune_ratio: float = 0.1
    fit_rounds: int = 2
    noise_var: float = 0.01
    prior_var: float = 1.0
    gm_components: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.prune_ratio < 1.0:
            raise ConfigError(f"prune_ratio must be in (0, 1), got {self.prune_ratio}")
        if self.fit_rounds < 1:
            raise ConfigError("fit_rounds must be >= 1")
        if self.noise_var <= 0:
            raise ConfigError("noise_var must be positive")
        if self.prior_var <= 0:
            raise ConfigError("prior_var must be positive")
        if self.gm_components < 1:
            raise ConfigError("gm_components must be >= 1")

    @property
    def ridge_lambda(self) -> float:
        return self.noise_var / self.prior_var


@dataclass(frozen=True)
class TrainSchedule:
    """Training range and outer loop length.

    Fitting rows are times ``u`` with ``t_start <= u < t_end``; the realised
    target of row ``u`` is the return at ``u + 1``, so the schedule consumes
    returns up to and including index ``t_end``.
    """

    t_start: int
    t_end: int
    rounds: int

    def __post_init__(self):
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")
        if self.t_end <= self.t_start:
            raise ConfigError("t_end must exceed t_start")


@dataclass(frozen=True)
class PredictionWithUncertainty:
    """Ensemble mean, its variance decomposition, and total sigma."""

    mean: float
    intra_var: float
    inter_var: float
    sigma: float

    IDENTITY_TOL = 1e-12

    def __post_init__(self):
        if self.intra_var < 0 or self.inter_var < 0:
            raise ConfigError("variance components must be nonnegative")
        if abs(self.sigma - np.sqrt(self.intra_var + self.inter_var)) > self.IDENTITY_TOL:
            raise ConfigError("sigma must equal sqrt(intra_var + inter_var)")


@dataclass(frozen=True)
class Company:
    """A population of traders for one target stock, plus its training config."""

    traders: tuple[Trader, ...]
    mode: str
    hyper: TraderHyperParams
    train_cfg: TrainConfig

    def __post_init__(self):
        object.__setattr__(self, "traders", tuple(self.traders))
        if self.mode not in (MODE_TC, MODE_UTC):
            raise ConfigError(f"mode must be {MODE_TC!r} or {MODE_UTC!r}, got {self.mode!r}")
        if len(self.traders) < 1:
            raise ConfigError("a company needs at least one trader")
        for n, trader in enumerate(self.traders):
            if trader.params.target_stock != self.hyper.target_stock:
                raise ConfigError(
                    f"trader {n} targets stock {trader.params.target_stock}, "
                    f"company targets {self.hyper.target_stock}"
                )
            for term in trader.params.terms:
                if term.p >= self.hyper.num_stocks or term.q >= self.hyper.num_stocks:
                    raise ConfigError(f"trader {n} references a stock outside the universe")

    @property
    def num_traders(self) -> int:
        return len(self.traders)

    def init_cov_scale(self) -> float:
        return self.train_cfg.prior_var if self.mode == MODE_UTC else 0.0


def new_company(
    mode: str,
    hyper: TraderHyperParams,
    train_cfg: TrainConfig,
    n_traders: int,
    rng: np.random.Generator | None = None,
) -> Company:
    """Company with ``n_traders`` freshly sampled random traders.

    Both modes consume the identical random draws for the trader structures
    and weight means, so companies built in different modes from the same
    seed share their full parameter path.
    """
    if n_traders < 1:
        raise ConfigError("n_traders must be >= 1")
    if rng is None:
        rng = substream(train_cfg.seed, "trader-init")
    scale = train_cfg.prior_var if mode == MODE_UTC else 0.0
    traders = tuple(sample_random_trader(hyper, rng, scale) for _ in range(n_traders))
    return Company(traders=traders, mode=mode, hyper=hyper, train_cfg=train_cfg)


# ---------------------------------------------------------------------------
# Weight fitting


def ridge_solution(z: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (Z'Z + lam I) w = Z'y.

    Raises SingularDesignError for a singular normal matrix (possible only
    with ``lam == 0``); the fix is a positive ridge penalty.
    """
    if lam < 0:
        raise ConfigError("ridge penalty must be nonnegative")
    gram = z.T @ z + lam * np.eye(z.shape[1])
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise SingularDesignError(
            "normal equations are singular; use a ridge penalty lam > 0"
        ) from None
    rhs = z.T @ y
    return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


def map_posterior(
    z: np.ndarray, y: np.ndarray, noise_var: float, prior_var: float
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian posterior over weights for y = Zw + noise with isotropic prior.

    Covariance ``(Z'Z/noise_var + I/prior_var)^-1``; the mean is the closed
    form ``(Z'Z + lam I)^-1 Z'y`` with ``lam = noise_var / prior_var`` and is
    computed through the same solver as the plain ridge update, so companies
    trained in either mode from one seed stay weight-for-weight identical.
    """
    if noise_var <= 0 or prior_var <= 0:
        raise ConfigError("noise_var and prior_var must be positive")
    lam = noise_var / prior_var
    mean = ridge_solution(z, y, lam)
    gram = z.T @ z + lam * np.eye(z.shape[1])
    cov = noise_var * np.linalg.inv(gram)
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def _training_data(
    trader: Trader, panel: ReturnPanel, rows: np.ndarray, corr_window: int
) -> tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(rows, dtype=int)
    if rows.size == 0:
        raise HistoryError("educate needs a nonempty set of training rows")
    if rows.size < trader.params.num_terms:
        raise HistoryError(
            f"educate needs at least {trader.params.num_terms} training rows, "
            f"got {rows.size}"
        )
    if int(rows.max()) + 1 >= panel.num_periods:
        raise HistoryError("last training row has no realised next-period return")
    z = signal_matrix(trader.params, panel, rows, corr_window)
    y = panel.returns[trader.params.target_stock, rows + 1]
    return z, y


def educate_tc(
    trader: Trader, panel: ReturnPanel, rows: np.ndarray, lam: float, corr_window: int = 10
) -> Trader:
    """Refit point weights by (ridge) least squares on the given rows."""
    z, y = _training_data(trader, panel, rows, corr_window)
    w = ridge_solution(z, y, lam)
    return with_weights(trader, WeightPosterior.point(w))


def educate_utc(
    trader: Trader,
    panel: ReturnPanel,
    rows: np.ndarray,
    noise_var: float,
    prior_var: float,
    corr_window: int = 10,
) -> Trader:
    """Replace the weight posterior with the MAP/Bayes update on the given rows."""
    z, y = _training_data(trader, panel, rows, corr_window)
    mean, cov = map_posterior(z, y, noise_var, prior_var)
    return with_weights(trader, WeightPosterior(mean=mean, cov=cov))


# ---------------------------------------------------------------------------
# Evaluation, selection, and the evolutionary loop


def training_rows(hyper: TraderHyperParams, t_start: int, t_end: int) -> np.ndarray:
    """Times usable as fitting rows in [t_start, t_end), respecting history needs."""
    lo = max(t_start, hyper.min_history)
    if lo >= t_end:
        raise HistoryError(
            f"no usable training rows in [{t_start}, {t_end}); traders need "
            f"{hyper.min_history} periods of history"
        )
    return np.arange(lo, t_end)


def evaluate_traders(company: Company, panel: ReturnPanel, rows: np.ndarray) -> np.ndarray:
    """Cumulative signed return of each trader over ``rows``, in trader order."""
    cw = company.hyper.corr_window
    return np.array(
        [cumulative_return(tr, panel, rows, cw) for tr in company.traders]
    )


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    """Nearest-rank q-quantile: the ceil(q*n)-th smallest value (at least the min)."""
    s = np.sort(np.asarray(values, dtype=float))
    k = max(int(np.ceil(q * s.size)), 1)
    return float(s[k - 1])


def _selection(scores: np.ndarray, q: float) -> np.ndarray:
    """Indices with score <= the nearest-rank q-quantile, in index order.

    With distinct scores this selects exactly ceil(q*n) traders; ties at the
    threshold are all included, and the worst trader is always selected.
    """
    threshold = nearest_rank_quantile(scores, q)
    return np.flatnonzero(scores <= threshold)


def educate_step(
    company: Company, panel: ReturnPanel, rows: np.ndarray
) -> tuple[Company, dict]:
    """Re-educate the bottom prune_ratio fraction of traders by fitness."""
    cfg = company.train_cfg
    cw = company.hyper.corr_window
    scores = evaluate_traders(company, panel, rows)
    chosen = _selection(scores, cfg.prune_ratio)
    traders = list(company.traders)
    for n in chosen:
        if company.mode == MODE_TC:
            traders[n] = educate_tc(traders[n], panel, rows, cfg.ridge_lambda, cw)
        else:
            traders[n] = educate_utc(
                traders[n], panel, rows, cfg.noise_var, cfg.prior_var, cw
            )
    stats = {
        "mean_R": float(scores.mean()),
        "min_R": float(scores.min()),
        "max_R": float(scores.max()),
        "n_educated": int(chosen.size),
    }
    return replace(company, traders=tuple(traders)), stats


# Continuous encoding of a trader: [num_terms] then, for each of max_terms
# slots, [p, q, d, f, operator index, activation index, weight mean].  Slots
# beyond num_terms are zero padding and ignored when decoding.
_SLOT_WIDTH = 7


def encoding_dim(hyper: TraderHyperParams) -> int:
    return 1 + _SLOT_WIDTH * hyper.max_terms


def encode_params(trader: Trader, hyper: TraderHyperParams) -> np.ndarray:
    vec = np.zeros(encoding_dim(hyper))
    params = trader.params
    vec[0] = params.num_terms
    for j, term in enumerate(params.terms):
        base = 1 + _SLOT_WIDTH * j
        vec[base + 0] = term.p
        vec[base + 1] = term.q
        vec[base + 2] = term.d
        vec[base + 3] = term.f
        vec[base + 4] = OPERATORS.index(term.op)
        vec[base + 5] = ACTIVATIONS.index(term.act)
        vec[base + 6] = trader.weights.mean[j]
    return vec


def _round_clamp(value: float, lo: int, hi: int) -> int:
    return int(np.clip(np.floor(value + 0.5), lo, hi))


def decode_params(
    vec: np.ndarray, hyper: TraderHyperParams, init_cov_scale: float
) -> Trader:
    """Decode a continuous vector to a trader, rounding and clamping as needed.

    Total on any input vector of the right length: integers are rounded to
    the nearest value and clamped into their domains.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.size != encoding_dim(hyper):
        raise ConfigError(
            f"encoded trader has length {vec.size}, expected {encoding_dim(hyper)}"
        )
    m = _round_clamp(vec[0], 1, hyper.max_terms)
    terms = []
    mean = np.empty(m)
    for j in range(m):
        base = 1 + _SLOT_WIDTH * j
        terms.append(
            TermParams(
                p=_round_clamp(vec[base + 0], 0, hyper.num_stocks - 1),
                q=_round_clamp(vec[base + 1], 0, hyper.num_stocks - 1),
                d=_round_clamp(vec[base + 2], 0, hyper.max_delay),
                f=_round_clamp(vec[base + 3], 0, hyper.max_delay),
                op=OPERATORS[_round_clamp(vec[base + 4], 0, len(OPERATORS) - 1)],
                act=ACTIVATIONS[_round_clamp(vec[base + 5], 0, len(ACTIVATIONS) - 1)],
            )
        )
        mean[j] = vec[base + 6]
    params = TraderParams(target_stock=hyper.target_stock, terms=tuple(terms))
    if init_cov_scale > 0:
        weights = WeightPosterior.isotropic(mean, init_cov_scale)
    else:
        weights = WeightPosterior.point(mean)
    return Trader(params=params, weights=weights)


def prune_and_generate(
    company: Company,
    panel: ReturnPanel,
    rows: np.ndarray,
    rng: np.random.Generator,
    em_config: EMConfig = EMConfig(),
) -> tuple[Company, int]:
    """Drop low-fitness traders and resample replacements, fit_rounds times.

    Survivors' parameters (structure plus weight means) are encoded as
    continuous vectors, a Gaussian mixture is fitted to them, and fresh
    traders are decoded from mixture draws until the population is back to
    size N.  Generated traders restart from the mode's initial weight
    covariance.  Falls back to uniform random traders when too few survivors
    remain for a mixture fit.
    """
    cfg = company.train_cfg
    scale = company.init_cov_scale()
    traders = list(company.traders)
    n = len(traders)
    n_pruned_total = 0
    for _ in range(cfg.fit_rounds):
        scores = evaluate_traders(replace(company, traders=tuple(traders)), panel, rows)
        doomed = set(_selection(scores, cfg.prune_ratio).tolist())
        survivors = [tr for i, tr in enumerate(traders) if i not in doomed]
        n_new = n - len(survivors)
        if n_new == 0:
            continue
        n_pruned_total += n_new
        replacements: list[Trader] = []
        if len(survivors) >= cfg.gm_components:
            encoded = np.stack([encode_params(tr, company.hyper) for tr in survivors])
            try:
                gm = fit_em(encoded, cfg.gm_components, em_config, rng)
                drawn = sample(gm, n_new, rng)
                replacements = [decode_params(v, company.hyper, scale) for v in drawn]
            except MixtureError as exc:
                logger.warning("mixture fit failed (%s); sampling random traders", exc)
        else:
            logger.warning(
                "only %d survivors for %d mixture components; sampling random traders",
                len(survivors),
                cfg.gm_components,
            )
        while len(replacements) < n_new:
            replacements.append(sample_random_trader(company.hyper, rng, scale))
        traders = survivors + replacements
    return replace(company, traders=tuple(traders)), n_pruned_total


def train(
    company: Company,
    panel: ReturnPanel,
    schedule: TrainSchedule,
    em_config: EMConfig = EMConfig(),
) -> tuple[Company, list[dict]]:
    """Run the outer training loop: educate, then prune-and-generate, per round.

    The aggregation rule is plain averaging and carries no trainable
    parameters, so the third step of each round is a no-op hook.  Returns the
    trained company and one statistics record per round, suitable for a
    JSON-lines log.  Deterministic given the config seed.
    """
    rows = training_rows(company.hyper, schedule.t_start, schedule.t_end)
    if int(rows.max()) + 1 >= panel.num_periods:
        raise HistoryError(
            f"schedule needs returns through index {int(rows.max()) + 1}, panel "
            f"has {panel.num_periods}"
        )
    rng = substream(company.train_cfg.seed, "train")
    records: list[dict] = []
    for round_index in range(schedule.rounds):
        company, stats = educate_step(company, panel, rows)
        company, n_pruned = prune_and_generate(company, panel, rows, rng, em_config)
        records.append({"round": round_index, **stats, "n_pruned": n_pruned})
    return company, records


# ---------------------------------------------------------------------------
# Prediction


def aggregate_predict(
    company: Company, panel: ReturnPanel, t: int
) -> PredictionWithUncertainty:
    """Ensemble forecast at time t of the target's return at t+1.

    The ensemble mean is the average of trader means; the variance splits
    into the spread of trader means around the ensemble mean (disagreement
    between strategies) plus the average per-trader predictive variance
    (weight uncertainty within strategies).
    """
    mu, intra, inter, sigma = aggregate_predict_series(company, panel, np.array([t]))
    return PredictionWithUncertainty(
        mean=float(mu[0]),
        intra_var=float(intra[0]),
        inter_var=float(inter[0]),
        sigma=float(sigma[0]),
    )


def aggregate_predict_series(
    company: Company, panel: ReturnPanel, ts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised aggregate forecasts: (mean, intra_var, inter_var, sigma) arrays."""
    ts = np.asarray(ts, dtype=int)
    cw = company.hyper.corr_window
    n = company.num_traders
    means = np.empty((n, ts.size))
    sigmas = np.empty((n, ts.size))
    for i, trader in enumerate(company.traders):
        means[i], sigmas[i] = prediction_series(trader, panel, ts, cw)
    mu = means.mean(axis=0)
    intra = np.mean((means - mu) ** 2, axis=0)
    inter = np.mean(sigmas**2, axis=0)
    return mu, intra, inter, np.sqrt(intra + inter)


# ---------------------------------------------------------------------------
# Serialization


def trader_to_dict(trader: Trader) -> dict:
    return {
        "target_stock": trader.params.target_stock,
        "terms": [
            {"p": t.p, "q": t.q, "d": t.d, "f": t.f, "op": t.op.value, "act": t.act.value}
            for t in trader.params.terms
        ],
        "weight_mean": trader.weights.mean.tolist(),
        "weight_cov": trader.weights.cov.tolist(),
    }


def trader_from_dict(data: dict) -> Trader:
    terms = tuple(
        TermParams(
            p=int(t["p"]),
            q=int(t["q"]),
            d=int(t["d"]),
            f=int(t["f"]),
            op=Operator(t["op"]),
            act=Activation(t["act"]),
        )
        for t in data["terms"]
    )
    params = TraderParams(target_stock=int(data["target_stock"]), terms=terms)
    weights = WeightPosterior(
        mean=np.array(data["weight_mean"], dtype=float),
        cov=np.array(data["weight_cov"], dtype=float),
    )
    return Trader(params=params, weights=weights)


def company_to_dict(company: Company, symbols: tuple[str, ...] | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "mode": company.mode,
        "hyper": asdict(company.hyper),
        "train_cfg": asdict(company.train_cfg),
        "traders": [trader_to_dict(t) for t in company.traders],
    }
    if symbols is not None:
        doc["symbols"] = list(symbols)
    return doc


def company_from_dict(doc: dict) -> tuple[Company, tuple[str, ...] | None]:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported company format_version {version!r}")
    hyper = TraderHyperParams(**doc["hyper"])
    cfg = TrainConfig(**doc["train_cfg"])
    traders = tuple(trader_from_dict(t) for t in doc["traders"])
    company = Company(traders=traders, mode=doc["mode"], hyper=hyper, train_cfg=cfg)
    symbols = tuple(doc["symbols"]) if "symbols" in doc else None
    return company, symbols


def save_company(company: Company, path, symbols=None) -> None:
    with open(path, "w", encoding="utf8") as fh:
        json.dump(company_to_dict(company, symbols), fh, sort_keys=True)
        fh.write("\n")


def load_company(path) -> tuple[Company, tuple[str, ...] | None]:
    with open(path, encoding="utf8") as fh:
        return company_from_dict(json.load(fh))
