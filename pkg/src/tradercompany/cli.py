"""Command-line interface: synth, train, predict, backtest, returns export.

Configuration precedence is CLI flag over JSON config file over built-in
default.  Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .backtest import (
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
    TrainConfig,
    TrainSchedule,
    aggregate_predict_series,
    load_company,
    new_company,
    save_company,
    train,
)
from .errors import ConfigError, TraderCompanyError
from .estimators import company_model_factory, var_model_factory
from .panels import (
    ReturnPanel,
    compute_log_returns,
    load_price_csv,
    load_return_csv,
    write_return_csv,
)
from .synthetic import SyntheticSpec, gen_market, gen_nonlinear, gen_shift
from .traders import TraderHyperParams
from .var import fit_var, predict_var, select_lag_aic

TRAIN_DEFAULTS = {
    "n_traders": 200,
    "rounds": 5,
    "fit_rounds": 2,
    "prune_ratio": 0.1,
    "noise_var": 0.01,
    "prior_var": 1.0,
    "gm_components": 3,
    "max_terms": 10,
    "max_delay": 10,
    "corr_window": 10,
    "seed": 0,
}

GATE_DEFAULTS = {
    "gate_lookback": 250,
    "gate_quantile": 0.9,
    "gate_min_history": 20,
}


def _load_panel(path: str, data_kind: str) -> ReturnPanel:
    if data_kind == "returns":
        return load_return_csv(path)
    if data_kind == "prices":
        return compute_log_returns(load_price_csv(path))
    raise ConfigError(f"data kind must be 'prices' or 'returns', got {data_kind!r}")


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, then the --config file, then explicit CLI flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _train_cfg_from(resolved: dict) -> TrainConfig:
    return TrainConfig(
        prune_ratio=resolved["prune_ratio"],
        fit_rounds=resolved["fit_rounds"],
        noise_var=resolved["noise_var"],
        prior_var=resolved["prior_var"],
        gm_components=resolved["gm_components"],
        seed=resolved["seed"],
    )


def _hyper_from(resolved: dict, num_stocks: int, target: int) -> TraderHyperParams:
    return TraderHyperParams(
        num_stocks=num_stocks,
        target_stock=target,
        max_terms=resolved["max_terms"],
        max_delay=resolved["max_delay"],
        corr_window=resolved["corr_window"],
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with configuration defaults")
    parser.add_argument("--n-traders", dest="n_traders", type=int)
    parser.add_argument("--rounds", type=int, help="outer training rounds")
    parser.add_argument("--fit-rounds", dest="fit_rounds", type=int)
    parser.add_argument("--prune-ratio", dest="prune_ratio", type=float)
    parser.add_argument("--noise-var", dest="noise_var", type=float)
    parser.add_argument("--prior-var", dest="prior_var", type=float)
    parser.add_argument("--gm-components", dest="gm_components", type=int)
    parser.add_argument("--max-terms", dest="max_terms", type=int)
    parser.add_argument("--max-delay", dest="max_delay", type=int)
    parser.add_argument("--corr-window", dest="corr_window", type=int)
    parser.add_argument("--seed", type=int)


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args: argparse.Namespace) -> int:
    if args.generator == "nonlinear":
        spec = SyntheticSpec(n_samples=args.n, seed=args.seed, noise_sd=args.noise_sd)
        panel = gen_nonlinear(spec)
    elif args.generator == "shift":
        spec = SyntheticSpec(
            n_samples=args.n,
            seed=args.seed,
            noise_sd=args.noise_sd,
            shift_time=args.shift_time,
        )
        panel = gen_shift(spec, gen_nonlinear(spec))
    else:  # market
        shift_times = tuple(int(s) for s in args.shift_times.split(",")) if args.shift_times else ()
        panel = gen_market(
            n_stocks=args.stocks,
            n_samples=args.n,
            seed=args.seed,
            noise_sd=args.noise_sd,
            shift_times=shift_times,
        )
    write_return_csv(panel, args.out)
    print(
        f"wrote {panel.num_stocks} x {panel.num_periods} return panel to {args.out} "
        f"(generator={args.generator}, seed={args.seed}, noise_sd={args.noise_sd})"
    )
    return 0


# ---------------------------------------------------------------------------
# train


def cmd_train(args: argparse.Namespace) -> int:
    resolved = _resolve(args, TRAIN_DEFAULTS)
    panel = _load_panel(args.data, args.data_kind)
    target = panel.symbol_index(args.target)
    cfg = _train_cfg_from(resolved)
    hyper = _hyper_from(resolved, panel.num_stocks, target)
    company = new_company(args.mode, hyper, cfg, resolved["n_traders"])
    t_end = args.train_end if args.train_end is not None else panel.num_periods - 1
    schedule = TrainSchedule(t_start=args.train_start, t_end=t_end, rounds=resolved["rounds"])
    company, records = train(company, panel, schedule)
    save_company(company, args.out_model, symbols=panel.symbols)
    if args.out_log:
        with open(args.out_log, "w", encoding="utf8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    last = records[-1] if records else {}
    print(
        f"trained {args.mode} company for {args.target!r} "
        f"({resolved['n_traders']} traders, {schedule.rounds} rounds) -> {args.out_model}"
        + (f"; final mean_R={last['mean_R']:.6g}" if last else "")
    )
    return 0


# ---------------------------------------------------------------------------
# predict


def _align_panel_to_model(panel: ReturnPanel, model_symbols) -> ReturnPanel:
    missing = [s for s in model_symbols if s not in panel.symbols]
    if missing:
        raise TraderCompanyError(
            f"panel is missing symbols the model expects: {missing}"
        )
    rows = [panel.symbol_index(s) for s in model_symbols]
    return ReturnPanel(
        symbols=tuple(model_symbols),
        timestamps=panel.timestamps,
        returns=panel.returns[rows],
    )


def cmd_predict(args: argparse.Namespace) -> int:
    panel = _load_panel(args.data, args.data_kind)
    end = args.end if args.end is not None else panel.num_periods
    if not 0 < args.start < end <= panel.num_periods:
        raise ConfigError(
            f"invalid prediction range [{args.start}, {end}) for {panel.num_periods} periods"
        )
    ts = np.arange(args.start, end)

    if args.mode == "var":
        history = ReturnPanel(
            symbols=panel.symbols,
            timestamps=panel.timestamps[: args.start],
            returns=panel.returns[:, : args.start],
        )
        p = select_lag_aic(history, args.max_lag) if args.aic else args.lag
        model = fit_var(history, p)
        with open(args.out, "w", newline="", encoding="utf8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "symbol", "mu"])
            for t in ts:
                mu = predict_var(model, panel, int(t) - 1)
                for i, symbol in enumerate(panel.symbols):
                    writer.writerow([panel.timestamps[t], symbol, repr(float(mu[i]))])
        print(f"wrote VAR({p}) predictions for {ts.size} periods to {args.out}")
        return 0

    if not args.model:
        raise ConfigError("predict needs --model unless --mode var is given")
    company, symbols = load_company(args.model)
    if symbols is not None:
        panel = _align_panel_to_model(panel, symbols)
    target_symbol = panel.symbols[company.hyper.target_stock]
    mu, _, _, sigma = aggregate_predict_series(company, panel, ts - 1)
    with_sigma = company.mode == MODE_UTC
    with open(args.out, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "symbol", "mu", "sigma"])
        for k, t in enumerate(ts):
            row = [panel.timestamps[t], target_symbol, repr(float(mu[k]))]
            row.append(repr(float(sigma[k])) if with_sigma else "")
            writer.writerow(row)
    print(
        f"wrote {company.mode} predictions for {target_symbol!r} over "
        f"{ts.size} periods to {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# backtest


def _company_predictions(panel, mode, resolved, t_start, t_end):
    """Train one company per stock on [0, t_start) and predict [t_start, t_end)."""
    ts = np.arange(t_start, t_end)
    mus = np.empty((panel.num_stocks, ts.size))
    sigmas = np.empty((panel.num_stocks, ts.size))
    for target in range(panel.num_stocks):
        cfg = _train_cfg_from({**resolved, "seed": resolved["seed"] + 7919 * target})
        hyper = _hyper_from(resolved, panel.num_stocks, target)
        company = new_company(mode, hyper, cfg, resolved["n_traders"])
        schedule = TrainSchedule(t_start=0, t_end=t_start - 1, rounds=resolved["rounds"])
        company, _ = train(company, panel, schedule)
        mu, _, _, sigma = aggregate_predict_series(company, panel, ts - 1)
        mus[target] = mu
        sigmas[target] = sigma
    return mus, sigmas


def _rolling_predictions(panel, mode, resolved, args, t_start, t_end):
    targets = list(range(panel.num_stocks))
    if mode == "var":
        factory = var_model_factory(targets, lag=args.lag, select_by_aic=args.aic, max_lag=args.max_lag)
    else:
        factory = company_model_factory(
            mode,
            targets,
            _train_cfg_from(resolved),
            n_traders=resolved["n_traders"],
            rounds=resolved["rounds"],
            max_terms=resolved["max_terms"],
            max_delay=resolved["max_delay"],
            corr_window=resolved["corr_window"],
        )
    mus, sigmas, _ = rolling_backtest(
        factory, panel, args.rolling_window, args.retrain_every, t_start, t_end, targets
    )
    return mus, sigmas


def cmd_backtest(args: argparse.Namespace) -> int:
    resolved = _resolve(args, {**TRAIN_DEFAULTS, **GATE_DEFAULTS})
    panel = _load_panel(args.data, args.data_kind)
    t_start = args.train_end
    t_end = args.test_end if args.test_end is not None else panel.num_periods
    if not 0 < t_start < t_end <= panel.num_periods:
        raise ConfigError(f"invalid test range [{t_start}, {t_end})")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in (MODE_TC, MODE_UTC, "var", "market"):
            raise ConfigError(f"unknown mode {mode!r}")
    os.makedirs(args.out_dir, exist_ok=True)
    test_panel = ReturnPanel(
        symbols=panel.symbols,
        timestamps=panel.timestamps[t_start:t_end],
        returns=panel.returns[:, t_start:t_end],
    )

    report: dict = {}
    series_rows: list[tuple[str, str, float]] = []
    for mode in modes:
        gating_rate = None
        sigma_mean = None
        if mode == "market":
            strat = market_returns(test_panel)
        elif mode == "var":
            if args.rolling_window:
                mus, _ = _rolling_predictions(panel, mode, resolved, args, t_start, t_end)
            else:
                p = select_lag_aic(panel, args.max_lag) if args.aic else args.lag
                model = fit_var(
                    ReturnPanel(panel.symbols, panel.timestamps[:t_start], panel.returns[:, :t_start]),
                    p,
                )
                mus = np.stack(
                    [predict_var(model, panel, t - 1) for t in range(t_start, t_end)], axis=1
                )
            strat = strategy_returns(mus, test_panel)
        else:
            if args.rolling_window:
                mus, sigmas = _rolling_predictions(panel, mode, resolved, args, t_start, t_end)
            else:
                mus, sigmas = _company_predictions(panel, mode, resolved, t_start, t_end)
            if mode == MODE_UTC and not args.no_gate:
                gate_cfg = UncertaintyFilterConfig(
                    lookback=resolved["gate_lookback"],
                    quantile=resolved["gate_quantile"],
                    min_history=resolved["gate_min_history"],
                    invert=args.gate_invert,
                )
                gated = uncertainty_gate(mus, sigmas, gate_cfg)
                active = mus != 0
                gating_rate = float(np.mean((gated == 0) & active)) if active.any() else 0.0
                mus = gated
            if mode == MODE_UTC:
                sigma_mean = sigmas.mean(axis=0)
            strat = strategy_returns(mus, test_panel)
        metrics = compute_metrics(strat.R, args.t_y)
        entry = metrics.to_dict()
        if gating_rate is not None:
            entry["gating_rate"] = gating_rate
        report[mode] = entry
        for k, stamp in enumerate(strat.timestamps):
            series_rows.append((stamp, f"{mode}_R", float(strat.R[k])))
            series_rows.append((stamp, f"{mode}_C", float(metrics.cumulative[k])))
            if sigma_mean is not None:
                series_rows.append((stamp, f"{mode}_sigma_mean", float(sigma_mean[k])))

    report_path = os.path.join(args.out_dir, "report.json")
    with open(report_path, "w", encoding="utf8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    series_path = os.path.join(args.out_dir, "series.csv")
    with open(series_path, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "series", "value"])
        for stamp, name, value in series_rows:
            writer.writerow([stamp, name, repr(value)])
    print(f"wrote {report_path} and {series_path} for modes {','.join(modes)}")
    for mode in modes:
        m = report[mode]
        sr = "n/a" if m["sr"] is None else f"{m['sr']:.3f}"
        print(f"  {mode}: AR={m['ar']:.4f} RISK={m['risk']:.4f} SR={sr} MDD={m['mdd']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# returns export


def cmd_returns_export(args: argparse.Namespace) -> int:
    prices = load_price_csv(args.prices)
    panel = compute_log_returns(prices)
    write_return_csv(panel, args.out)
    print(f"wrote {panel.num_stocks} x {panel.num_periods} return panel to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tradercompany",
        description="Trader-ensemble return forecasting, baselines, and backtests.",
    )
    parser.add_argument("--threads", type=int, default=1, help="cap on worker parallelism")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate synthetic return panels")
    synth_sub = synth.add_subparsers(dest="generator", required=True)
    for name in ("nonlinear", "shift", "market"):
        g = synth_sub.add_parser(name)
        g.add_argument("--n", type=int, required=True, help="number of samples")
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.1 if name != "market" else 0.01)
        g.add_argument("--out", required=True)
        if name == "shift":
            g.add_argument("--shift-time", dest="shift_time", type=int, default=200)
        if name == "market":
            g.add_argument("--stocks", type=int, default=20)
            g.add_argument("--shift-times", dest="shift_times", default="")
        g.set_defaults(func=cmd_synth)

    tr = sub.add_parser("train", help="train a company and serialise it")
    tr.add_argument("--data", required=True)
    tr.add_argument("--data-kind", dest="data_kind", choices=("prices", "returns"), default="prices")
    tr.add_argument("--target", required=True, help="symbol to forecast")
    tr.add_argument("--mode", choices=(MODE_TC, MODE_UTC), default=MODE_UTC)
    tr.add_argument("--train-start", dest="train_start", type=int, default=0)
    tr.add_argument("--train-end", dest="train_end", type=int, default=None)
    tr.add_argument("--out-model", dest="out_model", required=True)
    tr.add_argument("--out-log", dest="out_log", default=None)
    _add_train_flags(tr)
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="emit per-period forecasts as CSV")
    pr.add_argument("--model", default=None)
    pr.add_argument("--mode", choices=("company", "var"), default="company")
    pr.add_argument("--lag", type=int, default=1)
    pr.add_argument("--aic", action="store_true", help="select VAR lag by AIC")
    pr.add_argument("--max-lag", dest="max_lag", type=int, default=10)
    pr.add_argument("--data", required=True)
    pr.add_argument("--data-kind", dest="data_kind", choices=("prices", "returns"), default="prices")
    pr.add_argument("--start", type=int, required=True)
    pr.add_argument("--end", type=int, default=None)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    bt = sub.add_parser("backtest", help="simulate strategies and compute metrics")
    bt.add_argument("--data", required=True)
    bt.add_argument("--data-kind", dest="data_kind", choices=("prices", "returns"), default="prices")
    bt.add_argument("--modes", default="utc,tc,var,market")
    bt.add_argument("--train-end", dest="train_end", type=int, required=True)
    bt.add_argument("--test-end", dest="test_end", type=int, default=None)
    bt.add_argument("--t-y", dest="t_y", type=float, default=250.0)
    bt.add_argument("--out-dir", dest="out_dir", required=True)
    bt.add_argument("--lag", type=int, default=1)
    bt.add_argument("--aic", action="store_true")
    bt.add_argument("--max-lag", dest="max_lag", type=int, default=10)
    bt.add_argument("--rolling-window", dest="rolling_window", type=int, default=None)
    bt.add_argument("--retrain-every", dest="retrain_every", type=int, default=1)
    bt.add_argument("--no-gate", dest="no_gate", action="store_true")
    bt.add_argument("--gate-invert", dest="gate_invert", action="store_true")
    bt.add_argument("--gate-lookback", dest="gate_lookback", type=int)
    bt.add_argument("--gate-quantile", dest="gate_quantile", type=float)
    bt.add_argument("--gate-min-history", dest="gate_min_history", type=int)
    _add_train_flags(bt)
    bt.set_defaults(func=cmd_backtest)

    rt = sub.add_parser("returns", help="panel conversions")
    rt_sub = rt.add_subparsers(dest="returns_command", required=True)
    exp = rt_sub.add_parser("export", help="convert a price CSV to a return CSV")
    exp.add_argument("--prices", required=True)
    exp.add_argument("--out", required=True)
    exp.set_defaults(func=cmd_returns_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TraderCompanyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
