import csv
import json

import numpy as np
import pytest

from tradercompany.cli import main
from tradercompany.panels import load_return_csv, write_price_csv, PricePanel


def run_cli(*args):
    return main([str(a) for a in args])


def make_price_csv(path, seed=0, n=60, symbols=("aaa", "bbb", "ccc")):
    rng = np.random.default_rng(seed)
    prices = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, size=(len(symbols), n)), axis=1))
    stamps = [f"2021-01-{1:02d}" for _ in range(0)]  # placeholder, replaced below
    stamps = [f"t{k:06d}" for k in range(n)]
    panel = PricePanel(symbols=symbols, timestamps=stamps, prices=prices)
    write_price_csv(panel, path)
    return panel


class TestSynth:
    def test_nonlinear_writes_loadable_panel(self, tmp_path, capsys):
        out = tmp_path / "nl.csv"
        assert run_cli("synth", "nonlinear", "--n", 400, "--seed", 1, "--out", out) == 0
        panel = load_return_csv(out)
        assert panel.symbols == ("y0", "y1")
        assert panel.num_periods == 400
        assert "seed=1" in capsys.readouterr().out

    def test_shift_writes_three_series(self, tmp_path):
        out = tmp_path / "shift.csv"
        assert run_cli("synth", "shift", "--n", 300, "--shift-time", 150, "--out", out) == 0
        panel = load_return_csv(out)
        assert panel.symbols == ("y0", "y1", "y2")

    def test_market_generator(self, tmp_path):
        out = tmp_path / "mkt.csv"
        assert (
            run_cli(
                "synth", "market", "--n", 200, "--stocks", 5,
                "--shift-times", "80,160", "--out", out,
            )
            == 0
        )
        panel = load_return_csv(out)
        assert panel.num_stocks == 5

    def test_missing_n_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("synth", "nonlinear", "--out", tmp_path / "x.csv")
        assert exc.value.code == 2

    def test_reproducible_output_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("synth", "nonlinear", "--n", 200, "--seed", 3, "--out", a)
        run_cli("synth", "nonlinear", "--n", 200, "--seed", 3, "--out", b)
        assert a.read_bytes() == b.read_bytes()


class TestReturnsExport:
    def test_round_trip(self, tmp_path):
        prices_path = tmp_path / "prices.csv"
        panel = make_price_csv(prices_path, seed=2)
        out = tmp_path / "returns.csv"
        assert run_cli("returns", "export", "--prices", prices_path, "--out", out) == 0
        returns = load_return_csv(out)
        assert returns.num_periods == panel.num_periods - 1
        expected = np.diff(np.log(panel.prices), axis=1)
        np.testing.assert_allclose(returns.returns, expected, atol=1e-15)


def train_args(data, model, mode="utc", **extra):
    args = [
        "train", "--data", data, "--data-kind", "returns", "--target", "y0",
        "--mode", mode, "--out-model", model,
        "--n-traders", 10, "--rounds", 2, "--max-delay", 3, "--seed", 5,
        "--train-end", 250,
    ]
    for key, value in extra.items():
        args.extend([f"--{key.replace('_', '-')}", value])
    return args


class TestTrainPredict:
    @pytest.fixture()
    def synth_csv(self, tmp_path):
        out = tmp_path / "panel.csv"
        run_cli("synth", "nonlinear", "--n", 300, "--seed", 4, "--out", out)
        return out

    def test_train_writes_model_and_log(self, tmp_path, synth_csv):
        model = tmp_path / "model.json"
        log = tmp_path / "log.jsonl"
        code = main(
            [str(a) for a in train_args(synth_csv, model)]
            + ["--out-log", str(log)]
        )
        assert code == 0
        doc = json.loads(model.read_text())
        assert doc["mode"] == "utc"
        assert len(doc["traders"]) == 10
        assert doc["symbols"] == ["y0", "y1"]
        records = [json.loads(line) for line in log.read_text().splitlines()]
        assert [r["round"] for r in records] == [0, 1]

    def test_invalid_prune_ratio_is_config_error(self, tmp_path, synth_csv, capsys):
        model = tmp_path / "model.json"
        code = main(
            [str(a) for a in train_args(synth_csv, model)] + ["--prune-ratio", "1.5"]
        )
        assert code == 2
        assert "prune_ratio" in capsys.readouterr().err

    def test_config_file_overridden_by_flags(self, tmp_path, synth_csv):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_traders": 7, "rounds": 1}))
        model = tmp_path / "model.json"
        code = run_cli(
            "train", "--data", synth_csv, "--data-kind", "returns", "--target", "y0",
            "--out-model", model, "--config", cfg, "--rounds", 2,
            "--max-delay", 3, "--train-end", 250,
        )
        assert code == 0
        doc = json.loads(model.read_text())
        assert len(doc["traders"]) == 7  # from config file
        assert doc["train_cfg"]["seed"] == 0  # default

    def test_unknown_config_key_rejected(self, tmp_path, synth_csv, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        model = tmp_path / "model.json"
        code = run_cli(
            "train", "--data", synth_csv, "--data-kind", "returns", "--target", "y0",
            "--out-model", model, "--config", cfg,
        )
        assert code == 2
        assert "bogus" in capsys.readouterr().err

    def test_predict_emits_mu_and_sigma(self, tmp_path, synth_csv):
        model = tmp_path / "model.json"
        assert main([str(a) for a in train_args(synth_csv, model)]) == 0
        preds = tmp_path / "preds.csv"
        code = run_cli(
            "predict", "--model", model, "--data", synth_csv, "--data-kind", "returns",
            "--start", 250, "--end", 280, "--out", preds,
        )
        assert code == 0
        with open(preds) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 30
        assert all(row["symbol"] == "y0" for row in rows)
        assert all(float(row["sigma"]) >= 0 for row in rows)

    def test_tc_predictions_have_empty_sigma(self, tmp_path, synth_csv):
        model = tmp_path / "model.json"
        assert main([str(a) for a in train_args(synth_csv, model, mode="tc")]) == 0
        preds = tmp_path / "preds.csv"
        run_cli(
            "predict", "--model", model, "--data", synth_csv, "--data-kind", "returns",
            "--start", 250, "--end", 260, "--out", preds,
        )
        with open(preds) as fh:
            rows = list(csv.DictReader(fh))
        assert all(row["sigma"] == "" for row in rows)

    def test_var_predictions_have_no_sigma_column(self, tmp_path, synth_csv):
        preds = tmp_path / "preds.csv"
        code = run_cli(
            "predict", "--mode", "var", "--data", synth_csv, "--data-kind", "returns",
            "--start", 250, "--end", 260, "--out", preds,
        )
        assert code == 0
        with open(preds) as fh:
            header = next(csv.reader(fh))
        assert header == ["timestamp", "symbol", "mu"]

    def test_symbol_mismatch_names_difference(self, tmp_path, synth_csv, capsys):
        model = tmp_path / "model.json"
        assert main([str(a) for a in train_args(synth_csv, model)]) == 0
        other = tmp_path / "other.csv"
        run_cli("synth", "market", "--n", 300, "--stocks", 3, "--out", other)
        code = run_cli(
            "predict", "--model", model, "--data", other, "--data-kind", "returns",
            "--start", 250, "--out", tmp_path / "p.csv",
        )
        assert code == 1
        err = capsys.readouterr().err
        assert "y0" in err and "missing" in err

    def test_modes_share_structures_under_one_seed(self, tmp_path, synth_csv):
        # same seed and matched ridge penalty: both modes evolve the same formulas
        docs = {}
        for mode in ("utc", "tc"):
            model = tmp_path / f"model_{mode}.json"
            assert main([str(a) for a in train_args(synth_csv, model, mode=mode)]) == 0
            docs[mode] = json.loads(model.read_text())
        utc_structures = [t["terms"] for t in docs["utc"]["traders"]]
        tc_structures = [t["terms"] for t in docs["tc"]["traders"]]
        assert utc_structures == tc_structures

    def test_model_round_trip_predicts_identically(self, tmp_path, synth_csv):
        model = tmp_path / "model.json"
        assert main([str(a) for a in train_args(synth_csv, model)]) == 0
        p1, p2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
        for out in (p1, p2):
            run_cli(
                "predict", "--model", model, "--data", synth_csv, "--data-kind",
                "returns", "--start", 250, "--end", 270, "--out", out,
            )
        assert p1.read_bytes() == p2.read_bytes()


class TestBacktest:
    @pytest.fixture()
    def market_csv(self, tmp_path):
        out = tmp_path / "market.csv"
        run_cli(
            "synth", "market", "--n", 260, "--stocks", 4, "--seed", 6,
            "--shift-times", "150", "--out", out,
        )
        return out

    def test_market_mode_matches_metrics_oracle(self, tmp_path, market_csv):
        out_dir = tmp_path / "bt"
        code = run_cli(
            "backtest", "--data", market_csv, "--data-kind", "returns",
            "--modes", "market", "--train-end", 200, "--t-y", 250,
            "--out-dir", out_dir,
        )
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        panel = load_return_csv(market_csv)
        r = panel.returns[:, 200:].mean(axis=0)
        assert report["market"]["ar"] == pytest.approx(250.0 * r.mean(), abs=1e-12)

    def test_side_by_side_modes(self, tmp_path, market_csv):
        out_dir = tmp_path / "bt"
        code = run_cli(
            "backtest", "--data", market_csv, "--data-kind", "returns",
            "--modes", "utc,tc", "--train-end", 200,
            "--n-traders", 8, "--rounds", 1, "--max-delay", 3,
            "--gate-min-history", 5, "--gate-lookback", 30,
            "--out-dir", out_dir,
        )
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert set(report) == {"utc", "tc"}
        assert "gating_rate" in report["utc"]
        assert "gating_rate" not in report["tc"]
        series = (out_dir / "series.csv").read_text().splitlines()
        names = {line.split(",")[1] for line in series[1:]}
        assert {"utc_R", "utc_C", "utc_sigma_mean", "tc_R", "tc_C"} <= names

    def test_var_and_rolling(self, tmp_path, market_csv):
        out_dir = tmp_path / "bt"
        code = run_cli(
            "backtest", "--data", market_csv, "--data-kind", "returns",
            "--modes", "var", "--train-end", 230, "--lag", 1,
            "--out-dir", out_dir,
        )
        assert code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert "var" in report

    def test_unknown_mode_rejected(self, tmp_path, market_csv, capsys):
        code = run_cli(
            "backtest", "--data", market_csv, "--data-kind", "returns",
            "--modes", "hodl", "--train-end", 200, "--out-dir", tmp_path / "x",
        )
        assert code == 2
        assert "hodl" in capsys.readouterr().err

    def test_reproducible_reports(self, tmp_path, market_csv):
        outs = []
        for name in ("bt1", "bt2"):
            out_dir = tmp_path / name
            run_cli(
                "backtest", "--data", market_csv, "--data-kind", "returns",
                "--modes", "utc", "--train-end", 200,
                "--n-traders", 6, "--rounds", 1, "--max-delay", 3, "--seed", 9,
                "--out-dir", out_dir,
            )
            outs.append((out_dir / "report.json").read_bytes())
        assert outs[0] == outs[1]
