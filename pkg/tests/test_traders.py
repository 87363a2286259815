import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradercompany.errors import ConfigError, HistoryError
from tradercompany.panels import ReturnPanel
from tradercompany.traders import (
    ACTIVATIONS,
    OPERATORS,
    Activation,
    Operator,
    TermParams,
    Trader,
    TraderHyperParams,
    TraderParams,
    WeightPosterior,
    compute_signal,
    cumulative_return,
    min_valid_time,
    predict_point,
    predict_with_uncertainty,
    prediction_series,
    sample_random_trader,
    signal_matrix,
)

SQRT_005 = 0.22360679774997896  # sqrt(0.05)


def panel_from(rows):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    stamps = [f"t{k:04d}" for k in range(rows.shape[1])]
    return ReturnPanel(
        symbols=[f"s{i}" for i in range(rows.shape[0])], timestamps=stamps, returns=rows
    )


def one_term_trader(op, act, p=0, q=0, d=0, f=0, mean=(1.0,), cov=None):
    params = TraderParams(
        target_stock=0, terms=(TermParams(p=p, q=q, d=d, f=f, op=op, act=act),)
    )
    mean = np.asarray(mean, dtype=float)
    if cov is None:
        weights = WeightPosterior.point(mean)
    else:
        weights = WeightPosterior(mean=mean, cov=np.asarray(cov, dtype=float))
    return Trader(params=params, weights=weights)


class TestComputeSignal:
    def test_left_identity_passes_raw_return(self):
        panel = panel_from([[0.01, -0.02, 0.03]])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY)
        z = compute_signal(trader.params, panel, 2)
        assert z[0] == panel.returns[0, 2]

    def test_relu_of_max(self):
        panel = panel_from([[-0.02], [0.01]])
        params = TraderParams(
            target_stock=0,
            terms=(TermParams(p=0, q=1, d=0, f=0, op=Operator.MAX, act=Activation.RELU),),
        )
        z = signal_matrix(params, panel, np.array([0]))
        assert z[0, 0] == 0.01

    def test_sign_of_difference(self):
        panel = panel_from([[0.03], [0.01]])
        params = TraderParams(
            target_stock=0,
            terms=(TermParams(p=0, q=1, d=0, f=0, op=Operator.SUB, act=Activation.SIGN),),
        )
        z = signal_matrix(params, panel, np.array([0]))
        assert z[0, 0] == 1.0

    def test_delays_index_backwards(self):
        panel = panel_from([[0.1, 0.2, 0.3, 0.4]])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, d=2)
        z = compute_signal(trader.params, panel, 3)
        assert z[0] == pytest.approx(0.2)

    def test_insufficient_history_names_term(self):
        panel = panel_from([[0.1, 0.2, 0.3]])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, d=2)
        with pytest.raises(HistoryError, match="term 0"):
            compute_signal(trader.params, panel, 1)

    def test_exp_guard_keeps_signals_finite(self):
        panel = panel_from([[1000.0, -1000.0]])
        trader = one_term_trader(Operator.ADD, Activation.EXP)
        z = compute_signal(trader.params, panel, 1)
        assert np.isfinite(z[0])

    def test_greater_is_sign_of_difference(self):
        panel = panel_from([[0.01], [0.05]])
        params = TraderParams(
            target_stock=0,
            terms=(
                TermParams(p=0, q=1, d=0, f=0, op=Operator.GREATER, act=Activation.IDENTITY),
                TermParams(p=0, q=1, d=0, f=0, op=Operator.LESS, act=Activation.IDENTITY),
            ),
        )
        z = signal_matrix(params, panel, np.array([0]))
        assert z[0, 0] == -1.0
        assert z[0, 1] == 1.0


class TestCorrOperator:
    def test_identical_windows_give_one(self):
        series = np.sin(np.arange(30.0))
        panel = panel_from([series, series])
        trader = one_term_trader(Operator.CORR, Activation.IDENTITY, p=0, q=1)
        z = compute_signal(trader.params, panel, 25)
        assert z[0] == pytest.approx(1.0, abs=1e-12)

    def test_negated_windows_give_minus_one(self):
        series = np.sin(np.arange(30.0))
        panel = panel_from([series, -series])
        trader = one_term_trader(Operator.CORR, Activation.IDENTITY, p=0, q=1)
        z = compute_signal(trader.params, panel, 25)
        assert z[0] == pytest.approx(-1.0, abs=1e-12)

    def test_constant_window_gives_zero(self):
        panel = panel_from([np.zeros(30), np.sin(np.arange(30.0))])
        trader = one_term_trader(Operator.CORR, Activation.IDENTITY, p=0, q=1)
        z = compute_signal(trader.params, panel, 25)
        assert z[0] == 0.0

    def test_matches_numpy_corrcoef(self):
        rng = np.random.default_rng(0)
        rows = rng.normal(0, 0.01, size=(2, 40))
        panel = panel_from(rows)
        trader = one_term_trader(Operator.CORR, Activation.IDENTITY, p=0, q=1, d=2, f=0)
        z = compute_signal(trader.params, panel, 30, corr_window=10)
        expected = np.corrcoef(rows[0, 19:29], rows[1, 21:31])[0, 1]
        assert z[0] == pytest.approx(expected, abs=1e-12)

    def test_needs_full_window_of_history(self):
        panel = panel_from([np.arange(30.0), np.arange(30.0)])
        trader = one_term_trader(Operator.CORR, Activation.IDENTITY, p=0, q=1)
        assert min_valid_time(trader.params, corr_window=10) == 9
        compute_signal(trader.params, panel, 9)
        with pytest.raises(HistoryError):
            compute_signal(trader.params, panel, 8)


class TestPredict:
    def test_single_term_identity(self):
        panel = panel_from([[0.05]])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, mean=(1.0,))
        assert predict_point(trader, panel, 0) == 0.05

    def test_zero_weights_give_zero(self):
        panel = panel_from([[0.4], [0.3]])
        params = TraderParams(
            target_stock=0,
            terms=(
                TermParams(p=0, q=0, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
                TermParams(p=1, q=1, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
            ),
        )
        trader = Trader(params=params, weights=WeightPosterior.point([0.0, 0.0]))
        assert predict_point(trader, panel, 0) == 0.0

    def test_dot_product(self):
        panel = panel_from([[0.01], [0.03]])
        params = TraderParams(
            target_stock=0,
            terms=(
                TermParams(p=0, q=0, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
                TermParams(p=1, q=1, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
            ),
        )
        trader = Trader(params=params, weights=WeightPosterior.point([2.0, -1.0]))
        assert predict_point(trader, panel, 0) == pytest.approx(-0.01, abs=1e-15)

    def test_zero_covariance_degenerates_to_point(self):
        panel = panel_from([[0.01, 0.02, 0.03]])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, mean=(0.7,))
        mu, sigma = predict_with_uncertainty(trader, panel, 2)
        assert sigma == 0.0
        assert mu == predict_point(trader, panel, 2)

    def test_identity_covariance_pythagoras(self):
        panel = panel_from([[3.0], [4.0]])
        params = TraderParams(
            target_stock=0,
            terms=(
                TermParams(p=0, q=0, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
                TermParams(p=1, q=1, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
            ),
        )
        trader = Trader(
            params=params,
            weights=WeightPosterior(mean=np.zeros(2), cov=np.eye(2)),
        )
        _, sigma = predict_with_uncertainty(trader, panel, 0)
        assert sigma == pytest.approx(5.0, abs=1e-12)

    def test_diagonal_covariance(self):
        panel = panel_from([[1.0], [1.0]])
        params = TraderParams(
            target_stock=0,
            terms=(
                TermParams(p=0, q=0, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
                TermParams(p=1, q=1, d=0, f=0, op=Operator.LEFT, act=Activation.IDENTITY),
            ),
        )
        trader = Trader(
            params=params,
            weights=WeightPosterior(mean=[0.5, 0.5], cov=np.diag([0.01, 0.04])),
        )
        mu, sigma = predict_with_uncertainty(trader, panel, 0)
        assert mu == pytest.approx(1.0, abs=1e-15)
        assert sigma == pytest.approx(SQRT_005, abs=1e-12)

    def test_mean_equals_point_prediction_exactly(self):
        rng = np.random.default_rng(3)
        panel = panel_from(rng.normal(0, 0.01, size=(3, 50)))
        hyper = TraderHyperParams(num_stocks=3, target_stock=1, max_delay=5)
        for _ in range(25):
            trader = sample_random_trader(hyper, rng, init_cov_scale=0.5)
            t = 20
            mu, _ = predict_with_uncertainty(trader, panel, t)
            assert mu == predict_point(trader, panel, t)


class TestMonteCarloAgainstPosterior:
    def test_sampled_weights_match_analytic_mean_and_variance(self):
        rng = np.random.default_rng(11)
        m = 4
        mean = rng.normal(size=m)
        half = rng.normal(size=(m, m))
        cov = half @ half.T / m
        z = rng.normal(size=m)
        mu_analytic = mean @ z
        var_analytic = z @ cov @ z
        draws = rng.multivariate_normal(mean, cov, size=100_000)
        samples = draws @ z
        se = np.sqrt(var_analytic / samples.size)
        assert abs(samples.mean() - mu_analytic) < 4 * se
        assert abs(samples.var() - var_analytic) / var_analytic < 0.05


class TestCumulativeReturn:
    def test_always_correct_sign(self):
        panel = panel_from([np.full(11, 0.01)])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, mean=(1.0,))
        rows = np.arange(0, 10)
        assert cumulative_return(trader, panel, rows) == pytest.approx(0.10, abs=1e-12)

    def test_flat_predictions_earn_zero(self):
        panel = panel_from([np.full(11, 0.01)])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, mean=(0.0,))
        assert cumulative_return(trader, panel, np.arange(0, 10)) == 0.0

    def test_always_wrong_sign(self):
        panel = panel_from([np.full(11, 0.01)])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, mean=(-1.0,))
        assert cumulative_return(trader, panel, np.arange(0, 10)) == pytest.approx(-0.10, abs=1e-12)

    def test_empty_range_rejected(self):
        panel = panel_from([np.full(11, 0.01)])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY)
        with pytest.raises(HistoryError, match="nonempty"):
            cumulative_return(trader, panel, np.array([], dtype=int))

    def test_needs_realised_next_return(self):
        panel = panel_from([np.full(11, 0.01)])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY)
        with pytest.raises(HistoryError):
            cumulative_return(trader, panel, np.array([10]))


class TestWeightPosterior:
    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ConfigError, match="symmetric"):
            WeightPosterior(mean=[0.0, 0.0], cov=[[1.0, 0.5], [0.2, 1.0]])

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(ConfigError, match="semi-definite"):
            WeightPosterior(mean=[0.0, 0.0], cov=[[1.0, 2.0], [2.0, 1.0]])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            WeightPosterior(mean=[0.0, 0.0, 0.0], cov=np.eye(2))

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_quadratic_form_is_nonnegative_for_sampled_traders(self, seed):
        rng = np.random.default_rng(seed)
        hyper = TraderHyperParams(num_stocks=2, max_delay=3)
        trader = sample_random_trader(hyper, rng, init_cov_scale=rng.uniform(0.0, 2.0))
        panel = panel_from(rng.normal(0, 0.05, size=(2, 40)))
        z = signal_matrix(trader.params, panel, np.arange(15, 30))
        quad = np.einsum("ij,jk,ik->i", z, trader.weights.cov, z)
        assert np.all(quad >= -1e-10)


class TestSampleRandomTrader:
    def test_singleton_domains(self):
        rng = np.random.default_rng(0)
        hyper = TraderHyperParams(num_stocks=1, max_terms=1, max_delay=0)
        for _ in range(20):
            trader = sample_random_trader(hyper, rng)
            assert trader.params.num_terms == 1
            term = trader.params.terms[0]
            assert term.p == 0 and term.q == 0 and term.d == 0 and term.f == 0

    def test_term_count_uniform(self):
        rng = np.random.default_rng(42)
        hyper = TraderHyperParams(num_stocks=3, max_terms=10)
        counts = np.zeros(10)
        n = 10_000
        for _ in range(n):
            counts[sample_random_trader(hyper, rng).params.num_terms - 1] += 1
        freq = counts / n
        se = np.sqrt(0.1 * 0.9 / n)
        assert np.all(np.abs(freq - 0.1) < 3 * se + 1e-9)

    def test_fixed_seed_is_deterministic(self):
        hyper = TraderHyperParams(num_stocks=4)
        a = sample_random_trader(hyper, np.random.default_rng(123))
        b = sample_random_trader(hyper, np.random.default_rng(123))
        assert a.params == b.params
        np.testing.assert_array_equal(a.weights.mean, b.weights.mean)
        np.testing.assert_array_equal(a.weights.cov, b.weights.cov)

    def test_point_mode_has_zero_covariance(self):
        rng = np.random.default_rng(5)
        hyper = TraderHyperParams(num_stocks=2)
        trader = sample_random_trader(hyper, rng, init_cov_scale=0.0)
        assert np.all(trader.weights.cov == 0.0)

    def test_fields_within_domains(self):
        rng = np.random.default_rng(9)
        hyper = TraderHyperParams(num_stocks=5, max_terms=4, max_delay=7)
        for _ in range(300):
            trader = sample_random_trader(hyper, rng)
            assert 1 <= trader.params.num_terms <= 4
            for term in trader.params.terms:
                assert 0 <= term.p < 5 and 0 <= term.q < 5
                assert 0 <= term.d <= 7 and 0 <= term.f <= 7
                assert term.op in OPERATORS and term.act in ACTIVATIONS
            assert np.all(np.abs(trader.weights.mean) <= 1.0)


class TestSignConvention:
    def test_sign_of_zero_is_zero(self):
        assert np.sign(0.0) == 0.0
        panel = panel_from([[0.0, 0.01]])
        trader = one_term_trader(Operator.LEFT, Activation.IDENTITY, mean=(1.0,))
        # prediction at t=0 is exactly zero, so the position is flat
        assert cumulative_return(trader, panel, np.array([0])) == 0.0


class TestPredictionSeries:
    def test_matches_pointwise_calls(self):
        rng = np.random.default_rng(21)
        panel = panel_from(rng.normal(0, 0.02, size=(3, 60)))
        hyper = TraderHyperParams(num_stocks=3, max_delay=5)
        trader = sample_random_trader(hyper, rng, init_cov_scale=0.3)
        ts = np.arange(20, 40)
        mu, sigma = prediction_series(trader, panel, ts)
        for k, t in enumerate(ts):
            mu_t, sigma_t = predict_with_uncertainty(trader, panel, int(t))
            assert mu[k] == pytest.approx(mu_t, abs=1e-15)
            assert sigma[k] == pytest.approx(sigma_t, abs=1e-15)
