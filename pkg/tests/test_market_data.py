import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kardinal.errors import (
    DataError,
    DegenerateInput,
    EmptyPanel,
    InsufficientHistory,
    InvalidCorrelation,
    MissingTicker,
    NonPositivePrice,
)
from kardinal.market_data import (
    PricePanel,
    estimate_moments,
    ledoit_wolf,
    load_prices,
    rebalance_dates,
    shrinkage_intensity,
    synth_prices,
    window_returns,
)


def textbook_ledoit_wolf(x):
    """Loop-over-observations transcription of the identity-target estimator."""
    n, p = x.shape
    xc = x - x.mean(axis=0)
    s = np.zeros((p, p))
    for row in xc:
        s += np.outer(row, row)
    s /= n
    m = np.trace(s) / p
    d2 = np.linalg.norm(s - m * np.eye(p), "fro") ** 2 / p
    b2_bar = 0.0
    for row in xc:
        b2_bar += np.linalg.norm(np.outer(row, row) - s, "fro") ** 2 / p
    b2_bar /= n**2
    b2 = min(b2_bar, d2)
    a2 = d2 - b2
    return b2 / d2 * m * np.eye(p) + a2 / d2 * s


def write_csv(tmp_path, text):
    path = tmp_path / "prices.csv"
    path.write_text(text)
    return path


# -- load_prices


def test_interior_gap_is_forward_filled(tmp_path):
    path = write_csv(tmp_path, "date,AAPL,MSFT\n2024-01-02,10,20\n2024-01-03,11,\n2024-01-04,12,22\n")
    panel = load_prices(path, ["AAPL", "MSFT"])
    assert panel.prices[1, 1] == 20
    assert panel.prices.shape == (3, 2)


def test_leading_gap_row_dropped(tmp_path):
    path = write_csv(tmp_path, "date,AAPL,MSFT\n2024-01-02,10,\n2024-01-03,11,21\n2024-01-04,12,22\n")
    panel = load_prices(path, ["AAPL", "MSFT"])
    assert str(panel.dates[0]) == "2024-01-03"
    assert len(panel.dates) == 2


def test_all_missing_row_dropped(tmp_path):
    path = write_csv(tmp_path, "date,A\n2024-01-02,1\n2024-01-03,\n2024-01-04,2\n")
    panel = load_prices(path)
    # an all-missing row is a non-trading row, not a gap to fill
    assert [str(d) for d in panel.dates] == ["2024-01-02", "2024-01-04"]


def test_unsorted_input_sorted(tmp_path):
    path = write_csv(tmp_path, "date,A\n2024-01-04,2\n2024-01-02,1\n")
    panel = load_prices(path)
    assert np.all(np.diff(panel.dates.astype(int)) > 0)


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        load_prices(tmp_path / "absent.csv")
    path = write_csv(tmp_path, "date,A\n2024-01-02,1\n")
    with pytest.raises(MissingTicker):
        load_prices(path, ["B"])
    path = write_csv(tmp_path, "date,A\n2024-01-02,\n")
    with pytest.raises(EmptyPanel):
        load_prices(path)
    path = write_csv(tmp_path, "date,A\n2024-01-02,1\n2024-01-03,0\n")
    with pytest.raises(NonPositivePrice):
        load_prices(path)
    path = write_csv(tmp_path, "date,A\n2024-01-02,1\n2024-01-02,2\n")
    with pytest.raises(DataError):
        load_prices(path)


def test_fixture_shape(fixture_panel):
    assert fixture_panel.prices.shape[1] == 10
    assert np.all(np.diff(fixture_panel.dates.astype(int)) > 0)
    assert np.all(fixture_panel.prices > 0)


def test_clean_panel_round_trip_is_noop(tmp_path, fixture_panel):
    path = tmp_path / "again.csv"
    fixture_panel.write_csv(path)
    again = load_prices(path)
    np.testing.assert_array_equal(again.prices, fixture_panel.prices)
    np.testing.assert_array_equal(again.dates, fixture_panel.dates)
    assert again.tickers == fixture_panel.tickers


# -- window_returns


def test_window_arithmetic():
    panel = PricePanel(np.array(["2024-01-02", "2024-01-03", "2024-01-04", "2024-01-05"], dtype="datetime64[D]"),
                       ("A",), np.array([[100.0], [110.0], [121.0], [500.0]]))
    r = window_returns(panel, "2024-01-05", 2)
    np.testing.assert_allclose(r[:, 0], [0.10, 0.10], rtol=1e-14)


def test_window_needs_history(fixture_panel):
    with pytest.raises(InsufficientHistory):
        window_returns(fixture_panel, fixture_panel.dates[0], 5)


def test_fixture_window_shape(fixture_panel):
    r = window_returns(fixture_panel, "2025-01-02", 180)
    assert r.shape == (180, 10)


# -- ledoit_wolf


def test_identical_rows_give_zero():
    x = np.tile([0.01, -0.02, 0.03], (10, 1))
    np.testing.assert_allclose(ledoit_wolf(x), np.zeros((3, 3)), rtol=0, atol=1e-30)
    assert 0.0 <= shrinkage_intensity(x) <= 1.0


def test_single_asset_is_sample_variance():
    x = np.random.default_rng(0).normal(size=(50, 1))
    assert ledoit_wolf(x)[0, 0] == pytest.approx(np.var(x), rel=1e-14)


def test_matches_textbook_oracle():
    x = np.random.default_rng(11).normal(size=(180, 5)) * 0.01
    np.testing.assert_allclose(ledoit_wolf(x), textbook_ledoit_wolf(x), atol=1e-10, rtol=0)


def test_matches_sklearn():
    sklearn = pytest.importorskip("sklearn.covariance")
    x = np.random.default_rng(3).normal(size=(120, 7)) @ np.random.default_rng(4).normal(size=(7, 7))
    cov, delta = sklearn.ledoit_wolf(x)
    np.testing.assert_allclose(ledoit_wolf(x), cov, rtol=1e-10, atol=1e-12)
    assert shrinkage_intensity(x) == pytest.approx(delta, rel=1e-10)


def test_too_few_observations():
    with pytest.raises(DegenerateInput):
        ledoit_wolf(np.ones((1, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 8))
def test_output_psd_and_delta_bounded(seed, n, p):
    x = np.random.default_rng(seed).normal(size=(n, p))
    cov = ledoit_wolf(x)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() >= -1e-10
    assert 0.0 <= shrinkage_intensity(x) <= 1.0


def test_shrinkage_grows_as_sample_shrinks():
    rng = np.random.default_rng(5)
    root = rng.normal(size=(6, 6))
    small, large = [], []
    for _ in range(30):
        small.append(shrinkage_intensity(rng.normal(size=(15, 6)) @ root))
        large.append(shrinkage_intensity(rng.normal(size=(400, 6)) @ root))
    assert np.mean(small) > np.mean(large)


# -- estimate_moments


def test_constant_return_drift():
    prices = 100 * 1.001 ** np.arange(30)
    panel = PricePanel(np.datetime64("2024-01-01") + np.arange(30), ("A", "B"), np.column_stack([prices, prices]))
    m = estimate_moments(panel, panel.dates[-1], 20)
    np.testing.assert_allclose(m.mu_ann, 0.252, rtol=1e-10)
    np.testing.assert_allclose(m.sigma_ann, 0.0, atol=1e-20)


def test_moments_compose_oracle(fixture_panel):
    m = estimate_moments(fixture_panel, "2025-03-03", 180)
    r = window_returns(fixture_panel, "2025-03-03", 180)
    np.testing.assert_allclose(m.mu_ann, 252 * r.mean(axis=0), rtol=0, atol=1e-10)
    np.testing.assert_allclose(m.sigma_ann, 252 * textbook_ledoit_wolf(r), rtol=0, atol=1e-10)
    assert m.lookback_days == 180


def test_moments_ignore_rows_from_asof(fixture_panel):
    asof = np.datetime64("2025-05-01")
    base = estimate_moments(fixture_panel, asof, 180)
    prices = fixture_panel.prices.copy()
    prices[fixture_panel.dates >= asof] *= 3.0
    moved = PricePanel(fixture_panel.dates, fixture_panel.tickers, prices)
    again = estimate_moments(moved, asof, 180)
    np.testing.assert_array_equal(base.mu_ann, again.mu_ann)
    np.testing.assert_array_equal(base.sigma_ann, again.sigma_ann)


# -- synth_prices


def test_zero_vol_zero_drift_is_flat():
    p = synth_prices(1, n_assets=3, n_days=20, drift=0.0, vol=0.0)
    np.testing.assert_array_equal(p.prices, 100.0)


def test_synth_deterministic():
    a, b = synth_prices(9, n_days=50), synth_prices(9, n_days=50)
    np.testing.assert_array_equal(a.prices, b.prices)


def test_synth_empirical_vol():
    p = synth_prices(42, n_assets=10, n_days=500, vol=0.25)
    r = p.prices[1:] / p.prices[:-1] - 1
    realized = r.std(axis=0, ddof=1) * np.sqrt(252)
    assert np.all(np.abs(realized / 0.25 - 1) < 0.15)


def test_synth_rejects_bad_correlation():
    with pytest.raises(InvalidCorrelation):
        synth_prices(0, n_assets=3, correlation=-0.9)
    with pytest.raises(InvalidCorrelation):
        synth_prices(0, n_assets=2, correlation=np.array([[1.0, 0.2], [0.3, 1.0]]))


# -- calendar


def test_rebalance_dates_first_trading_day(fixture_panel):
    dates = rebalance_dates(fixture_panel, "2025-01-01", "2025-12-31")
    assert len(dates) == 12
    assert [str(d)[:7] for d in dates] == [f"2025-{m:02d}" for m in range(1, 13)]
    for d in dates:
        same_month = fixture_panel.dates[fixture_panel.dates.astype("datetime64[M]") == d.astype("datetime64[M]")]
        assert d == same_month[0]
