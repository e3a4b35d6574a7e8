"""Price ingestion, lookback returns and annualized moment estimation."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DegenerateInput,
    EmptyPanel,
    InsufficientHistory,
    InvalidCorrelation,
    MissingTicker,
    NonPositivePrice,
)

TRADING_DAYS = 252

DateLike = "str | dt.date | np.datetime64"


def to_day(value) -> np.datetime64:
    """Coerce a date-like value to ``datetime64[D]``."""
    return np.datetime64(pd.Timestamp(value).date(), "D")


@dataclass(frozen=True)
class PricePanel:
    """Adjusted close prices, one row per trading date and one column per ticker."""

    dates: np.ndarray  # datetime64[D], strictly increasing
    tickers: tuple[str, ...]
    prices: np.ndarray  # (n_dates, n_tickers), all > 0

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        prices = np.array(self.prices, dtype=float)
        if prices.ndim != 2 or prices.shape != (len(dates), len(self.tickers)):
            raise DataError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(dates)} dates x {len(self.tickers)} tickers"
            )
        if len(dates) == 0:
            raise EmptyPanel("panel has no rows")
        if len(dates) > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(prices)):
            raise DataError("panel contains missing or non-finite prices")
        if np.any(prices <= 0):
            raise NonPositivePrice("all prices must be strictly positive")
        dates.flags.writeable = False
        prices.flags.writeable = False
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "tickers", tuple(self.tickers))

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.prices, index=pd.DatetimeIndex(self.dates, name="date"), columns=list(self.tickers)
        )

    def row_of(self, date) -> int:
        """Row index of an exact date; raises ``KeyError`` when absent."""
        day = to_day(date)
        i = int(np.searchsorted(self.dates, day))
        if i >= len(self.dates) or self.dates[i] != day:
            raise KeyError(str(day))
        return i

    def select(self, tickers: Sequence[str]) -> "PricePanel":
        missing = [t for t in tickers if t not in self.tickers]
        if missing:
            raise MissingTicker(f"tickers not in panel: {missing}")
        cols = [self.tickers.index(t) for t in tickers]
        return PricePanel(self.dates, tuple(tickers), self.prices[:, cols])

    def write_csv(self, path: str | Path) -> None:
        """Write ``date,<ticker...>`` CSV with 17 significant digits."""
        frame = self.to_frame()
        frame.index = frame.index.strftime("%Y-%m-%d")
        frame.to_csv(path, float_format="%.17g", lineterminator="\n")


@dataclass(frozen=True)
class MomentEstimate:
    mu_ann: np.ndarray
    sigma_ann: np.ndarray
    lookback_days: int
    asof_date: np.datetime64


def load_prices(path: str | Path, tickers: Sequence[str] | None = None) -> PricePanel:
    """Read a ``date,<ticker1>,...`` CSV into a clean :class:`PricePanel`.

    Rows where every requested ticker is missing are dropped, interior gaps
    are forward-filled, and leading rows that still contain gaps (nothing to
    fill from) are dropped.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"price file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if "date" not in frame.columns:
        raise DataError(f"{path}: missing 'date' column")
    if tickers is None:
        tickers = [c for c in frame.columns if c != "date"]
    missing = [t for t in tickers if t not in frame.columns]
    if missing:
        raise MissingTicker(f"{path}: tickers not in file: {missing}")

    frame["date"] = pd.to_datetime(frame["date"], format="%Y-%m-%d")
    frame = frame.set_index("date")[list(tickers)].apply(pd.to_numeric, errors="coerce")
    if frame.index.has_duplicates:
        raise DataError(f"{path}: duplicate dates")
    frame = frame.sort_index()
    frame = frame.dropna(how="all").ffill().dropna(how="any")
    if frame.empty:
        raise EmptyPanel(f"{path}: no usable rows for {list(tickers)}")
    values = frame.to_numpy(dtype=float)
    if np.any(values <= 0):
        bad = frame.columns[(values <= 0).any(axis=0)].tolist()
        raise NonPositivePrice(f"{path}: non-positive prices for {bad}")
    return PricePanel(frame.index.to_numpy().astype("datetime64[D]"), tuple(tickers), values)


def window_returns(panel: PricePanel, asof, lookback: int) -> np.ndarray:
    """Daily simple returns over the ``lookback`` rows strictly before ``asof``."""
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    end = int(np.searchsorted(panel.dates, to_day(asof), side="left"))
    if end < lookback + 1:
        raise InsufficientHistory(
            f"need {lookback + 1} rows before {to_day(asof)}, panel has {end}"
        )
    block = panel.prices[end - lookback - 1 : end]
    return block[1:] / block[:-1] - 1.0


def _ledoit_wolf(returns: np.ndarray) -> tuple[np.ndarray, float]:
    x = np.asarray(returns, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n < 2:
        raise DegenerateInput(f"need at least 2 observations, got {n}")
    if p < 1:
        raise DegenerateInput("need at least one asset")
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / n
    target = np.trace(s) / p
    d2 = np.sum((s - target * np.eye(p)) ** 2) / p
    if d2 <= 0.0:
        # sample covariance already equals the scaled-identity target
        return (s + s.T) / 2, 0.0
    # average squared deviation of the per-observation outer products from S
    sq = xc**2
    b2_bar = (np.sum(sq.T @ sq) - n * np.sum(s**2)) / (n**2 * p)
    b2 = min(b2_bar, d2)
    delta = float(np.clip(b2 / d2, 0.0, 1.0))
    cov = (1.0 - delta) * s + delta * target * np.eye(p)
    return (cov + cov.T) / 2, delta


def ledoit_wolf(returns: np.ndarray) -> np.ndarray:
    """Ledoit-Wolf covariance shrunk toward ``tr(S)/N * I``.

    ``S`` is the maximum-likelihood (``1/n``) sample covariance, as in the
    original estimator.
    """
    return _ledoit_wolf(returns)[0]


def shrinkage_intensity(returns: np.ndarray) -> float:
    """Optimal Ledoit-Wolf blending weight on the identity target, in [0, 1]."""
    return _ledoit_wolf(returns)[1]


def estimate_moments(panel: PricePanel, asof, lookback: int = 180) -> MomentEstimate:
    r = window_returns(panel, asof, lookback)
    return MomentEstimate(
        mu_ann=TRADING_DAYS * r.mean(axis=0),
        sigma_ann=TRADING_DAYS * ledoit_wolf(r),
        lookback_days=lookback,
        asof_date=to_day(asof),
    )


def synth_prices(
    seed: int,
    n_assets: int = 10,
    n_days: int = 500,
    drift=0.1,
    vol=0.25,
    correlation=0.3,
    *,
    start="2024-01-02",
    tickers: Sequence[str] | None = None,
    s0: float = 100.0,
) -> PricePanel:
    """Correlated geometric Brownian motion on a business-day calendar.

    ``drift`` and ``vol`` are annualized (scalars or per-asset vectors);
    ``correlation`` is a scalar pairwise correlation or a full matrix.
    """
    if n_assets < 1 or n_days < 1:
        raise ValueError("n_assets and n_days must be positive")
    mu = np.broadcast_to(np.asarray(drift, dtype=float), (n_assets,)).copy()
    sig = np.broadcast_to(np.asarray(vol, dtype=float), (n_assets,)).copy()
    if np.any(sig < 0) or not np.all(np.isfinite(sig)):
        raise ValueError("vols must be finite and non-negative")
    corr = np.asarray(correlation, dtype=float)
    if corr.ndim == 0:
        corr = np.full((n_assets, n_assets), float(corr))
        np.fill_diagonal(corr, 1.0)
    if corr.shape != (n_assets, n_assets):
        raise InvalidCorrelation(f"correlation must be {n_assets}x{n_assets}")
    if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0):
        raise InvalidCorrelation("correlation must be symmetric with unit diagonal")
    eig, vec = np.linalg.eigh(corr)
    if eig.min() < -1e-10:
        raise InvalidCorrelation(f"correlation not PSD (min eigenvalue {eig.min():.3g})")
    root = vec * np.sqrt(np.clip(eig, 0.0, None))

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_days - 1, n_assets)) @ root.T
    dt_ = 1.0 / TRADING_DAYS
    log_steps = (mu - 0.5 * sig**2) * dt_ + sig * np.sqrt(dt_) * z
    paths = s0 * np.exp(np.vstack([np.zeros(n_assets), np.cumsum(log_steps, axis=0)]))

    dates = pd.bdate_range(start=pd.Timestamp(start), periods=n_days)
    if tickers is None:
        tickers = [f"A{i:02d}" for i in range(n_assets)]
    if len(tickers) != n_assets:
        raise ValueError("need one ticker per asset")
    return PricePanel(dates.to_numpy().astype("datetime64[D]"), tuple(tickers), paths)


def rebalance_dates(panel: PricePanel, start, end) -> list[np.datetime64]:
    """First trading day of each calendar month in ``[start, end]``."""
    lo, hi = to_day(start), to_day(end)
    d = panel.dates[(panel.dates >= lo) & (panel.dates <= hi)]
    if len(d) == 0:
        return []
    months = d.astype("datetime64[M]")
    first = np.concatenate([[True], months[1:] != months[:-1]])
    return list(d[first])
