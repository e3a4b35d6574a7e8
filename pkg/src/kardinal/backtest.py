"""Monthly walk-forward backtest of the QAOA-XY, simulated-annealing and HRP strategies."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationResult, allocate_or_fallback
from .annealing import AnnealConfig, anneal
from .encoding import SelectionProblem, penalty_scale, selection_cost, to_qubo
from .errors import CalendarError, ConfigError, DateNotFound, DimensionMismatch, EmptySeries, KardinalError
from .hrp import hrp_weights
from .market_data import PricePanel, estimate_moments, rebalance_dates, to_day, window_returns
from .qaoa import QaoaConfig, depth_sweep

log = logging.getLogger(__name__)

STRATEGIES = ("qaoa_xy", "sa", "hrp")
_STRATEGY_CODE = {name: i for i, name in enumerate(STRATEGIES)}


@dataclass(frozen=True)
class SaSettings:
    num_reads: int = 5000
    num_sweeps: int = 1000


@dataclass(frozen=True)
class BacktestConfig:
    tickers: tuple[str, ...]
    k: int = 5
    q: float = 0.3
    lookback: int = 180
    tau: float = 0.0005
    kappa: float = 0.1
    initial_capital: float = 1_000_000.0
    start: str = "2025-01-01"
    end: str = "2025-12-31"
    seed: int = 7
    p_max: int = 6
    lower: float = 0.05
    upper: float = 0.50
    free_initial_fill: bool = False
    hrp_shrinkage: bool = False
    qaoa: QaoaConfig = field(default_factory=QaoaConfig)
    sa: SaSettings = field(default_factory=SaSettings)

    def __post_init__(self):
        object.__setattr__(self, "tickers", tuple(self.tickers))
        n = len(self.tickers)
        if n == 0:
            raise ConfigError("tickers must not be empty")
        if not 1 <= self.k <= n:
            raise ConfigError(f"need 1 <= k <= {n}, got {self.k}")
        if not 0 <= self.q <= 1:
            raise ConfigError("q must lie in [0, 1]")
        if self.lookback < 2 or self.p_max < 1:
            raise ConfigError("lookback must be >= 2 and p_max >= 1")
        if self.tau < 0 or self.kappa < 0 or self.initial_capital <= 0:
            raise ConfigError("tau and kappa must be non-negative, initial_capital positive")
        if not 0 <= self.lower <= self.upper:
            raise ConfigError("need 0 <= lower <= upper")
        if to_day(self.start) > to_day(self.end):
            raise ConfigError("start must not be after end")

    @classmethod
    def from_dict(cls, doc: dict) -> "BacktestConfig":
        """Build from a JSON document; unknown keys are rejected at every level."""
        doc = dict(doc)
        sub = {"qaoa": QaoaConfig, "sa": SaSettings}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "tickers" not in doc:
            raise ConfigError("config must list 'tickers'")
        for key, typ in sub.items():
            if key in doc:
                if not isinstance(doc[key], dict):
                    raise ConfigError(f"'{key}' must be an object")
                bad = set(doc[key]) - {f.name for f in dataclasses.fields(typ)}
                if bad:
                    raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                try:
                    doc[key] = typ(**doc[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"invalid {key} settings: {exc}") from exc
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["tickers"] = list(self.tickers)
        doc["qaoa"]["gamma_ramp"] = list(self.qaoa.gamma_ramp)
        doc["qaoa"]["beta_ramp"] = list(self.qaoa.beta_ramp)
        return doc


@dataclass(frozen=True)
class PerfMetrics:
    total_return: float
    ann_vol: float
    sharpe: float
    max_drawdown: float
    avg_monthly_turnover: float
    zero_vol: bool = False


@dataclass
class MonthRecord:
    date: str
    end_date: str
    selection: str | None
    selection_cost: float | None
    weights: np.ndarray
    fallback_used: bool
    gross: float
    turnover: float
    net: float
    value: float
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "date": self.date,
            "end_date": self.end_date,
            "selection": self.selection,
            "selection_cost": self.selection_cost,
            "weights": [float(w) for w in self.weights],
            "fallback_used": self.fallback_used,
            "gross": self.gross,
            "turnover": self.turnover,
            "net": self.net,
            "value": self.value,
            "diagnostics": self.diagnostics,
        }


@dataclass
class BacktestResult:
    config: BacktestConfig
    tickers: tuple[str, ...]
    months: list[str]
    records: dict[str, list[MonthRecord]]
    summary: dict[str, PerfMetrics]
    timings: list[dict] = field(default_factory=list)

    def value_path(self, strategy: str) -> np.ndarray:
        return np.array([self.config.initial_capital] + [r.value for r in self.records[strategy]])

    def to_json(self) -> dict:
        per_month = []
        for m, date in enumerate(self.months):
            per_month.append({"date": date, "strategies": {s: self.records[s][m].to_json() for s in STRATEGIES}})
        return {
            "config": self.config.to_dict(),
            "per_month": per_month,
            "summary": {s: dataclasses.asdict(self.summary[s]) for s in STRATEGIES},
        }


# ---------------------------------------------------------------------------
# accounting primitives


def turnover(w_prev, w_new) -> float:
    a, b = np.asarray(w_prev, dtype=float), np.asarray(w_new, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"weight vectors differ in shape: {a.shape} vs {b.shape}")
    return float(np.abs(b - a).sum())


def net_return(gross: float, turnover_: float, tau: float) -> float:
    return gross - tau * turnover_


def holding_return(weights, panel: PricePanel, from_date, to_date) -> float:
    """Buy-and-hold return of ``weights`` from one panel date's close to another's."""
    try:
        i, j = panel.row_of(from_date), panel.row_of(to_date)
    except KeyError as exc:
        raise DateNotFound(f"date {exc.args[0]} not in panel") from exc
    w = np.asarray(weights, dtype=float)
    if w.size != panel.n_assets:
        raise DimensionMismatch(f"{w.size} weights for {panel.n_assets} assets")
    return float(w @ (panel.prices[j] / panel.prices[i] - 1.0))


def max_drawdown(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptySeries("value path is empty")
    return float(np.min(v / np.maximum.accumulate(v) - 1.0))


def perf_metrics(net_returns, values, turnovers=()) -> PerfMetrics:
    """Summary statistics of a monthly net-return series and its value path.

    A constant return series has zero volatility; its Sharpe ratio is then
    reported as ``sign(mean) * inf`` and ``zero_vol`` is set.
    """
    r = np.asarray(net_returns, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.size < 2:
        raise EmptySeries("need at least two monthly returns")
    if v.size == 0:
        raise EmptySeries("value path is empty")
    total = float(v[-1] / v[0] - 1.0)
    mean = float(r.mean())
    if np.all(r == r[0]):
        vol, zero_vol = 0.0, True
        sr = 0.0 if mean == 0 else math.copysign(math.inf, mean)
    else:
        vol, zero_vol = float(r.std(ddof=1) * math.sqrt(12)), False
        sr = mean * 12 / vol
    avg_to = float(np.mean(turnovers)) if len(turnovers) else 0.0
    return PerfMetrics(total, vol, sr, max_drawdown(v), avg_to, zero_vol)


# ---------------------------------------------------------------------------
# walk-forward


def derive_seed(seed: int, month: int, strategy: str) -> int:
    ss = np.random.SeedSequence([int(seed), int(month), _STRATEGY_CODE[strategy]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def select_at(
    panel: PricePanel,
    config: BacktestConfig,
    asof,
    prev: dict[str, frozenset[int]] | None = None,
    month: int = 0,
    workers: int = 1,
) -> dict:
    """Run both selectors and all three allocators for one rebalance date.

    Only rows strictly before ``asof`` are read.
    """
    prev = prev or {}
    returns = window_returns(panel, asof, config.lookback)
    moments = estimate_moments(panel, asof, config.lookback)
    mu, sigma = moments.mu_ann, moments.sigma_ann
    n = panel.n_assets

    def problem_for(strategy):
        return SelectionProblem(mu, sigma, config.q, config.k, prev.get(strategy, frozenset()), config.kappa)

    out = {}

    sa_problem = problem_for("sa")
    out["sa"] = {"problem": sa_problem, "selection": None, "diagnostics": {}}
    try:
        penalty = penalty_scale(sa_problem)
        sa_cfg = AnnealConfig(config.sa.num_reads, config.sa.num_sweeps, seed=derive_seed(config.seed, month, "sa"))
        samples = anneal(to_qubo(sa_problem, penalty), sa_cfg, workers=workers, k=config.k)
        feasible = sum(s.bitstring.count("1") == config.k for s in samples.samples)
        out["sa"]["selection"] = samples.best_feasible
        out["sa"]["diagnostics"] = {"penalty": penalty, "feasible_fraction": feasible / len(samples.samples)}
    except (KardinalError, ValueError) as exc:
        log.warning("SA failed at %s: %s", asof, exc)
        out["sa"]["diagnostics"] = {"error": f"{type(exc).__name__}: {exc}"}

    qa_problem = problem_for("qaoa_xy")
    out["qaoa_xy"] = {"problem": qa_problem, "selection": None, "diagnostics": {}, "timings": []}
    try:
        sweep = depth_sweep(qa_problem, config.p_max, config.qaoa, workers=workers)
        out["qaoa_xy"]["selection"] = sweep.bitstring
        out["qaoa_xy"]["diagnostics"] = {"depths": [d.to_json(timings=False) for d in sweep.depths]}
        out["qaoa_xy"]["timings"] = [d.to_json() for d in sweep.depths]
    except (KardinalError, ValueError) as exc:
        log.warning("QAOA failed at %s: %s", asof, exc)
        out["qaoa_xy"]["diagnostics"] = {"error": f"{type(exc).__name__}: {exc}"}

    for name in ("sa", "qaoa_xy"):
        entry = out[name]
        alloc = allocate_or_fallback(
            entry["selection"], mu, sigma, returns, config.k, config.lower, config.upper, config.hrp_shrinkage
        )
        entry["allocation"] = alloc
        sel = entry["selection"]
        entry["cost"] = selection_cost(entry["problem"], sel) if sel is not None else None

    w = hrp_weights(returns, shrinkage=config.hrp_shrinkage)
    out["hrp"] = {
        "problem": None,
        "selection": None,
        "cost": None,
        "allocation": AllocationResult(w, True, False, None),
        "diagnostics": {},
    }
    assert all(out[s]["allocation"].weights.size == n for s in STRATEGIES)
    return out


def _holding_ends(panel: PricePanel, dates, end) -> list[np.datetime64]:
    last = panel.dates[panel.dates <= to_day(end)]
    if last.size == 0:
        raise CalendarError("no panel rows inside the backtest period")
    ends = list(dates[1:]) + [last[-1]]
    for t, e in zip(dates, ends):
        if e <= t:
            raise CalendarError(f"no tradable data after rebalance date {t}")
    return ends


def run_walk_forward(panel: PricePanel, config: BacktestConfig, workers: int = 1) -> BacktestResult:
    """Run the full monthly protocol; deterministic for a fixed config and seed."""
    panel = panel.select(config.tickers)
    dates = rebalance_dates(panel, config.start, config.end)
    if not dates:
        raise CalendarError(f"no trading days between {config.start} and {config.end}")
    ends = _holding_ends(panel, dates, config.end)

    n = panel.n_assets
    records: dict[str, list[MonthRecord]] = {s: [] for s in STRATEGIES}
    prev_w = {s: np.zeros(n) for s in STRATEGIES}
    prev_sel: dict[str, frozenset[int]] = {}
    value = {s: float(config.initial_capital) for s in STRATEGIES}
    timings = []

    for m, (t, t_end) in enumerate(zip(dates, ends)):
        log.info("rebalance %s (%d/%d)", t, m + 1, len(dates))
        picks = select_at(panel, config, t, prev_sel, month=m, workers=workers)
        timings.append({"date": str(t), "qaoa_depths": picks["qaoa_xy"]["timings"]})
        for s in STRATEGIES:
            entry = picks[s]
            alloc = entry["allocation"]
            w = alloc.weights
            gross = holding_return(w, panel, t, t_end)
            to = turnover(prev_w[s], w)
            if m == 0 and config.free_initial_fill:
                to_cost = 0.0
            else:
                to_cost = to
            net = net_return(gross, to_cost, config.tau)
            value[s] = value[s] * (1.0 + net)
            records[s].append(
                MonthRecord(
                    date=str(t),
                    end_date=str(t_end),
                    selection=entry["selection"],
                    selection_cost=entry["cost"],
                    weights=w,
                    fallback_used=alloc.fallback_used,
                    gross=gross,
                    turnover=to,
                    net=net,
                    value=value[s],
                    diagnostics=entry["diagnostics"],
                )
            )
            prev_w[s] = w
            sel = entry["selection"]
            if s != "hrp":
                valid = sel is not None and sel.count("1") == config.k
                prev_sel[s] = frozenset(i for i, b in enumerate(sel) if b == "1") if valid else frozenset()

    summary = {}
    for s in STRATEGIES:
        recs = records[s]
        path = [config.initial_capital] + [r.value for r in recs]
        nets = [r.net for r in recs]
        if len(nets) >= 2:
            summary[s] = perf_metrics(nets, path, [r.turnover for r in recs])
        else:
            summary[s] = PerfMetrics(path[-1] / path[0] - 1.0, 0.0, 0.0, max_drawdown(path),
                                     float(np.mean([r.turnover for r in recs])), True)
    return BacktestResult(config, panel.tickers, [str(d) for d in dates], records, summary, timings)


__all__ = [
    "BacktestConfig",
    "BacktestResult",
    "MonthRecord",
    "PerfMetrics",
    "SaSettings",
    "STRATEGIES",
    "holding_return",
    "max_drawdown",
    "net_return",
    "perf_metrics",
    "run_walk_forward",
    "select_at",
    "turnover",
]
