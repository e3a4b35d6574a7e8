import itertools
import re

import numpy as np
import pytest

from kardinal.cli import bundled
from kardinal.encoding import SelectionProblem
from kardinal.market_data import load_prices

FIXTURE_TICKERS = ["AAPL", "MSFT", "GOOGL", "AMZN", "JPM", "V", "TSLA", "UNH", "LLY", "XOM"]

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def random_problem(rng, n, k, q=0.3, kappa=0.0, prev=()):
    a = rng.normal(size=(n, n)) * 0.2
    sigma = a @ a.T / n + np.diag(rng.uniform(0.01, 0.05, n))
    mu = rng.normal(0.1, 0.15, n)
    return SelectionProblem(mu, sigma, q, k, frozenset(prev), kappa)


def weight_k(n, k):
    for ones in itertools.combinations(range(n), k):
        yield "".join("1" if i in ones else "0" for i in range(n))


@pytest.fixture(scope="session")
def fixture_panel():
    return load_prices(bundled("fixture_prices.csv"), FIXTURE_TICKERS)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    m = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if m:
        _ACCEPTANCE[int(m.group(1))] = ("PASS" if report.passed else "FAIL", m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, name = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {name}")


@pytest.fixture(scope="session")
def default_config():
    import json

    from kardinal.backtest import BacktestConfig

    return BacktestConfig.from_dict(json.loads(bundled("default_config.json").read_text()))


@pytest.fixture(scope="session")
def fixture_result(fixture_panel, default_config):
    from kardinal.backtest import run_walk_forward

    return run_walk_forward(fixture_panel, default_config, workers=1)
