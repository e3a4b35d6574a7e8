"""Exit criteria. Each test is named ``test_criterion_<n>_...``; a PASS/FAIL line per criterion is
printed in the pytest terminal summary."""

import itertools
import time

import numpy as np
import pytest

from conftest import random_problem, weight_k
from oracles import dense_number_z, dense_xy, embed_state, random_feasible_sharpe, scipy_hrp
from test_backtest import FAST, micro_config, micro_panel
from kardinal.allocation import max_sharpe
from kardinal.annealing import AnnealConfig, anneal, metropolis_histogram, qubo_energy
from kardinal.backtest import STRATEGIES, run_walk_forward, select_at
from kardinal.encoding import (
    SelectionProblem,
    brute_force_optimum,
    classical_cost,
    penalty_scale,
    to_ising,
    to_qubo,
)
from kardinal.hrp import hrp_weights, recursive_bisection
from kardinal.market_data import PricePanel, estimate_moments, rebalance_dates, window_returns
from kardinal.qaoa import SubspaceState, _value_and_grad, apply_mixer, cost_diagonal, depth_sweep, enumerate_basis, spectrum_for
from kardinal.report import dumps

pytestmark = pytest.mark.acceptance


def test_criterion_1_constraint_preservation():
    from scipy.linalg import expm

    tic = time.perf_counter()
    rng = np.random.default_rng(1)
    for n in (4, 5, 6):
        h = dense_xy(n)
        nz = dense_number_z(n)
        assert np.max(np.abs(h @ nz - nz @ h)) < 1e-12
        for _ in range(50):
            k = int(rng.integers(1, n))
            basis = enumerate_basis(n, k)
            amps = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
            state = SubspaceState(basis, amps / np.linalg.norm(amps))
            beta = rng.uniform(-np.pi, np.pi)
            ours = embed_state(apply_mixer(state, beta, spectrum_for(n, k)).amplitudes, basis)
            dense = expm(-1j * beta * h) @ embed_state(state.amplitudes, basis)
            assert np.max(np.abs(ours - dense)) < 1e-9
    assert time.perf_counter() - tic < 10


def test_criterion_2_gradient_correctness():
    tic = time.perf_counter()
    rng = np.random.default_rng(2)
    basis = enumerate_basis(10, 5)
    eig = spectrum_for(10, 5)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 7))
        diag = cost_diagonal(to_ising(random_problem(rng, 10, 5)), basis)
        theta = rng.uniform(-1.0, 1.0, 2 * p)
        _, grad = _value_and_grad(theta, diag, eig)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd = (_value_and_grad(theta + e, diag, eig)[0] - _value_and_grad(theta - e, diag, eig)[0]) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / abs(fd))
    assert worst < 1e-5, worst
    assert time.perf_counter() - tic < 60


def test_criterion_3_oracle_recovery():
    tic = time.perf_counter()
    qaoa_hits = sa_hits = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        problem = random_problem(rng, 8, 3)
        best, _ = brute_force_optimum(problem)
        qaoa_hits += depth_sweep(problem, p_max=6).bitstring == best
        qubo = to_qubo(problem, penalty_scale(problem))
        samples = anneal(qubo, AnnealConfig(num_reads=5000, num_sweeps=1000, seed=seed), k=3)
        sa_hits += samples.best_feasible == best
    print(f"\nQAOA recovered {qaoa_hits}/20, SA recovered {sa_hits}/20")
    assert qaoa_hits >= 16
    assert sa_hits >= 18
    assert time.perf_counter() - tic < 600


def test_criterion_4_depth_scaling(fixture_panel):
    tic = time.perf_counter()
    dates = rebalance_dates(fixture_panel, "2025-01-01", "2025-10-31")
    assert len(dates) == 10
    p1, p6, lowest = [], [], np.inf
    for asof in dates:
        m = estimate_moments(fixture_panel, asof, 180)
        sweep = depth_sweep(SelectionProblem(m.mu_ann, m.sigma_ann, 0.3, 5), p_max=6)
        costs = {d.p: d.final_cost for d in sweep.depths}
        p1.append(costs[1])
        p6.append(costs[6])
        for d in sweep.depths:
            lowest = min(lowest, min(d.trace.grad_norms))
    print(f"\nmean cost p=1 {np.mean(p1):.6f}, p=6 {np.mean(p6):.6f}, smallest grad norm {lowest:.3e}")
    assert np.mean(p6) < np.mean(p1)
    assert lowest > 1e-4
    assert time.perf_counter() - tic < 300


def test_criterion_5_feasible_energy_equivalence():
    tic = time.perf_counter()
    rng = np.random.default_rng(5)
    for n in range(2, 9):
        for k in range(1, n + 1):
            problem = random_problem(rng, n, k)
            qubo = to_qubo(problem, penalty_scale(problem))
            ising = to_ising(problem)
            strings = list(weight_k(n, k))
            gaps = np.array([qubo_energy(qubo, s) - classical_cost(problem, s) for s in strings])
            assert gaps.max() - gaps.min() < 1e-9
            by_ising = sorted(strings, key=lambda s: (ising.energy(s), s))
            by_cost = sorted(strings, key=lambda s: (classical_cost(problem, s), s))
            assert by_ising == by_cost
    assert time.perf_counter() - tic < 30


def test_criterion_6_allocation_quality():
    tic = time.perf_counter()
    worst = np.inf
    for seed in range(50):
        rng = np.random.default_rng(6000 + seed)
        a = rng.normal(size=(10, 10)) * 0.15
        sigma = a @ a.T / 10 + np.diag(rng.uniform(0.01, 0.06, 10))
        mu = rng.normal(0.12, 0.12, 10)
        subset = sorted(rng.choice(10, size=5, replace=False))
        res = max_sharpe(subset, mu, sigma, 0.05, 0.50)
        w = res.weights
        assert abs(w.sum() - 1) < 1e-8
        assert np.all(w[subset] >= 0.05 - 1e-8) and np.all(w[subset] <= 0.50 + 1e-8)
        ref = random_feasible_sharpe(mu[subset], sigma[np.ix_(subset, subset)], 0.05, 0.50, 10_000, seed)
        worst = min(worst, res.sharpe - ref)
    print(f"\nsmallest margin over random search {worst:.3e}")
    assert worst >= -1e-6
    assert time.perf_counter() - tic < 60


def test_criterion_7_hrp_correctness(fixture_panel):
    w = recursive_bisection(np.diag([1.0, 4.0]), [0, 1])
    assert abs(w[0] - 0.8) <= 1e-12 and abs(w[1] - 0.2) <= 1e-12
    c = np.sqrt(0.75)
    r2 = np.column_stack([c * np.array([1, -1, 1, -1]), 2 * c * np.array([1, 1, -1, -1])])
    w = hrp_weights(r2)
    assert abs(w[0] - 0.8) <= 1e-12 and abs(w[1] - 0.2) <= 1e-12
    r = window_returns(fixture_panel, "2025-12-01", 180)
    assert np.max(np.abs(hrp_weights(r) - scipy_hrp(np.cov(r, rowvar=False)))) < 1e-8


def test_criterion_8_backtest_accounting(fixture_panel, default_config, fixture_result):
    import dataclasses

    # hand-computed two-asset, two-month case
    res = run_walk_forward(micro_panel(), micro_config())
    g1 = 0.5 * (110.0 / 103.0 - 1) + 0.5 * (49.4 / 51.5 - 1)
    g2 = 0.5 * (121.0 / 110.0 - 1) + 0.5 * (47.0 / 49.4 - 1)
    v1 = 1000.0 * (1 + g1 - 0.0005)
    v2 = v1 * (1 + g2)
    for s in STRATEGIES:
        r1, r2 = res.records[s]
        assert (r1.turnover, r2.turnover) == (1.0, 0.0)
        assert abs(r1.gross - g1) < 1e-15 and abs(r2.gross - g2) < 1e-15
        assert abs(r1.value - v1) < 1e-12 and abs(r2.value - v2) < 1e-12

    # accounting identity on the fixture run
    v0 = fixture_result.config.initial_capital
    for s in STRATEGIES:
        recs = fixture_result.records[s]
        product = v0 * np.prod([1 + r.net for r in recs])
        assert abs(recs[-1].value - product) <= 1e-10 * product

    # zero cost equals gross compounding
    cfg = dataclasses.replace(default_config, tau=0.0, end="2025-03-31", **FAST)
    free = run_walk_forward(fixture_panel, cfg)
    for s in STRATEGIES:
        value = cfg.initial_capital
        for r in free.records[s]:
            assert r.net == r.gross
            value *= 1 + r.gross
        assert free.records[s][-1].value == value

    # decisions at t ignore prices at or after t
    cfg = dataclasses.replace(default_config, **FAST)
    rng = np.random.default_rng(8)
    for asof in rebalance_dates(fixture_panel, "2025-02-01", "2025-12-31")[::3]:
        base = select_at(fixture_panel, cfg, asof)
        prices = fixture_panel.prices.copy()
        after = fixture_panel.dates >= asof
        prices[after] *= rng.uniform(0.5, 1.5, size=prices[after].shape)
        again = select_at(PricePanel(fixture_panel.dates, fixture_panel.tickers, prices), cfg, asof)
        for s in STRATEGIES:
            np.testing.assert_array_equal(base[s]["allocation"].weights, again[s]["allocation"].weights)


def test_criterion_9_end_to_end_determinism(fixture_panel, default_config, fixture_result):
    reference = dumps(fixture_result.to_json())
    tic = time.perf_counter()
    serial = run_walk_forward(fixture_panel, default_config, workers=1)
    elapsed = time.perf_counter() - tic
    threaded = run_walk_forward(fixture_panel, default_config, workers=4)
    assert len(fixture_result.months) == 12 and len(fixture_result.tickers) == 10
    assert dumps(serial.to_json()) == reference
    assert dumps(threaded.to_json()) == reference
    print(f"\nfull fixture backtest {elapsed:.1f} s")
    assert elapsed < 900


def test_criterion_10_sa_boltzmann():
    from kardinal.encoding import QuboModel

    qubo = QuboModel(np.array([-0.6, 0.3, -0.2]), np.array([[0, 0.5, -0.4], [0, 0, 0.7], [0, 0, 0]]), 1.0, 0.0)
    beta = 1.5
    energies = np.array([qubo_energy(qubo, "".join(b)) for b in itertools.product("01", repeat=3)])
    boltzmann = np.exp(-beta * (energies - energies.min()))
    boltzmann /= boltzmann.sum()
    empirical = metropolis_histogram(qubo, beta, 1_000_000, seed=10)
    tv = 0.5 * np.abs(empirical - boltzmann).sum()
    print(f"\ntotal variation {tv:.4f}")
    assert tv < 0.02
