"""Long-only Sharpe-max weights on a selected subset, with HRP as the fallback."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .encoding import as_bits
from .errors import InfeasibleBox, KardinalError, NumericFailure, ZeroRisk
from .hrp import hrp_weights

log = logging.getLogger(__name__)

N_RANDOM_STARTS = 8
MAX_ITER = 500
PG_TOL = 1e-8
START_SEED = 0


@dataclass(frozen=True)
class AllocationResult:
    weights: np.ndarray  # full universe, zeros off-subset
    success: bool
    fallback_used: bool
    sharpe: float | None


def sharpe(w, mu_ann, sigma_ann) -> float:
    """Annualized Sharpe ratio with a zero risk-free rate."""
    w = np.asarray(w, dtype=float)
    var = float(w @ np.asarray(sigma_ann) @ w)
    if not var > 0:
        raise ZeroRisk(f"portfolio variance {var:.3g} is not positive")
    return float(np.asarray(mu_ann) @ w) / np.sqrt(var)


def project_box_simplex(v, lower: float, upper: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w : sum w = 1, lower <= w <= upper}``.

    The projection is ``clip(v - t, lower, upper)`` for the unique shift
    ``t`` restoring the budget. The budget sum is piecewise linear in ``t``
    with breakpoints at ``v - upper`` and ``v - lower``, so ``t`` is found
    exactly by locating the bracketing breakpoints.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if n * lower > 1 + 1e-12 or n * upper < 1 - 1e-12:
        raise InfeasibleBox(f"{n} names cannot sum to 1 within [{lower}, {upper}]")
    knots = np.unique(np.concatenate([v - upper, v - lower]))
    totals = np.clip(v[None, :] - knots[:, None], lower, upper).sum(axis=1)  # non-increasing
    j = int(np.searchsorted(-totals, -1.0, side="left"))
    if j == 0:
        t = knots[0]
    elif j == knots.size:
        t = knots[-1]
    else:
        t0, t1, f0, f1 = knots[j - 1], knots[j], totals[j - 1], totals[j]
        t = t0 if f0 == f1 else t0 + (f0 - 1.0) * (t1 - t0) / (f0 - f1)
    w = np.clip(v - t, lower, upper)
    free = (w > lower) & (w < upper)
    if free.any():
        w[free] += (1.0 - w.sum()) / free.sum()
    return np.clip(w, lower, upper)


def _sharpe_grad(w, mu, sigma):
    sw = sigma @ w
    var = float(w @ sw)
    if not var > 0:
        raise ZeroRisk("zero portfolio variance")
    sd = np.sqrt(var)
    m = float(mu @ w)
    return m / sd, mu / sd - m * sw / sd**3


def _ascend(w, mu, sigma, lower, upper):
    value, grad = _sharpe_grad(w, mu, sigma)
    step = 1.0
    for _ in range(MAX_ITER):
        pg = project_box_simplex(w + grad, lower, upper) - w
        if np.linalg.norm(pg) < PG_TOL:
            break
        # backtracking along the projection arc
        while True:
            cand = project_box_simplex(w + step * grad, lower, upper)
            c_value, c_grad = _sharpe_grad(cand, mu, sigma)
            if c_value >= value + 1e-4 * grad @ (cand - w) or step < 1e-12:
                break
            step *= 0.5
        if c_value < value:
            break
        w, value, grad = cand, c_value, c_grad
        step = min(step * 2.0, 1e6)
    return w, value


def random_feasible(rng: np.random.Generator, k: int, lower: float, upper: float, size: int) -> np.ndarray:
    """Uniform draws from the box-simplex intersection (rejection from a scaled Dirichlet)."""
    slack = 1.0 - k * lower
    if slack < -1e-12 or k * upper < 1 - 1e-12:
        raise InfeasibleBox(f"{k} names cannot sum to 1 within [{lower}, {upper}]")
    if slack <= 1e-12 or k * upper <= 1 + 1e-12:
        # the box pins a single point
        point = np.full(k, lower if slack <= 1e-12 else upper)
        return np.tile(point, (size, 1))
    out = []
    cap = (upper - lower) / slack
    while sum(len(o) for o in out) < size:
        d = rng.dirichlet(np.ones(k), size=max(size, 64))
        out.append(lower + slack * d[(d <= cap).all(axis=1)])
    return np.concatenate(out)[:size]


def max_sharpe(subset, mu_ann, sigma_ann, lower: float = 0.05, upper: float = 0.50) -> AllocationResult:
    """Best local Sharpe maximum over several projected-gradient starts.

    Starts: equal weights, inverse-variance weights and 8 seeded random
    feasible points. A later start replaces the incumbent only on a strict
    improvement, so symmetric problems keep the equal-weight answer.
    """
    idx = np.asarray(sorted(int(i) for i in subset), dtype=int)
    mu_all, sigma_all = np.asarray(mu_ann, dtype=float), np.asarray(sigma_ann, dtype=float)
    k = idx.size
    if k == 0 or k * lower > 1 + 1e-12 or k * upper < 1 - 1e-12:
        raise InfeasibleBox(f"{k} names cannot sum to 1 within [{lower}, {upper}]")
    mu, sigma = mu_all[idx], sigma_all[np.ix_(idx, idx)]

    var = np.diag(sigma)
    starts = [np.full(k, 1.0 / k)]
    if np.all(var > 0):
        starts.append(project_box_simplex((1 / var) / np.sum(1 / var), lower, upper))
    rng = np.random.default_rng(START_SEED)
    starts.extend(random_feasible(rng, k, lower, upper, N_RANDOM_STARTS))

    best_w, best_val = None, -np.inf
    for w0 in starts:
        try:
            w, val = _ascend(project_box_simplex(w0, lower, upper), mu, sigma, lower, upper)
        except ZeroRisk:
            continue
        if not np.isfinite(val):
            continue
        if best_w is None or val > best_val + 1e-12:
            best_w, best_val = w, val
    if best_w is None:
        raise NumericFailure("no start produced a finite Sharpe ratio")
    weights = np.zeros(mu_all.size)
    weights[idx] = best_w
    return AllocationResult(weights, True, False, float(best_val))


def allocate_or_fallback(
    selection,
    mu_ann,
    sigma_ann,
    returns,
    k: int,
    lower: float = 0.05,
    upper: float = 0.50,
    hrp_shrinkage: bool = False,
) -> AllocationResult:
    """Sharpe-max on a valid ``k``-name selection, else HRP over the whole universe."""
    n = np.asarray(mu_ann).size
    reason = None
    if selection is None:
        reason = "no selection"
    else:
        try:
            bits = as_bits(selection)
        except ValueError:
            bits = None
        if bits is None or bits.size != n or int(bits.sum()) != k:
            reason = f"invalid selection {selection!r}"
    if reason is None:
        try:
            res = max_sharpe(np.flatnonzero(bits), mu_ann, sigma_ann, lower, upper)
            if np.all(np.isfinite(res.weights)):
                return res
            reason = "non-finite weights"
        except KardinalError as exc:
            reason = f"{type(exc).__name__}: {exc}"
    log.info("allocation falls back to HRP (%s)", reason)
    w = hrp_weights(returns, shrinkage=hrp_shrinkage)
    try:
        s = sharpe(w, mu_ann, sigma_ann)
    except ZeroRisk:
        s = None
    return AllocationResult(w, False, True, s)
