"""Metropolis simulated annealing over QUBO models.

Each read starts from a uniformly random bitstring and performs
``num_sweeps`` sweeps; a sweep visits every variable once in a fresh random
order and proposes a single-bit flip. Inverse temperature follows a
geometric schedule from ``beta_hot`` to ``beta_cold``. Every read draws from
its own RNG substream keyed by ``(seed, read)``, so results do not depend on
how reads are chunked or spread over threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .encoding import QuboModel, as_bits, bits_to_str
from .errors import DimensionMismatch

READ_CHUNK = 256


@dataclass(frozen=True)
class AnnealConfig:
    """Sampler settings. ``beta_hot``/``beta_cold`` of ``None`` are auto-ranged from the QUBO."""

    num_reads: int = 5000
    num_sweeps: int = 1000
    beta_hot: float | None = None
    beta_cold: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_reads < 1 or self.num_sweeps < 1:
            raise ValueError("num_reads and num_sweeps must be >= 1")
        hot, cold = self.beta_hot, self.beta_cold
        if hot is not None and hot <= 0 or cold is not None and cold <= 0:
            raise ValueError("inverse temperatures must be positive")
        if hot is not None and cold is not None and not hot < cold:
            raise ValueError("need beta_hot < beta_cold")


@dataclass(frozen=True)
class Sample:
    bitstring: str
    energy: float
    read: int


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[Sample, ...]
    best_feasible: str | None
    beta_range: tuple[float, float]

    def to_csv(self, path: str | Path, k: int) -> None:
        """Dump ``read,energy,bitstring,feasible`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["read", "energy", "bitstring", "feasible"])
            for s in self.samples:
                w.writerow([s.read, format(s.energy, ".17g"), s.bitstring, int(s.bitstring.count("1") == k)])


def qubo_energy(qubo: QuboModel, x) -> float:
    xb = as_bits(x).astype(float)
    if xb.size != qubo.n:
        raise DimensionMismatch(f"bitstring length {xb.size} != {qubo.n}")
    return float(qubo.diag @ xb + xb @ qubo.offdiag @ xb + qubo.constant)


def default_beta_range(qubo: QuboModel) -> tuple[float, float]:
    """``(ln 2 / dE_max, ln 100 / dE_min)`` from single-flip energy magnitudes.

    Magnitudes are read off the spin form (``x = (1 + s)/2``), where a flip
    changes the energy by twice the local field: ``dE_max`` bounds the
    largest such change and ``dE_min`` is twice the smallest nonzero field or
    coupling. The hot end accepts the worst move with probability 1/2, the
    cold end the mildest with 1/100.
    """
    coupling = qubo.symmetric_offdiag()
    h = qubo.diag / 2 + coupling.sum(axis=1) / 4
    j = np.abs(coupling) / 4
    dmax = 2.0 * float(np.max(np.abs(h) + j.sum(axis=1)))
    coeffs = np.concatenate([np.abs(h), j[np.triu_indices(qubo.n, 1)]])
    nonzero = coeffs[coeffs > 1e-12 * max(dmax, 1e-300)]
    if dmax <= 0 or nonzero.size == 0:
        return 0.1, 1.0
    hot = math.log(2.0) / dmax
    cold = math.log(100.0) / (2.0 * float(nonzero.min()))
    if not hot < cold:
        cold = hot * 100.0
    return hot, cold


@numba.njit(cache=False, nogil=True)
def _sweep_kernel(diag, coupling, betas, x, orders, uniforms, hist):
    """Run Metropolis sweeps on one state in place.

    ``orders[s]`` is the visiting order of sweep ``s`` and ``uniforms[s, t]``
    the acceptance draw for its ``t``-th proposal. When ``hist`` has more than
    one slot the state after every sweep is tallied (asset 0 = high bit).
    """
    n = x.size
    field = diag.copy()
    for i in range(n):
        if x[i]:
            for j in range(n):
                field[j] += coupling[j, i]
    record = hist.size > 1
    for s in range(betas.size):
        beta = betas[s]
        for t in range(n):
            i = orders[s, t]
            de = field[i] if x[i] == 0 else -field[i]
            if de <= 0.0 or uniforms[s, t] < math.exp(-beta * de):
                sign = 1.0 if x[i] == 0 else -1.0
                x[i] = 1 - x[i]
                for j in range(n):
                    field[j] += sign * coupling[j, i]
        if record:
            code = 0
            for i in range(n):
                code = 2 * code + x[i]
            hist[code] += 1


def _read_stream(seed: int, read: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(read,))))


def _run_reads(qubo: QuboModel, betas: np.ndarray, seed: int, reads: range) -> np.ndarray:
    n = qubo.n
    diag = np.ascontiguousarray(qubo.diag, dtype=np.float64)
    coupling = np.ascontiguousarray(qubo.symmetric_offdiag(), dtype=np.float64)
    dummy = np.zeros(1, dtype=np.int64)
    out = np.empty((len(reads), n), dtype=np.int8)
    for row, r in enumerate(reads):
        rng = _read_stream(seed, r)
        x = rng.integers(0, 2, size=n).astype(np.int8)
        orders = np.argsort(rng.random((betas.size, n)), axis=1, kind="stable").astype(np.int64)
        uniforms = rng.random((betas.size, n))
        _sweep_kernel(diag, coupling, betas, x, orders, uniforms, dummy)
        out[row] = x
    return out


def anneal(qubo: QuboModel, config: AnnealConfig = AnnealConfig(), workers: int = 1, k: int | None = None) -> SampleSet:
    """Sample ``config.num_reads`` final states; ``k`` (if given) selects the feasibility filter."""
    hot, cold = default_beta_range(qubo)
    hot = config.beta_hot if config.beta_hot is not None else hot
    cold = config.beta_cold if config.beta_cold is not None else cold
    if not hot < cold:
        raise ValueError(f"need beta_hot < beta_cold, got {hot} >= {cold}")
    betas = np.geomspace(hot, cold, config.num_sweeps)

    chunks = [range(a, min(a + READ_CHUNK, config.num_reads)) for a in range(0, config.num_reads, READ_CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _run_reads(qubo, betas, config.seed, c), chunks))
    else:
        parts = [_run_reads(qubo, betas, config.seed, c) for c in chunks]
    states = np.concatenate(parts) if parts else np.empty((0, qubo.n), dtype=np.int8)

    xf = states.astype(float)
    energies = xf @ qubo.diag + np.einsum("si,ij,sj->s", xf, qubo.offdiag, xf) + qubo.constant
    samples = tuple(Sample(bits_to_str(x), float(e), r) for r, (x, e) in enumerate(zip(states, energies)))
    best = best_feasible(samples, k) if k is not None else None
    return SampleSet(samples, best, (hot, cold))


def best_feasible(samples, k: int) -> str | None:
    """Lowest-energy sample with exactly ``k`` ones (ties: smallest bitstring), else ``None``."""
    feasible = [s for s in samples if s.bitstring.count("1") == k]
    if not feasible:
        return None
    return min(feasible, key=lambda s: (s.energy, s.bitstring)).bitstring


def metropolis_histogram(qubo: QuboModel, beta: float, num_sweeps: int, seed: int = 0, burn_in: int = 1000) -> np.ndarray:
    """Empirical state distribution of a fixed-temperature chain, indexed by bitstring value."""
    n = qubo.n
    if n > 20:
        raise ValueError("histogram over 2^n states is limited to n <= 20")
    rng = _read_stream(seed, 0)
    x = rng.integers(0, 2, size=n).astype(np.int8)
    diag = np.ascontiguousarray(qubo.diag, dtype=np.float64)
    coupling = np.ascontiguousarray(qubo.symmetric_offdiag(), dtype=np.float64)
    total = burn_in + num_sweeps
    betas = np.full(total, float(beta))
    orders = np.argsort(rng.random((total, n)), axis=1, kind="stable").astype(np.int64)
    uniforms = rng.random((total, n))
    dummy = np.zeros(1, dtype=np.int64)
    _sweep_kernel(diag, coupling, betas[:burn_in], x, orders[:burn_in], uniforms[:burn_in], dummy)
    hist = np.zeros(2**n, dtype=np.int64)
    _sweep_kernel(diag, coupling, betas[burn_in:], x, orders[burn_in:], uniforms[burn_in:], hist)
    return hist / hist.sum()
