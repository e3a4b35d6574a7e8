"""K-of-N selection objective and its Ising and QUBO encodings.

Bitstrings are written asset 0 first: ``"10010"`` selects assets 0 and 3.
Read as a binary number this puts asset 0 in the most significant bit, so
lexicographic order on strings and integer order agree.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositivePenalty, TooLarge

MAX_ENUMERATION = 2_000_000
PENALTY_FACTOR = 2.5
PENALTY_FLOOR = 1e-9


def as_bits(x) -> np.ndarray:
    """0/1 ``int8`` vector from a bitstring, sequence or array."""
    if isinstance(x, str):
        arr = np.frombuffer(x.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        arr = np.asarray(x)
    arr = arr.astype(np.int8)
    if arr.ndim != 1 or np.any((arr != 0) & (arr != 1)):
        raise ValueError(f"not a bitstring: {x!r}")
    return arr


def bits_to_str(x) -> str:
    return "".join("1" if b else "0" for b in np.asarray(x).ravel())


def bits_from_indices(indices, n: int) -> str:
    x = np.zeros(n, dtype=np.int8)
    x[list(indices)] = 1
    return bits_to_str(x)


@dataclass(frozen=True)
class SelectionProblem:
    """Annualized moments plus the selection knobs shared by every solver."""

    mu_ann: np.ndarray
    sigma_ann: np.ndarray
    q: float
    k: int
    prev_holdings: frozenset[int] = field(default_factory=frozenset)
    kappa: float = 0.0

    def __post_init__(self):
        mu = np.array(self.mu_ann, dtype=float).ravel()
        sigma = np.array(self.sigma_ann, dtype=float)
        n = mu.size
        if sigma.shape != (n, n):
            raise DimensionMismatch(f"sigma shape {sigma.shape} does not match {n} assets")
        if not np.allclose(sigma, sigma.T, atol=1e-12, rtol=0):
            raise ValueError("sigma must be symmetric")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if not 1 <= int(self.k) <= n:
            raise ValueError(f"need 1 <= K <= N, got K={self.k}, N={n}")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        prev = frozenset(int(i) for i in self.prev_holdings)
        if any(not 0 <= i < n for i in prev):
            raise ValueError(f"previous holdings {sorted(prev)} out of range for N={n}")
        mu.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "mu_ann", mu)
        object.__setattr__(self, "sigma_ann", sigma)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "prev_holdings", prev)

    @property
    def n(self) -> int:
        return self.mu_ann.size

    def bonus_vector(self) -> np.ndarray:
        """Per-asset continuity discount (``kappa`` on previously held names)."""
        b = np.zeros(self.n)
        b[sorted(self.prev_holdings)] = self.kappa
        return b

    def linear_terms(self) -> np.ndarray:
        """Coefficients of ``x_i`` in the 0/1 objective, diagonal risk and bonus included."""
        return self.q * np.diag(self.sigma_ann) - (1 - self.q) * self.mu_ann - self.bonus_vector()

    def to_json(self) -> dict:
        return {
            "mu": self.mu_ann.tolist(),
            "sigma": self.sigma_ann.tolist(),
            "q": self.q,
            "k": self.k,
            "prev": sorted(self.prev_holdings),
            "kappa": self.kappa,
        }

    @classmethod
    def from_json(cls, doc: dict | str) -> "SelectionProblem":
        if isinstance(doc, str):
            doc = json.loads(doc)
        unknown = set(doc) - {"mu", "sigma", "q", "k", "prev", "kappa"}
        if unknown:
            raise ValueError(f"unknown problem keys: {sorted(unknown)}")
        return cls(
            mu_ann=doc["mu"],
            sigma_ann=doc["sigma"],
            q=doc["q"],
            k=doc["k"],
            prev_holdings=frozenset(doc.get("prev", ())),
            kappa=doc.get("kappa", 0.0),
        )


@dataclass(frozen=True)
class IsingModel:
    """``E(z) = sum_i alpha_i z_i + sum_{i<j} beta_ij z_i z_j + constant``, ``z_i = 1 - 2 x_i``."""

    alpha: np.ndarray
    beta: np.ndarray  # strictly upper triangular
    constant: float

    @property
    def n(self) -> int:
        return self.alpha.size

    def energy(self, x) -> float:
        z = 1 - 2 * as_bits(x).astype(float)
        if z.size != self.n:
            raise DimensionMismatch(f"bitstring length {z.size} != {self.n}")
        return float(self.alpha @ z + z @ self.beta @ z + self.constant)


@dataclass(frozen=True)
class QuboModel:
    """``E(x) = sum_i Q_ii x_i + sum_{i<j} Q_ij x_i x_j + constant``."""

    diag: np.ndarray
    offdiag: np.ndarray  # strictly upper triangular
    penalty: float
    constant: float

    def __post_init__(self):
        if not self.penalty > 0:
            raise NonPositivePenalty(f"penalty must be > 0, got {self.penalty}")

    @property
    def n(self) -> int:
        return self.diag.size

    def symmetric_offdiag(self) -> np.ndarray:
        """Full symmetric coupling matrix with zero diagonal (local-field form)."""
        return self.offdiag + self.offdiag.T


def _check_len(problem: SelectionProblem, x: np.ndarray) -> None:
    if x.size != problem.n:
        raise DimensionMismatch(f"bitstring length {x.size} != N={problem.n}")


def classical_cost(problem: SelectionProblem, x) -> float:
    """``q x'Σx - (1-q) μ'x`` on annualized inputs; feasibility is not checked."""
    xb = as_bits(x).astype(float)
    _check_len(problem, xb)
    return float(problem.q * xb @ problem.sigma_ann @ xb - (1 - problem.q) * problem.mu_ann @ xb)


def selection_cost(problem: SelectionProblem, x) -> float:
    """Classical cost minus the continuity bonus on previously held assets."""
    xb = as_bits(x).astype(float)
    _check_len(problem, xb)
    return classical_cost(problem, xb) - float(problem.bonus_vector() @ xb)


def to_ising(problem: SelectionProblem) -> IsingModel:
    """Exact spin form of the selection cost under ``x_i = (1 - z_i)/2``.

    The energy equals :func:`selection_cost` on every bitstring, so all
    rankings carry over unchanged.
    """
    q, sigma = problem.q, problem.sigma_ann
    c = problem.linear_terms()
    off = np.triu(sigma, 1)
    pair = 2.0 * q * off  # coefficient of x_i x_j, i < j
    row_sums = pair.sum(axis=1) + pair.sum(axis=0)
    alpha = -0.5 * c - 0.25 * row_sums
    beta = 0.25 * pair
    constant = 0.5 * c.sum() + 0.25 * pair.sum()
    return IsingModel(alpha=alpha, beta=beta, constant=float(constant))


def to_qubo(problem: SelectionProblem, penalty: float) -> QuboModel:
    """Selection cost plus ``P (sum x - K)^2`` expanded into QUBO coefficients."""
    if not penalty > 0:
        raise NonPositivePenalty(f"penalty must be > 0, got {penalty}")
    k = problem.k
    diag = problem.linear_terms() + penalty * (1 - 2 * k)
    offdiag = np.triu(2 * problem.q * problem.sigma_ann + 2 * penalty, 1)
    return QuboModel(diag=diag, offdiag=offdiag, penalty=float(penalty), constant=float(penalty * k * k))


def penalty_scale(problem: SelectionProblem) -> float:
    """``2.5 * N * max_coeff`` over return, diagonal-risk and pairwise-risk terms."""
    q, mu, sigma = problem.q, problem.mu_ann, problem.sigma_ann
    n = problem.n
    terms = [np.abs((1 - q) * mu), np.abs(q * np.diag(sigma))]
    if n > 1:
        terms.append(np.abs(2 * q * sigma[np.triu_indices(n, 1)]))
    max_coeff = max(float(t.max()) for t in terms)
    return max(PENALTY_FACTOR * n * max_coeff, PENALTY_FLOOR)


def weight_k_strings(n: int, k: int):
    """All length-``n`` bitstrings with ``k`` ones, in lexicographic order."""
    # combinations run in descending string order
    for combo in reversed(list(itertools.combinations(range(n), k))):
        yield bits_from_indices(combo, n)


def brute_force_optimum(problem: SelectionProblem, *, with_bonus: bool = True) -> tuple[str, float]:
    """Exact minimizer over weight-K strings; ties go to the lexicographically smallest.

    With ``with_bonus`` (default) the continuity discount is included, which
    is the objective both solvers actually see.
    """
    n, k = problem.n, problem.k
    if math.comb(n, k) > MAX_ENUMERATION:
        raise TooLarge(f"C({n},{k}) = {math.comb(n, k)} exceeds {MAX_ENUMERATION}")
    combos = np.array(list(itertools.combinations(range(n), k)), dtype=np.intp).reshape(-1, k)
    x = np.zeros((len(combos), n))
    np.put_along_axis(x, combos, 1.0, axis=1)
    lin = -(1 - problem.q) * problem.mu_ann
    if with_bonus:
        lin = lin - problem.bonus_vector()
    costs = problem.q * np.einsum("si,ij,sj->s", x, problem.sigma_ann, x) + x @ lin
    best = costs.min()
    ties = np.flatnonzero(costs == best)
    strings = sorted(bits_from_indices(combos[t], n) for t in ties)
    return strings[0], float(best)
