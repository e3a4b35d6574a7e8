"""Constraint-preserving QAOA simulated inside the Hamming-weight-K subspace.

The Dicke initial state, the diagonal cost phase and the complete-graph XY
mixer all act block-diagonally in Hamming weight, so the state only ever
needs ``C(n, k)`` amplitudes. The mixer is exponentiated exactly through a
cached eigendecomposition that depends on ``(n, k)`` alone.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .encoding import IsingModel, SelectionProblem, selection_cost, to_ising
from .errors import DimensionMismatch, EigenFailure, EmptyReadout, KardinalError, TooLarge

log = logging.getLogger(__name__)

MAX_QUBITS = 24
MAX_DENSE_DIM = 6000


@dataclass(frozen=True)
class SubspaceBasis:
    """Weight-``k`` bitstrings of length ``n`` in ascending integer order.

    Asset/qubit 0 is the most significant bit, matching the string form.
    """

    n: int
    k: int
    states: np.ndarray  # int64, ascending
    occupation: np.ndarray  # (dim, n) int8, occupation[j, i] = bit i of state j
    index: dict = field(repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.states.size

    def bitstring(self, j: int) -> str:
        return "".join("1" if b else "0" for b in self.occupation[j])

    def bitstrings(self) -> list[str]:
        return [self.bitstring(j) for j in range(self.dim)]


@dataclass(frozen=True)
class SubspaceState:
    basis: SubspaceBasis
    amplitudes: np.ndarray

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class MixerSpectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns; real orthogonal for the XY block


@dataclass(frozen=True)
class QaoaParams:
    gammas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        g = np.array(self.gammas, dtype=float).ravel()
        b = np.array(self.betas, dtype=float).ravel()
        if g.size != b.size or g.size < 1:
            raise ValueError("need equal, non-zero numbers of gammas and betas")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def p(self) -> int:
        return self.gammas.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas])

    @classmethod
    def from_vector(cls, theta) -> "QaoaParams":
        theta = np.asarray(theta, dtype=float)
        p = theta.size // 2
        return cls(theta[:p], theta[p:])


@dataclass
class OptimizerTrace:
    costs: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.costs)


@dataclass(frozen=True)
class Candidate:
    bitstring: str
    probability: float
    cost: float


@dataclass(frozen=True)
class QaoaConfig:
    """Adam and readout settings; defaults follow the experimental configuration."""

    stepsize: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-10
    max_iter: int = 100
    tol: float = 1e-6
    patience: int = 10
    threshold: float = 0.01
    gamma_ramp: tuple[float, float] = (0.1, 0.5)
    beta_ramp: tuple[float, float] = (0.5, 0.1)

    def __post_init__(self):
        if self.stepsize <= 0 or self.max_iter < 1 or self.patience < 1:
            raise ValueError("stepsize, max_iter and patience must be positive")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("Adam decay rates must lie in [0, 1)")
        object.__setattr__(self, "gamma_ramp", tuple(float(v) for v in self.gamma_ramp))
        object.__setattr__(self, "beta_ramp", tuple(float(v) for v in self.beta_ramp))


# ---------------------------------------------------------------------------
# basis, operators


@functools.lru_cache(maxsize=64)
def enumerate_basis(n: int, k: int) -> SubspaceBasis:
    if not 0 < k <= n:
        raise ValueError(f"need 0 < k <= n, got n={n}, k={k}")
    if n > MAX_QUBITS:
        raise TooLarge(f"n={n} exceeds the {MAX_QUBITS}-qubit guard")
    combos = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
    states = np.sum(np.left_shift(np.int64(1), n - 1 - combos), axis=1)
    order = np.argsort(states)
    states = states[order]
    occ = np.zeros((states.size, n), dtype=np.int8)
    np.put_along_axis(occ, combos[order], 1, axis=1)
    states.flags.writeable = False
    occ.flags.writeable = False
    index = {int(s): j for j, s in enumerate(states)}
    return SubspaceBasis(n=n, k=k, states=states, occupation=occ, index=index)


def dicke_state(basis: SubspaceBasis) -> SubspaceState:
    amps = np.full(basis.dim, 1.0 / math.sqrt(basis.dim), dtype=complex)
    return SubspaceState(basis, amps)


def cost_diagonal(ising: IsingModel, basis: SubspaceBasis) -> np.ndarray:
    """``sum_i alpha_i z_i + sum_{i<j} beta_ij z_i z_j`` for each basis string (no constant)."""
    if ising.n != basis.n:
        raise DimensionMismatch(f"Ising model has {ising.n} spins, basis has {basis.n} qubits")
    z = 1.0 - 2.0 * basis.occupation
    return z @ ising.alpha + np.einsum("si,ij,sj->s", z, ising.beta, z)


def mixer_matrix(basis: SubspaceBasis) -> np.ndarray:
    """Complete-graph ``sum_{i<j} (X_i X_j + Y_i Y_j)`` restricted to the basis.

    Each term moves one excitation between qubits ``i`` and ``j`` with
    amplitude 2.
    """
    if basis.dim > MAX_DENSE_DIM:
        raise TooLarge(f"dense mixer of dimension {basis.dim} exceeds {MAX_DENSE_DIM}")
    n = basis.n
    h = np.zeros((basis.dim, basis.dim))
    for j, s in enumerate(basis.states):
        s = int(s)
        for a in range(n):
            bit_a = (s >> (n - 1 - a)) & 1
            for b in range(a + 1, n):
                bit_b = (s >> (n - 1 - b)) & 1
                if bit_a != bit_b:
                    t = s ^ ((1 << (n - 1 - a)) | (1 << (n - 1 - b)))
                    h[basis.index[t], j] = 2.0
    return h


def mixer_spectrum(matrix: np.ndarray) -> MixerSpectrum:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch("mixer must be square")
    if not np.allclose(matrix, matrix.conj().T, atol=1e-12):
        raise EigenFailure("mixer is not Hermitian")
    try:
        lam, vec = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    vec = np.ascontiguousarray(vec)
    lam.flags.writeable = False
    vec.flags.writeable = False
    return MixerSpectrum(lam, vec)


@functools.lru_cache(maxsize=32)
def spectrum_for(n: int, k: int) -> MixerSpectrum:
    """Mixer spectrum for ``(n, k)``, computed once per process."""
    return mixer_spectrum(mixer_matrix(enumerate_basis(n, k)))


def _check_dim(vec: np.ndarray, dim: int) -> None:
    if vec.shape[-1] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {vec.shape[-1]}")


def apply_cost_phase(state: SubspaceState, gamma: float, diag: np.ndarray) -> SubspaceState:
    _check_dim(diag, state.basis.dim)
    return SubspaceState(state.basis, np.exp(-1j * gamma * diag) * state.amplitudes)


def apply_mixer(state: SubspaceState, beta: float, spectrum: MixerSpectrum) -> SubspaceState:
    v, lam = spectrum.eigenvectors, spectrum.eigenvalues
    _check_dim(lam, state.basis.dim)
    amps = v @ (np.exp(-1j * beta * lam) * (v.conj().T @ state.amplitudes))
    return SubspaceState(state.basis, amps)


def qaoa_state(params: QaoaParams, diag, spectrum: MixerSpectrum, basis: SubspaceBasis) -> SubspaceState:
    """Dicke state followed by ``p`` (cost phase, mixer) layers."""
    _check_dim(np.asarray(diag), basis.dim)
    state = dicke_state(basis)
    for g, b in zip(params.gammas, params.betas):
        state = apply_mixer(apply_cost_phase(state, g, diag), b, spectrum)
    return state


def expectation(state: SubspaceState, diag: np.ndarray) -> float:
    _check_dim(diag, state.basis.dim)
    return float(np.dot(state.probabilities(), diag))


# ---------------------------------------------------------------------------
# adjoint gradient


def _value_and_grad(theta: np.ndarray, diag: np.ndarray, spectrum: MixerSpectrum) -> tuple[float, np.ndarray]:
    p = theta.size // 2
    gammas, betas = theta[:p], theta[p:]
    v, lam = spectrum.eigenvectors, spectrum.eigenvalues
    vh = v.conj().T
    dim = diag.size

    # forward pass, keeping the post-mixer state of every layer
    psi = np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)
    for g, b in zip(gammas, betas):
        psi = v @ (np.exp(-1j * b * lam) * (vh @ (np.exp(-1j * g * diag) * psi)))
    value = float(np.dot(np.abs(psi) ** 2, diag))

    # reverse sweep: adj carries U_after^dagger D psi_final
    grad = np.empty(2 * p)
    adj = diag * psi
    for layer in range(p - 1, -1, -1):
        g, b = gammas[layer], betas[layer]
        psi_e, adj_e = vh @ psi, vh @ adj
        grad[p + layer] = 2.0 * np.real(np.vdot(adj_e, -1j * lam * psi_e))
        undo = np.exp(1j * b * lam)
        psi, adj = v @ (undo * psi_e), v @ (undo * adj_e)
        grad[layer] = 2.0 * np.real(np.vdot(adj, -1j * diag * psi))
        undo_c = np.exp(1j * g * diag)
        psi, adj = undo_c * psi, undo_c * adj
    return value, grad


def gradient(params: QaoaParams, diag, spectrum: MixerSpectrum, basis: SubspaceBasis) -> np.ndarray:
    """Exact gradient of the cost expectation, ordered ``[gammas..., betas...]``."""
    diag = np.asarray(diag, dtype=float)
    _check_dim(diag, basis.dim)
    return _value_and_grad(params.to_vector(), diag, spectrum)[1]


# ---------------------------------------------------------------------------
# training and readout


def trotter_init(p: int, gamma_ramp=(0.1, 0.5), beta_ramp=(0.5, 0.1)) -> QaoaParams:
    """Linear ramp of gammas up and betas down across layers; ``p = 1`` takes the midpoint."""
    if p < 1:
        raise ValueError("depth must be >= 1")
    if p == 1:
        return QaoaParams([sum(gamma_ramp) / 2], [sum(beta_ramp) / 2])
    return QaoaParams(np.linspace(*gamma_ramp, p), np.linspace(*beta_ramp, p))


def adam_optimize(
    diag,
    spectrum: MixerSpectrum,
    basis: SubspaceBasis,
    p: int,
    config: QaoaConfig = QaoaConfig(),
    init: QaoaParams | None = None,
) -> tuple[QaoaParams, OptimizerTrace]:
    """Minimize the cost expectation with Adam from a Trotter-ramp start.

    Stops after ``max_iter`` evaluations, or once the best-so-far cost has
    improved by less than ``tol`` over the last ``patience`` iterations.
    Returns the best parameters seen, not the last ones.
    """
    diag = np.asarray(diag, dtype=float)
    _check_dim(diag, basis.dim)
    if init is None:
        init = trotter_init(p, config.gamma_ramp, config.beta_ramp)
    if init.p != p:
        raise ValueError(f"initial parameters have depth {init.p}, expected {p}")

    theta = init.to_vector()
    m = np.zeros_like(theta)
    s = np.zeros_like(theta)
    trace = OptimizerTrace()
    best_cost, best_theta = math.inf, theta.copy()
    best_hist: list[float] = []
    for t in range(1, config.max_iter + 1):
        tic = time.perf_counter()
        value, grad = _value_and_grad(theta, diag, spectrum)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite cost or gradient at iteration {t}")
        if value < best_cost:
            best_cost, best_theta = value, theta.copy()
        m = config.beta1 * m + (1 - config.beta1) * grad
        s = config.beta2 * s + (1 - config.beta2) * grad**2
        m_hat = m / (1 - config.beta1**t)
        s_hat = s / (1 - config.beta2**t)
        theta = theta - config.stepsize * m_hat / (np.sqrt(s_hat) + config.epsilon)
        trace.costs.append(value)
        trace.grad_norms.append(float(np.linalg.norm(grad)))
        trace.wall_ms.append(1e3 * (time.perf_counter() - tic))
        best_hist.append(best_cost)
        if len(best_hist) > config.patience and best_hist[-1 - config.patience] - best_cost < config.tol:
            break
    return QaoaParams.from_vector(best_theta), trace


def readout(state: SubspaceState, problem: SelectionProblem, threshold: float = 0.01) -> list[Candidate]:
    """Basis strings with probability >= ``threshold``, sorted by (cost, bitstring)."""
    probs = state.probabilities()
    keep = np.flatnonzero(probs >= threshold)
    if keep.size == 0:
        raise EmptyReadout(f"no basis string reaches probability {threshold}")
    out = []
    for j in keep:
        bits = state.basis.bitstring(int(j))
        assert bits.count("1") == problem.k, "readout left the feasible subspace"
        out.append(Candidate(bits, float(probs[j]), selection_cost(problem, bits)))
    out.sort(key=lambda c: (c.cost, c.bitstring))
    return out


def best_candidate(state: SubspaceState, problem: SelectionProblem, threshold: float = 0.01) -> Candidate:
    """Lowest-cost readout candidate, or the most probable string if none clears the threshold."""
    try:
        return readout(state, problem, threshold)[0]
    except EmptyReadout:
        probs = state.probabilities()
        j = int(np.argmax(probs))  # first maximum = smallest bitstring
        bits = state.basis.bitstring(j)
        return Candidate(bits, float(probs[j]), selection_cost(problem, bits))


@dataclass
class DepthResult:
    p: int
    final_cost: float | None = None
    iterations: int = 0
    grad_norm: float | None = None
    wall_ms: float = 0.0
    candidate: Candidate | None = None
    params: QaoaParams | None = None
    trace: OptimizerTrace | None = None
    error: str | None = None

    def to_json(self, *, timings: bool = True) -> dict:
        doc = {
            "p": self.p,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "best_bitstring": self.candidate.bitstring if self.candidate else None,
            "best_cost": self.candidate.cost if self.candidate else None,
        }
        if timings:
            doc["wall_ms"] = self.wall_ms
        if self.error:
            doc["error"] = self.error
        return doc


@dataclass
class SweepResult:
    bitstring: str | None
    cost: float | None
    depths: list[DepthResult]


def _run_depth(problem, diag, spectrum, basis, p, config) -> DepthResult:
    res = DepthResult(p=p)
    tic = time.perf_counter()
    try:
        params, trace = adam_optimize(diag, spectrum, basis, p, config)
        state = qaoa_state(params, diag, spectrum, basis)
        res.params, res.trace = params, trace
        res.final_cost = expectation(state, diag)
        res.iterations = trace.iterations
        res.grad_norm = trace.grad_norms[-1]
        res.candidate = best_candidate(state, problem, config.threshold)
    except (KardinalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("QAOA depth p=%d failed: %s", p, exc)
        res.error = f"{type(exc).__name__}: {exc}"
    res.wall_ms = 1e3 * (time.perf_counter() - tic)
    return res


def depth_sweep(
    problem: SelectionProblem,
    p_max: int = 6,
    config: QaoaConfig = QaoaConfig(),
    workers: int = 1,
) -> SweepResult:
    """Train and read out every depth ``1..p_max``; keep the cheapest candidate overall."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    basis = enumerate_basis(problem.n, problem.k)
    spectrum = spectrum_for(problem.n, problem.k)
    diag = cost_diagonal(to_ising(problem), basis)
    depths = range(1, p_max + 1)
    if workers > 1 and p_max > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _run_depth(problem, diag, spectrum, basis, p, config), depths))
    else:
        results = [_run_depth(problem, diag, spectrum, basis, p, config) for p in depths]
    found = [r.candidate for r in results if r.candidate is not None]
    if not found:
        return SweepResult(None, None, results)
    best = min(found, key=lambda c: (c.cost, c.bitstring))
    return SweepResult(best.bitstring, best.cost, results)
