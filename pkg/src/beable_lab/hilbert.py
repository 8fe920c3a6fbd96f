"""Finite-dimensional Hilbert space scaffolding.

States, block decompositions of the computational basis, Hamiltonians and
unitaries, exact propagation through eigendecompositions, the principal
Hamiltonian of a unitary, and seeded random instances.

Units: hbar = 1 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalFailure

NORM_TOL = 1e-12
STRUCTURE_TOL = 1e-12
# eigenphases this close to the branch cut -pi are mapped to +pi
BRANCH_EPS = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateVector:
    """Normalized complex amplitude vector."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 1 or a.size < 1:
            raise DimensionError(f"state must be a non-empty vector, got shape {a.shape}")
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm - 1 = {norm - 1.0:.3e})")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def normalized(cls, amplitudes: Sequence[complex]) -> "StateVector":
        a = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(a)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(a / norm)

    @classmethod
    def basis(cls, d: int, index: int) -> "StateVector":
        a = np.zeros(d, dtype=complex)
        a[index] = 1.0
        return cls(a)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True)
class Decomposition:
    """Partition of basis indices {0..d-1} into blocks, one per configuration.

    Configurations are addressed by block position (0..n-1); ``labels`` are
    display names only.
    """

    blocks: tuple[tuple[int, ...], ...]
    labels: tuple = field(default=None)

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        if not blocks:
            raise ValueError("decomposition needs at least one configuration")
        flat = [i for b in blocks for i in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("blocks must be nonempty")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("blocks must be disjoint and cover 0..d-1")
        labels = tuple(range(len(blocks))) if self.labels is None else tuple(self.labels)
        if len(labels) != len(blocks) or len(set(labels)) != len(labels):
            raise ValueError("need one distinct label per block")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def singletons(cls, d: int) -> "Decomposition":
        return cls(tuple((i,) for i in range(d)))

    @property
    def dim(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_configs(self) -> int:
        return len(self.blocks)

    @cached_property
    def indicator(self) -> np.ndarray:
        """(n_configs, d) 0/1 matrix; row q is the diagonal of P(q)."""
        B = np.zeros((self.n_configs, self.dim))
        for q, b in enumerate(self.blocks):
            B[q, list(b)] = 1.0
        B.setflags(write=False)
        return B

    @cached_property
    def config_of_index(self) -> np.ndarray:
        c = np.empty(self.dim, dtype=int)
        for q, b in enumerate(self.blocks):
            c[list(b)] = q
        c.setflags(write=False)
        return c

    def projector(self, q: int) -> np.ndarray:
        return np.diag(self.indicator[q]).astype(complex)

    def weights(self, amplitudes: np.ndarray) -> np.ndarray:
        """Block weights of one state (d,) or a stack of states (..., d)."""
        return (np.abs(amplitudes) ** 2) @ self.indicator.T

    def block_sum(self, M: np.ndarray) -> np.ndarray:
        """Sum a (..., d, d) matrix over index blocks: (..., n, n)."""
        B = self.indicator
        return B @ M @ B.T

    def check_dim(self, d: int) -> None:
        if d != self.dim:
            raise DimensionError(f"dimension {d} does not match decomposition over {self.dim} indices")


@dataclass(frozen=True)
class HermitianOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > STRUCTURE_TOL:
            raise ValueError("matrix is not Hermitian")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    def propagator(self, t: float) -> np.ndarray:
        """e^{-iHt} from the eigendecomposition."""
        lam, V = self.eigh
        return (V * np.exp(-1j * lam * t)) @ V.conj().T


@dataclass(frozen=True)
class UnitaryOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got shape {m.shape}")
        if np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))) > STRUCTURE_TOL:
            raise ValueError("matrix is not unitary")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ProbabilityVector:
    weights: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionError("probability vector must be one-dimensional")
        if np.any(w < -self.tol) or abs(w.sum() - 1.0) > self.tol:
            raise ValueError(f"not a probability vector: {w}")
        object.__setattr__(self, "weights", _frozen(w))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self):
        return self.weights.size


def _as_hermitian(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


def _as_unitary(U) -> UnitaryOperator:
    return U if isinstance(U, UnitaryOperator) else UnitaryOperator(U)


def _as_state(psi) -> StateVector:
    return psi if isinstance(psi, StateVector) else StateVector(psi)


def born_distribution(psi: StateVector, dec: Decomposition) -> ProbabilityVector:
    psi = _as_state(psi)
    dec.check_dim(psi.dim)
    w = dec.weights(psi.amplitudes)
    # absorb rounding in |psi|
    return ProbabilityVector(w / w.sum())


def evolve_continuous(H: HermitianOperator, psi0: StateVector, t: float) -> StateVector:
    H, psi0 = _as_hermitian(H), _as_state(psi0)
    if H.dim != psi0.dim:
        raise DimensionError(f"H is {H.dim}-dimensional, state is {psi0.dim}-dimensional")
    if t == 0:
        return psi0
    return StateVector(H.propagator(t) @ psi0.amplitudes)


def evolve_discrete(U: UnitaryOperator, psi: StateVector) -> StateVector:
    U, psi = _as_unitary(U), _as_state(psi)
    if U.dim != psi.dim:
        raise DimensionError(f"U is {U.dim}-dimensional, state is {psi.dim}-dimensional")
    return StateVector(U.matrix @ psi.amplitudes)


def principal_log_hamiltonian(U: UnitaryOperator, tau: float, tol: float = 1e-12) -> HermitianOperator:
    """The Hermitian H with e^{-i tau H} = U and spectrum in (-pi/tau, pi/tau].

    U is diagonalized by a complex Schur factorization, which yields an
    orthonormal eigenbasis also for degenerate eigenvalues.
    """
    U = _as_unitary(U)
    if not tau > 0:
        raise ValueError("tau must be positive")
    T, Z = scipy.linalg.schur(U.matrix, output="complex")
    theta = -np.angle(np.diag(T))
    theta = np.where(theta <= -np.pi + BRANCH_EPS, np.pi, theta)
    h = (Z * (theta / tau)) @ Z.conj().T
    h = 0.5 * (h + h.conj().T)
    H = HermitianOperator(h)
    residual = np.linalg.norm(H.propagator(tau) - U.matrix, 2)
    if residual > tol:
        raise NumericalFailure(f"principal logarithm reconstruction residual {residual:.3e} exceeds {tol:.1e}")
    return H


def haar_random_unitary(d: int, seed=None) -> UnitaryOperator:
    """Haar-distributed unitary: QR of a complex Ginibre matrix, R's diagonal phases folded into Q."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return UnitaryOperator(q * ph)


def random_state(d: int, seed=None) -> StateVector:
    """Uniform on the unit sphere of C^d."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return StateVector(z / np.linalg.norm(z))


def random_hermitian(d: int, seed=None, scale: float = 1.0) -> HermitianOperator:
    """GUE-like Hermitian matrix, handy for random test systems."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return HermitianOperator(scale * 0.5 * (z + z.conj().T) / np.sqrt(2 * d))


def random_decomposition(d: int, seed=None) -> Decomposition:
    """Random partition of 0..d-1 into between 1 and d contiguous-in-permutation blocks."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d)
    n = int(rng.integers(1, d + 1))
    cuts = np.sort(rng.choice(np.arange(1, d), size=n - 1, replace=False)) if n > 1 else []
    return Decomposition(tuple(tuple(sorted(int(i) for i in b)) for b in np.split(perm, cuts)))
