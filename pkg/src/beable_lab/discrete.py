"""Discrete-time processes guided by a unitary step Psi -> U Psi.

* restricted process: Bell's process for H with U = e^{-i tau H}, observed at
  multiples of tau.  Single steps are sampled exactly; the one-step
  transition law has no closed form and is evaluated as a truncated sum over
  jump counts of time-ordered integrals.
* minimal two-state process: the smallest transition probabilities that
  carry the net current forced by the Born weights when there are two
  configurations.
* iid process: every step drawn afresh from the Born distribution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from . import streams
from .bell import WEIGHT_EPS, RateField, SamplerControls, generator_matrix, sample_ensemble
from .errors import DimensionError, NumericalFailure
from .hilbert import (
    Decomposition,
    StateVector,
    UnitaryOperator,
    _as_state,
    _as_unitary,
    principal_log_hamiltonian,
)
from .quadrature import adaptive_panels

log = logging.getLogger(__name__)

COLUMN_TOL = 1e-10


@dataclass(frozen=True)
class TransitionMatrix:
    """probs[q, q'] = P(q' -> q); columns are conditional distributions."""

    probs: np.ndarray
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        P = np.array(self.probs, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(P < -COLUMN_TOL) or np.any(P > 1 + COLUMN_TOL):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(P.sum(axis=0) - 1.0)) > COLUMN_TOL:
            raise ValueError("columns of a transition matrix must sum to 1")
        P.setflags(write=False)
        object.__setattr__(self, "probs", P)

    def apply(self, rho) -> np.ndarray:
        return self.probs @ np.asarray(rho, dtype=float)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


@dataclass
class DiscreteTrajectory:
    configs: list[int]
    tau: float

    def __post_init__(self):
        if len(self.configs) < 1:
            raise ValueError("trajectory needs at least the initial configuration")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def __len__(self):
        return len(self.configs)


def _hamiltonian_for(H, U, tau):
    if H is not None:
        return H
    if U is None:
        raise ValueError("need either H or U")
    return principal_log_hamiltonian(U, tau)


# ---------------------------------------------------------------------------
# restricted process


def restricted_step(
    H,
    dec: Decomposition,
    psi_t,
    q_from: int,
    tau: float,
    seed: int,
    controls: SamplerControls = SamplerControls(),
    run_index: int = 0,
) -> int:
    """Q at t + tau for Bell's process started in ``q_from`` with state ``psi_t``."""
    res = sample_ensemble(H, dec, psi_t, tau, 1, seed, q0=q_from, controls=controls, run_offset=run_index)
    return int(res.configs[0, -1])


def restricted_step_ensemble(
    H,
    dec: Decomposition,
    psi_t,
    tau: float,
    n_runs: int,
    seed: int,
    q_from=None,
    controls: SamplerControls = SamplerControls(),
) -> np.ndarray:
    """Endpoints of ``n_runs`` restricted steps (run i equals ``restricted_step(..., run_index=i)``)."""
    res = sample_ensemble(H, dec, psi_t, tau, n_runs, seed, q0=q_from, controls=controls)
    return res.configs[:, -1]


def restricted_chain_ensemble(
    dec: Decomposition,
    psi0,
    tau: float,
    n_steps: int,
    n_runs: int,
    seed: int,
    *,
    U=None,
    H=None,
    q0=None,
    controls: SamplerControls = SamplerControls(),
) -> np.ndarray:
    """(n_runs, n_steps + 1) configurations of the restricted process.

    H defaults to the principal Hamiltonian of U.  Since H is time
    independent, observing one continuous run at k*tau is the same as
    chaining single restricted steps.
    """
    H = _hamiltonian_for(H, U, tau)
    times = tau * np.arange(n_steps + 1)
    res = sample_ensemble(H, dec, psi0, times[-1], n_runs, seed, q0=q0, record_times=times, controls=controls)
    return res.configs


@dataclass(frozen=True)
class SeriesResult:
    """Truncated jump-count expansion of a restricted-process transition probability."""

    probability: float
    terms: tuple[float, ...]
    remainder_bound: float
    sup_rate: float
    accurate: bool


def _jump_expansion(field: RateField, tau: float, n_max: int, quad_tol: float):
    """Terms f_n[q_to, q_from] of the jump-count expansion over [0, tau].

    Backward recursion on the time t at which the remaining path starts::

        f_0(r, t) = S_r(t, tau) [r == q_to]
        f_n(r, t) = int_t^tau S_r(t, s) sum_r' sigma_s(r'|r) f_{n-1}(r', s) ds

    with survival S_r(t, s) = exp(-(Lambda_r(s) - Lambda_r(t))).  All terms
    share one set of adaptive panels and one evaluation of the rates.
    """
    n = field.n_configs
    panels = adaptive_panels(
        lambda t: field.rates(t).reshape(len(t), -1),
        0.0,
        tau,
        rtol=quad_tol,
        atol=1e-15,
        n_initial=16,
        breakpoints=field.kinks(0.0, tau),
    )
    p, m = panels.nodes.shape
    R = panels.values.reshape(p, m, n, n)  # R[..., r', r] = sigma(r'|r)
    total = R.sum(axis=2)  # (p, m, n)
    Lam = panels.cumulative_at_nodes(total)  # (p, m, n)
    Lam_end = panels.total(total)  # (n,)
    sup_rate = float(total.max()) if total.size else 0.0
    if not np.all(np.isfinite(R)):
        raise NumericalFailure("rates are not finite on the step interval")

    # f[p, m, r, q_to]
    f = np.exp(-(Lam_end[None, None, :] - Lam))[..., None] * np.eye(n)[None, None]
    terms = [np.diag(np.exp(-Lam_end))]  # [q_to, q_from]
    for _ in range(n_max):
        g = np.einsum("pmsr,pmsq->pmrq", R, f)
        h = np.exp(-Lam)[..., None] * g
        flat = h.reshape(p, m, -1)
        left = panels.cumulative_at_nodes(flat).reshape(p, m, n, n)
        whole = panels.total(flat).reshape(n, n)
        f = np.exp(Lam)[..., None] * (whole[None, None] - left)
        terms.append(whole.T.copy())
    return terms, sup_rate, panels


def restricted_transition_matrix(
    H,
    dec: Decomposition,
    psi_t,
    tau: float,
    n_max: int = 3,
    quad_tol: float = 1e-10,
) -> tuple[np.ndarray, list[np.ndarray], float]:
    """All one-step probabilities P(q' -> q) summed over at most ``n_max`` jumps.

    Returns (matrix, per-jump-count terms, sup of the total rate).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if not tau > 0:
        raise ValueError("tau must be positive")
    field = RateField(H, dec, psi_t)
    terms, sup_rate, _ = _jump_expansion(field, tau, n_max, quad_tol)
    return np.sum(terms, axis=0), terms, sup_rate


def remainder_bound(sup_rate: float, tau: float, n_max: int) -> float:
    x = sup_rate * tau
    return x ** (n_max + 1) / math.factorial(n_max + 1)


def restricted_transition_series(
    H,
    dec: Decomposition,
    psi_t,
    q_from: int,
    q_to: int,
    tau: float,
    n_max: int = 3,
    quad_tol: float = 1e-10,
    accuracy: float = 1e-4,
) -> SeriesResult:
    """P(q_from -> q_to) of the restricted process, truncated after ``n_max`` jumps.

    The bound (sup sigma * tau)^{n_max+1} / (n_max+1)! dominates the
    probability of more than ``n_max`` jumps.  A bound above ``accuracy``
    is reported through ``accurate=False`` and a log warning.
    """
    P, terms, sup_rate = restricted_transition_matrix(H, dec, psi_t, tau, n_max, quad_tol)
    bound = remainder_bound(sup_rate, tau, n_max)
    accurate = bound <= accuracy
    if not accurate:
        log.warning("series remainder bound %.3e exceeds requested accuracy %.1e", bound, accuracy)
    return SeriesResult(
        probability=float(P[q_to, q_from]),
        terms=tuple(float(t[q_to, q_from]) for t in terms),
        remainder_bound=bound,
        sup_rate=sup_rate,
        accurate=accurate,
    )


def restricted_transition_ode(H, dec: Decomposition, psi_t, tau: float, rtol: float = 1e-11) -> np.ndarray:
    """Exact one-step transition matrix from the Kolmogorov forward equation dP/dt = G(t) P, P(0) = 1."""
    field = RateField(H, dec, psi_t)
    n = field.n_configs

    def rhs(t, y):
        return (generator_matrix(field.rates([t])[0]) @ y.reshape(n, n)).ravel()

    sol = solve_ivp(rhs, (0.0, tau), np.eye(n).ravel(), method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    if sol.status != 0:
        raise NumericalFailure(f"forward equation failed: {sol.message}")
    return sol.y[:, -1].reshape(n, n)


# ---------------------------------------------------------------------------
# minimal two-state process


def two_state_transition(psi_t, U, dec: Decomposition, weight_eps: float = WEIGHT_EPS) -> TransitionMatrix:
    """P(jump from q) = [<Psi|(P(q) - U*P(q)U)|Psi>]^+ / <Psi|P(q)|Psi>."""
    if dec.n_configs != 2:
        raise DimensionError(f"two-state process needs exactly 2 configurations, got {dec.n_configs}")
    psi, U = _as_state(psi_t), _as_unitary(U)
    dec.check_dim(psi.dim)
    if U.dim != psi.dim:
        raise DimensionError("U and psi dimensions differ")
    w = dec.weights(psi.amplitudes)
    w_next = dec.weights(U.matrix @ psi.amplitudes)
    P = np.eye(2)
    flagged = []
    for q in (0, 1):
        if w[q] < weight_eps:
            flagged.append(q)
            continue
        jump = max(w[q] - w_next[q], 0.0) / w[q]
        P[1 - q, q] = jump
        P[q, q] = 1.0 - jump
    if flagged:
        log.debug("zero-weight configurations %s: jump probability set to 0", flagged)
    return TransitionMatrix(P, flagged=tuple(flagged))


def two_state_chain_ensemble(
    U, dec: Decomposition, psi0, n_steps: int, n_runs: int, seed: int, q0=None
) -> tuple[np.ndarray, np.ndarray]:
    """Run the minimal two-state process; returns configs (n_runs, n_steps+1) and Born weights per step."""
    U, psi = _as_unitary(U), _as_state(psi0)
    runs = np.arange(n_runs)
    born = [dec.weights(psi.amplitudes)]
    if q0 is None:
        q = streams.categorical(streams.uniforms(seed, runs, 0), np.broadcast_to(born[0], (n_runs, 2)))
    else:
        q = np.full(n_runs, int(q0))
    out = np.empty((n_runs, n_steps + 1), dtype=int)
    out[:, 0] = q
    for k in range(n_steps):
        T = two_state_transition(psi, U, dec).probs
        jump = T[1 - q, q]
        u = streams.uniforms(seed, runs, 1 + k)
        q = np.where(u < jump, 1 - q, q)
        out[:, k + 1] = q
        psi = StateVector(U.matrix @ psi.amplitudes)
        born.append(dec.weights(psi.amplitudes))
    return out, np.array(born)


# ---------------------------------------------------------------------------
# iid process


def iid_step(psi_next, dec: Decomposition, seed: int, run_index: int = 0, draw: int = 0) -> int:
    """A configuration drawn from the Born distribution of the already-advanced state."""
    psi = _as_state(psi_next)
    dec.check_dim(psi.dim)
    w = dec.weights(psi.amplitudes)
    u = streams.uniforms(seed, [run_index], draw)
    return int(streams.categorical(u, w[None])[0])


def iid_chain(U, dec: Decomposition, psi0, n_steps: int, seed: int, run_index: int = 0, tau: float = 1.0) -> tuple[DiscreteTrajectory, np.ndarray]:
    """One run of the iid process over ``n_steps`` steps of U; also returns the Born weights per step."""
    U, psi = _as_unitary(U), _as_state(psi0)
    d = psi.dim
    dec.check_dim(d)
    # Psi_k = U^k psi0 for all k at once through the eigendecomposition of U
    T, Z = _schur_eig(U.matrix)
    c = Z.conj().T @ psi.amplitudes
    k = np.arange(n_steps + 1)
    states = (np.exp(1j * np.outer(k, np.angle(T))) * c) @ Z.T
    born = dec.weights(states)
    born /= born.sum(axis=1, keepdims=True)
    u = streams.uniforms(seed, run_index, k)
    configs = streams.categorical(u, born)
    return DiscreteTrajectory([int(x) for x in configs], tau=tau), born


def _schur_eig(U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    T, Z = scipy.linalg.schur(U, output="complex")
    lam = np.diag(T)
    return lam / np.abs(lam), Z
