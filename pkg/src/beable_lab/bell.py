"""Bell's continuous-time jump process on a finite configuration space.

Rates are evaluated along the exact state Psi_s = e^{-iH(s - t0)} psi0.
Waiting times are sampled by inverting the cumulative hazard: the total
jump rate out of every configuration is integrated once per ensemble on
adaptive Gauss-Legendre panels, and each run bisects its own exponential
level inside the panel where it falls.  All runs of an ensemble are
advanced together, one jump per round.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import streams
from .errors import NumericalFailure
from .hilbert import (
    Decomposition,
    HermitianOperator,
    ProbabilityVector,
    StateVector,
    _as_hermitian,
    _as_state,
)
from .quadrature import DEFAULT_ORDER, adaptive_panels, gauss_integral

log = logging.getLogger(__name__)

WEIGHT_EPS = 1e-12
_CHUNK = 1 << 15


@dataclass(frozen=True)
class RateMatrix:
    """rates[q, q'] = sigma(q|q'), the rate of the jump q' -> q."""

    rates: np.ndarray
    zero_weight: tuple[int, ...] = ()

    def __post_init__(self):
        r = np.array(self.rates, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("rate matrix must be square")
        if np.any(r < 0) or np.any(np.diag(r) != 0):
            raise ValueError("rates must be nonnegative with zero diagonal")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    def total(self) -> np.ndarray:
        """sigma(Q|q') for every q'."""
        return self.rates.sum(axis=0)


@dataclass(frozen=True)
class CurrentMatrix:
    """Real antisymmetric J[q, q']: net probability flow from q' to q."""

    entries: np.ndarray

    def __post_init__(self):
        J = np.array(self.entries)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError("current matrix must be square")
        J.setflags(write=False)
        object.__setattr__(self, "entries", J)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass
class Trajectory:
    """Initial condition plus jump events of one run."""

    times: list[float]
    configs: list[int]
    start_time: float
    end_time: float
    zero_weight_events: int = 0

    def config_at(self, t: float) -> int:
        if not self.start_time <= t <= self.end_time:
            raise ValueError(f"time {t} outside [{self.start_time}, {self.end_time}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.configs[k]

    @property
    def records(self) -> list[tuple[float, int]]:
        return list(zip(self.times, self.configs))

    @property
    def n_jumps(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class SamplerControls:
    hazard_rel_tol: float = 1e-9
    time_tol: float = 1e-10  # relative to t_end
    quad_order: int = DEFAULT_ORDER
    max_depth: int = 40
    max_jumps: int = 100_000


class RateField:
    """State, weights, currents and Bell rates along the exact evolution.

    All methods take an array of times and are vectorized over it.
    """

    def __init__(self, H, dec: Decomposition, psi0, t0: float = 0.0, weight_eps: float = WEIGHT_EPS):
        self.H = _as_hermitian(H)
        self.psi0 = _as_state(psi0)
        if self.H.dim != self.psi0.dim:
            raise ValueError("H and psi0 dimensions differ")
        dec.check_dim(self.H.dim)
        self.dec = dec
        self.t0 = float(t0)
        self.weight_eps = weight_eps
        lam, V = self.H.eigh
        self._lam = lam
        self._V = V
        self._c = V.conj().T @ self.psi0.amplitudes
        self._Hm = np.asarray(self.H.matrix)

    @property
    def n_configs(self) -> int:
        return self.dec.n_configs

    def states(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float)) - self.t0
        return (np.exp(-1j * np.outer(t, self._lam)) * self._c) @ self._V.T

    def weights(self, t) -> np.ndarray:
        return self.dec.weights(self.states(t))

    def _currents_and_weights(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        J = np.empty((t.size, self.n_configs, self.n_configs))
        W = np.empty((t.size, self.n_configs))
        for s in range(0, t.size, _CHUNK):
            psi = self.states(t[s : s + _CHUNK])
            A = psi.conj()[:, :, None] * self._Hm[None] * psi[:, None, :]
            J[s : s + _CHUNK] = 2.0 * self.dec.block_sum(A).imag
            W[s : s + _CHUNK] = self.dec.weights(psi)
        return J, W

    def currents(self, t) -> np.ndarray:
        """(m, n, n): J[q, q'] = 2 Im <Psi|P(q) H P(q')|Psi>."""
        return self._currents_and_weights(t)[0]

    def rates(self, t) -> np.ndarray:
        """(m, n, n): sigma(q|q') with zero-weight sources silenced."""
        J, W = self._currents_and_weights(t)
        return _rates_from(J, W, self.weight_eps)

    def total_rates(self, t) -> np.ndarray:
        """(m, n): total jump rate out of each configuration."""
        return self.rates(t).sum(axis=1)

    def kinks(self, a: float, b: float, points_per_period: int = 64) -> np.ndarray:
        """Times in (a, b) where some current J(q, q') changes sign.

        The rates [J]^+ / w have a kinked derivative there, which can hide
        from an embedded quadrature error estimate when it sits near a
        panel edge.  Sign changes are bracketed on a grid resolving the
        fastest Bohr frequency of H, then refined by Brent's method.
        """
        spread = float(self._lam[-1] - self._lam[0]) if self._lam.size else 0.0
        n_grid = max(256, int(np.ceil(points_per_period * spread * (b - a) / (2 * np.pi))) + 1)
        t = np.linspace(a, b, n_grid)
        iu = np.triu_indices(self.n_configs, k=1)
        J = self.currents(t)[:, iu[0], iu[1]]
        sgn = np.sign(J)
        out = [t[1:-1][np.any(sgn[1:-1] == 0, axis=1)]]
        cross = np.argwhere(sgn[:-1] * sgn[1:] < 0)
        for i, pair in cross:
            q, r = iu[0][pair], iu[1][pair]
            out.append([brentq(lambda x: self.currents([x])[0, q, r], t[i], t[i + 1], xtol=1e-15, rtol=1e-15)])
        return np.unique(np.concatenate([np.asarray(o, dtype=float) for o in out]))


def _rates_from(J: np.ndarray, W: np.ndarray, eps: float) -> np.ndarray:
    num = np.maximum(J, 0.0)
    ok = W > eps
    R = np.where(ok[..., None, :], num / np.where(ok, W, 1.0)[..., None, :], 0.0)
    n = R.shape[-1]
    R[..., np.arange(n), np.arange(n)] = 0.0
    return R


def jump_rates(psi: StateVector, H: HermitianOperator, dec: Decomposition, weight_eps: float = WEIGHT_EPS) -> RateMatrix:
    """Bell rates sigma(q|q') = [2 Im <Psi|P(q)HP(q')|Psi>]^+ / <Psi|P(q')|Psi>.

    Configurations with weight below ``weight_eps`` get zero outgoing rates;
    they are listed in ``RateMatrix.zero_weight``.
    """
    J = continuous_current(psi, H, dec).entries
    W = born_weights_raw(psi, dec)
    R = _rates_from(J, W, weight_eps)
    zero = tuple(int(q) for q in np.flatnonzero(W <= weight_eps))
    if zero:
        log.debug("zero-weight configurations %s: outgoing rates set to 0", zero)
    return RateMatrix(R, zero_weight=zero)


def born_weights_raw(psi, dec: Decomposition) -> np.ndarray:
    psi = _as_state(psi)
    dec.check_dim(psi.dim)
    return dec.weights(psi.amplitudes)


def continuous_current(psi: StateVector, H: HermitianOperator, dec: Decomposition) -> CurrentMatrix:
    psi, H = _as_state(psi), _as_hermitian(H)
    dec.check_dim(psi.dim)
    if H.dim != psi.dim:
        raise ValueError("H and psi dimensions differ")
    a = psi.amplitudes
    A = a.conj()[:, None] * H.matrix * a[None, :]
    return CurrentMatrix(2.0 * dec.block_sum(A).imag)


# ---------------------------------------------------------------------------
# sampling


class HazardTable:
    """Cumulative hazard of every configuration on adaptive panels over [t_start, t_end]."""

    def __init__(self, field: RateField, t_start: float, t_end: float, controls: SamplerControls):
        self.field = field
        self.t_start = t_start
        self.t_end = t_end
        self.order = controls.quad_order
        self.panels = adaptive_panels(
            field.total_rates,
            t_start,
            t_end,
            rtol=controls.hazard_rel_tol,
            atol=1e-14,
            order=controls.quad_order,
            max_depth=controls.max_depth,
            breakpoints=field.kinks(t_start, t_end),
        )
        self.edges = self.panels.edges
        self.cum = self.panels.cumulative_at_edges()  # (p+1, n)
        if self.panels.capped:
            log.info("hazard table: %d panels capped at minimum width (rate singularity)", self.panels.capped)

    def partial(self, k: np.ndarray, t: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Integral of the total rate of config q[i] from edge k[i] to t[i]."""
        vals = gauss_integral(self.field.total_rates, self.edges[k], t, order=self.order)
        return vals[np.arange(q.size), q]

    def level(self, t: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, self.edges.size - 2)
        return self.cum[k, q] + self.partial(k, t, q), k

    def invert(self, target: np.ndarray, q: np.ndarray, t_now: np.ndarray, k_now: np.ndarray, time_tol: float):
        """Times T >= t_now where the cumulative hazard of q reaches ``target``.

        Newton steps on the bracketing panel, falling back to bisection
        whenever a step leaves the bracket.
        """
        k = np.empty(q.size, dtype=int)
        for c in np.unique(q):
            m = q == c
            k[m] = np.searchsorted(self.cum[:, c], target[m], side="right") - 1
        k = np.clip(np.maximum(k, k_now), 0, self.edges.size - 2)
        lo = np.where(k == k_now, t_now, self.edges[k])
        hi = self.edges[k + 1].copy()
        base = self.cum[k, q]
        x = 0.5 * (lo + hi)
        idx = np.arange(q.size)
        for _ in range(200):
            if not idx.size:
                break
            xi, qi = x[idx], q[idx]
            F = base[idx] + self.partial(k[idx], xi, qi) - target[idx]
            slope = self.field.total_rates(xi)[np.arange(idx.size), qi]
            above = F >= 0
            hi[idx[above]] = xi[above]
            lo[idx[~above]] = xi[~above]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(slope > 0, F / slope, np.inf)
            cand = xi - step
            inside = (cand > lo[idx]) & (cand < hi[idx])
            nxt = np.where(inside, cand, 0.5 * (lo[idx] + hi[idx]))
            done = (np.abs(nxt - xi) <= 0.5 * time_tol) | (hi[idx] - lo[idx] <= time_tol)
            x[idx] = nxt
            idx = idx[~done]
        else:
            raise NumericalFailure("waiting-time inversion did not converge")
        return x


@dataclass
class EnsembleResult:
    """Configurations of every run at the recorded times."""

    record_times: np.ndarray
    configs: np.ndarray  # (n_runs, n_times)
    n_jumps: np.ndarray  # (n_runs,)
    initial: np.ndarray  # (n_runs,)
    zero_weight_events: int = 0
    trajectories: list[Trajectory] | None = field(default=None, repr=False)

    def counts(self, n_configs: int) -> np.ndarray:
        """(n_times, n_configs) occupation counts."""
        return np.stack([np.bincount(self.configs[:, j], minlength=n_configs) for j in range(self.record_times.size)])


def _initial_configs(field: RateField, t_start: float, q0, runs: np.ndarray, seed: int) -> np.ndarray:
    if q0 is None or (isinstance(q0, str) and q0 == "born"):
        w = field.weights([t_start])[0]
        u = streams.uniforms(seed, runs, 0)
        return streams.categorical(u, np.broadcast_to(w, (runs.size, w.size)))
    q0 = int(q0)
    if not 0 <= q0 < field.n_configs:
        raise ValueError(f"configuration {q0} out of range")
    return np.full(runs.size, q0, dtype=int)


def sample_ensemble(
    H,
    dec: Decomposition,
    psi0,
    t_end: float,
    n_runs: int,
    seed: int,
    *,
    q0=None,
    t_start: float = 0.0,
    record_times=None,
    controls: SamplerControls = SamplerControls(),
    run_offset: int = 0,
    keep_trajectories: bool = False,
) -> EnsembleResult:
    """Sample ``n_runs`` independent runs of Bell's process on [t_start, t_end].

    ``psi0`` is the state at ``t_start``; ``q0`` is a configuration index or
    None / "born" to draw it from the Born distribution.  Run i uses stream
    ``run_offset + i`` of ``seed``: draw 0 picks the initial configuration,
    draws 2j+1 and 2j+2 the waiting level and destination of jump j.
    """
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    field_ = RateField(H, dec, psi0, t0=t_start)
    record_times = np.array([t_end] if record_times is None else record_times, dtype=float)
    if np.any(record_times < t_start) or np.any(record_times > t_end):
        raise ValueError("record times must lie in [t_start, t_end]")
    runs = np.arange(n_runs) + run_offset
    time_tol = controls.time_tol * max(abs(t_end), t_end - t_start)

    table = HazardTable(field_, t_start, t_end, controls)
    q = _initial_configs(field_, t_start, q0, runs, seed)
    initial = q.copy()
    t = np.full(n_runs, float(t_start))
    jumps = np.zeros(n_runs, dtype=int)
    rec = np.full((n_runs, record_times.size), -1, dtype=int)
    zero_events = 0
    traj_t = [[t_start] for _ in range(n_runs)] if keep_trajectories else None
    traj_q = [[int(c)] for c in q] if keep_trajectories else None

    w0 = field_.weights([t_start])[0]
    zero_events += int(np.count_nonzero(w0[q] <= field_.weight_eps))

    active = np.arange(n_runs)
    while active.size:
        if np.any(jumps[active] >= controls.max_jumps):
            raise NumericalFailure(f"run exceeded {controls.max_jumps} jumps")
        qa, ta = q[active], t[active]
        level, k_now = table.level(ta, qa)
        E = streams.exponentials(seed, runs[active], 1 + 2 * jumps[active])
        target = level + E
        ends = target >= table.cum[-1, qa]

        finished = active[ends]
        if finished.size:
            rec[finished] = np.where(rec[finished] < 0, q[finished][:, None], rec[finished])

        go = ~ends
        active = active[go]
        if not active.size:
            break
        qa, ta, target, k_now = qa[go], ta[go], target[go], k_now[go]
        T = table.invert(target, qa, ta, k_now, time_tol)

        R = field_.rates(T)[np.arange(active.size), :, qa]  # (m, n) rates out of qa
        tot = R.sum(axis=1)
        stalled = tot <= 0
        if stalled.any():
            # bisection can land just past a rate zero; look back one tolerance
            R_back = field_.rates(np.maximum(T[stalled] - time_tol, t_start))[np.arange(stalled.sum()), :, qa[stalled]]
            R[stalled] = R_back
            tot = R.sum(axis=1)
            stalled = tot <= 0
            if stalled.any():
                zero_events += int(stalled.sum())
                log.warning("%d jumps found no positive destination rate; run stays", int(stalled.sum()))
        u = streams.uniforms(seed, runs[active], 2 + 2 * jumps[active])
        dest = np.where(stalled, qa, streams.categorical(u, np.where(stalled[:, None], 1.0, R)))

        passed = (record_times[None, :] < T[:, None]) & (rec[active] < 0)
        sub = rec[active]
        sub[passed] = np.broadcast_to(qa[:, None], passed.shape)[passed]
        rec[active] = sub

        W = field_.weights(T)[np.arange(active.size), dest]
        zero_events += int(np.count_nonzero(W <= field_.weight_eps))
        q[active] = dest
        t[active] = T
        jumps[active] += 1
        if keep_trajectories:
            for i, r in enumerate(active):
                if stalled[i]:
                    continue
                traj_t[r].append(float(T[i]))
                traj_q[r].append(int(dest[i]))

    trajectories = None
    if keep_trajectories:
        trajectories = [Trajectory(traj_t[i], traj_q[i], t_start, t_end) for i in range(n_runs)]
    return EnsembleResult(record_times, rec, jumps, initial, zero_events, trajectories)


def sample_trajectory(
    H,
    dec: Decomposition,
    psi0,
    t_end: float,
    seed: int,
    *,
    q0=None,
    t_start: float = 0.0,
    controls: SamplerControls = SamplerControls(),
    run_index: int = 0,
) -> Trajectory:
    """One run of Bell's process; identical to run ``run_index`` of :func:`sample_ensemble`."""
    res = sample_ensemble(
        H, dec, psi0, t_end, 1, seed, q0=q0, t_start=t_start, controls=controls, run_offset=run_index, keep_trajectories=True
    )
    traj = res.trajectories[0]
    traj.zero_weight_events = res.zero_weight_events
    return traj


# ---------------------------------------------------------------------------
# deterministic oracle


def generator_matrix(R: np.ndarray) -> np.ndarray:
    """Kolmogorov generator G with G[q, q'] = sigma(q|q') off-diagonal, columns summing to 0."""
    G = R.copy()
    n = G.shape[-1]
    G[..., np.arange(n), np.arange(n)] = -R.sum(axis=-2)
    return G


def master_equation_evolve(
    H,
    dec: Decomposition,
    psi0,
    rho0,
    t_grid,
    ode_tol: float = 1e-10,
) -> list[ProbabilityVector]:
    """Integrate d rho/dt = G(t) rho with Bell rates along Psi_t from ``psi0`` at t = 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing and start at or after 0")
    rho0 = np.asarray(rho0, dtype=float)
    field_ = RateField(H, dec, psi0)
    if rho0.size != field_.n_configs:
        raise ValueError("rho0 does not match the number of configurations")

    def rhs(t, rho):
        return generator_matrix(field_.rates([t])[0]) @ rho

    def jac(t, rho):
        return generator_matrix(field_.rates([t])[0])

    t_span = (0.0, float(t_grid[-1]))
    if t_span[1] == 0.0:
        return [ProbabilityVector(rho0, tol=max(ode_tol, 1e-12))]
    sol = solve_ivp(rhs, t_span, rho0, method="Radau", jac=jac, t_eval=t_grid, rtol=ode_tol, atol=ode_tol * 1e-2)
    if sol.status != 0:
        raise NumericalFailure(f"master equation integration failed: {sol.message}")
    out = []
    for rho in sol.y.T:
        if abs(rho.sum() - 1.0) > max(ode_tol, 1e-8):
            raise NumericalFailure(f"probability not conserved: sum = {rho.sum()!r}")
        out.append(ProbabilityVector(rho, tol=max(ode_tol, 1e-8)))
    return out
