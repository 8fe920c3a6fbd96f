"""Candidate discrete-time probability currents and their admissibility.

A candidate starts from one of two bilinear expressions in Psi,

    guess1(q, q') = <Psi| U* P(q) U P(q') |Psi>
    guess2(q, q') = <Psi| P(q) U P(q') |Psi>,

takes its real or imaginary part, multiplies by a constant and
antisymmetrizes: J(q, q') = scale/2 * (part(q, q') - part(q', q)).
``check_conditions`` tests a current for reality, antisymmetry, the
outflow bound sum_q J(q, q')^+ <= <P(q')>, and the balance
sum_q' J(q, q') = <U*P(q)U> - <P(q)>.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .bell import CurrentMatrix
from .discrete import TransitionMatrix
from .errors import ConditionViolation, DimensionError
from .hilbert import (
    Decomposition,
    _as_state,
    _as_unitary,
    haar_random_unitary,
    random_state,
)

log = logging.getLogger(__name__)

CONDITION_TOL = 1e-10
_BORDERLINE = 1e-12


@dataclass(frozen=True)
class CandidateId:
    base: Literal["guess1", "guess2"]
    part: Literal["real", "imag"]
    scale: float | None = None

    def __post_init__(self):
        if self.base not in ("guess1", "guess2"):
            raise ValueError(f"unknown base expression {self.base!r}")
        if self.part not in ("real", "imag"):
            raise ValueError(f"unknown part {self.part!r}")
        if self.scale is None:
            default = 2.0 if (self.base, self.part) == ("guess1", "real") else 1.0
            object.__setattr__(self, "scale", default)

    @classmethod
    def parse(cls, text: str) -> "CandidateId":
        """Parse ``base:part[:scale]``, e.g. ``guess1:real:2``."""
        bits = text.strip().split(":")
        if len(bits) not in (2, 3):
            raise ValueError(f"candidate must look like base:part[:scale], got {text!r}")
        part = {"re": "real", "im": "imag", "imaginary": "imag"}.get(bits[1], bits[1])
        return cls(bits[0], part, float(bits[2]) if len(bits) == 3 else None)

    def __str__(self):
        return f"{self.base}:{self.part}:{self.scale:g}"


EXPRESSION_9 = CandidateId("guess1", "real", 2.0)
ALL_BASE_PARTS = [CandidateId(b, p) for b in ("guess1", "guess2") for p in ("real", "imag")]


def _check(psi, U, dec):
    psi, U = _as_state(psi), _as_unitary(U)
    dec.check_dim(psi.dim)
    if U.dim != psi.dim:
        raise DimensionError("U and psi dimensions differ")
    return psi.amplitudes, U.matrix


def base_matrix(psi, U, dec: Decomposition, base: str) -> np.ndarray:
    """Complex (n, n) matrix of the base expression over configuration pairs."""
    a, Um = _check(psi, U, dec)
    if base == "guess1":
        left = Um @ a  # <Psi|U* P(q) = (P(q) U Psi)^*
    elif base == "guess2":
        left = a
    else:
        raise ValueError(f"unknown base expression {base!r}")
    A = left.conj()[:, None] * Um * a[None, :]
    return dec.block_sum(A)


def candidate_current(psi, U, dec: Decomposition, cand: CandidateId = EXPRESSION_9) -> CurrentMatrix:
    b = base_matrix(psi, U, dec, cand.base)
    part = b.real if cand.part == "real" else b.imag
    return CurrentMatrix(0.5 * cand.scale * (part - part.T))


def expression_current(psi, U, dec: Decomposition) -> CurrentMatrix:
    """The antisymmetrized real part of guess1 written out with explicit projectors:

    J(q,q') = 1/2 <Psi|(U*P(q)UP(q') + P(q')U*P(q)U - U*P(q')UP(q) - P(q)U*P(q')U)|Psi>
    """
    a, Um = _check(psi, U, dec)
    Ud = Um.conj().T
    n = dec.n_configs
    P = [dec.projector(q) for q in range(n)]
    J = np.empty((n, n), dtype=complex)
    for q in range(n):
        for r in range(n):
            op = Ud @ P[q] @ Um @ P[r] + P[r] @ Ud @ P[q] @ Um - Ud @ P[r] @ Um @ P[q] - P[q] @ Ud @ P[r] @ Um
            J[q, r] = 0.5 * (a.conj() @ op @ a)
    return CurrentMatrix(J)


def required_change(psi, U, dec: Decomposition) -> np.ndarray:
    """<Psi|U*P(q)U|Psi> - <Psi|P(q)|Psi> for every q."""
    a, Um = _check(psi, U, dec)
    return dec.weights(Um @ a) - dec.weights(a)


@dataclass
class ConditionReport:
    cond1_max_imag: float
    cond2_max_asym: float
    cond3_excess: np.ndarray  # per source configuration q': sum_q J(q,q')^+ - <P(q')>
    cond4_residual: np.ndarray  # per configuration q: sum_q' J(q,q') - required change
    tol: float = CONDITION_TOL
    borderline: list[str] = field(default_factory=list)

    @property
    def cond1(self) -> bool:
        return self.cond1_max_imag <= self.tol

    @property
    def cond2(self) -> bool:
        return self.cond2_max_asym <= self.tol

    @property
    def cond3(self) -> bool:
        return bool(np.all(self.cond3_excess <= self.tol))

    @property
    def cond4(self) -> bool:
        return bool(np.all(np.abs(self.cond4_residual) <= self.tol))

    @property
    def all_pass(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3 and self.cond4

    def flags(self) -> dict[str, bool]:
        return {"cond1": self.cond1, "cond2": self.cond2, "cond3": self.cond3, "cond4": self.cond4}


def check_conditions(J, psi, U, dec: Decomposition, tol: float = CONDITION_TOL) -> ConditionReport:
    Jm = np.asarray(J)
    n = dec.n_configs
    if Jm.shape != (n, n):
        raise DimensionError(f"current must be {n}x{n}, got {Jm.shape}")
    a, _ = _check(psi, U, dec)
    w = dec.weights(a)
    imag = float(np.max(np.abs(np.imag(Jm)), initial=0.0))
    Jr = np.real(Jm)
    asym = float(np.max(np.abs(Jr + Jr.T), initial=0.0))
    excess = np.maximum(Jr, 0.0).sum(axis=0) - w
    resid = Jr.sum(axis=1) - required_change(psi, U, dec)

    borderline = []
    for name, val in (("cond1", imag), ("cond2", asym), ("cond3", float(excess.max())), ("cond4", float(np.abs(resid).max()))):
        if _BORDERLINE < val <= tol:
            borderline.append(name)
            log.info("%s residual %.3e is within tolerance but above %.0e", name, val, _BORDERLINE)
    return ConditionReport(imag, asym, excess, resid, tol, borderline)


def transition_from_current(J, psi, dec: Decomposition, tol: float = CONDITION_TOL) -> TransitionMatrix:
    """P(q' -> q) = J(q,q')^+ / <P(q')> off the diagonal; the diagonal completes each column.

    Sources with zero weight keep their configuration.  Raises
    ConditionViolation if some column's outflow exceeds its weight.
    """
    Jr = np.real(np.asarray(J))
    psi = _as_state(psi)
    dec.check_dim(psi.dim)
    w = dec.weights(psi.amplitudes)
    n = dec.n_configs
    out = np.maximum(Jr, 0.0)
    np.fill_diagonal(out, 0.0)
    excess = out.sum(axis=0) - w
    worst = int(np.argmax(excess))
    if excess[worst] > tol:
        raise ConditionViolation(
            f"outflow from configuration {worst} exceeds its weight by {excess[worst]:.3e}",
            config=worst,
            excess=float(excess[worst]),
        )
    P = np.zeros((n, n))
    live = w > 0
    P[:, live] = out[:, live] / w[live]
    # clip rounding so columns stay stochastic
    col = P.sum(axis=0)
    over = col > 1.0
    P[:, over] /= col[over]
    P[np.arange(n), np.arange(n)] = 1.0 - P.sum(axis=0)
    return TransitionMatrix(P, flagged=tuple(int(q) for q in np.flatnonzero(~live)))


def realized_current(T: TransitionMatrix, rho) -> np.ndarray:
    """P(q'->q) rho(q') - P(q->q') rho(q)."""
    F = np.asarray(T.probs) * np.asarray(rho, dtype=float)[None, :]
    return F - F.T


# ---------------------------------------------------------------------------
# random search


@dataclass
class ScanResult:
    """Outcome of a violation scan.

    ``violation_count`` counts samples where the outflow bound fails for the
    source configuration q' of ``q_pair = (q, q')``; ``pair_count`` counts
    failures at either configuration of the pair, ``any_count`` anywhere,
    and ``entry_count`` samples where the single entry J(q, q')^+ already
    exceeds <P(q')>.
    """

    n_samples: int
    candidate: str
    q_pair: tuple[int, int]
    violation_count: int
    pair_count: int
    any_count: int
    entry_count: int
    tallies: dict[str, int]
    max_residual: dict[str, float]
    worst_excess: list[tuple[int, float]]

    @property
    def violation_fraction(self) -> float:
        return self.violation_count / self.n_samples if self.n_samples else 0.0

    def as_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "candidate": self.candidate,
            "q_pair": list(self.q_pair),
            "violation_count": self.violation_count,
            "violation_fraction": self.violation_fraction,
            "pair_count": self.pair_count,
            "any_count": self.any_count,
            "entry_count": self.entry_count,
            "tallies": dict(self.tallies),
            "max_residual": dict(self.max_residual),
            "worst_excess": [list(x) for x in self.worst_excess],
        }


def sample_instance(d: int, seed: int, index: int):
    """(U, psi) of sample ``index``; each sample owns a child stream of ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(index,))
    rng = np.random.default_rng(ss)
    return haar_random_unitary(d, rng), random_state(d, rng)


def violation_scan(
    d: int,
    dec: Decomposition,
    q_pair: tuple[int, int],
    candidate: CandidateId = EXPRESSION_9,
    n_samples: int = 1000,
    seed: int = 0,
    *,
    fixed_unitary=None,
    tol: float = CONDITION_TOL,
    keep_worst: int = 5,
) -> ScanResult:
    """Count condition failures of ``candidate`` over random (U, psi) in C^d."""
    if d < 2:
        raise ValueError("need d >= 2")
    dec.check_dim(d)
    q, qp = (int(x) for x in q_pair)
    tallies = {"cond1": 0, "cond2": 0, "cond3": 0, "cond4": 0}
    max_res = {"cond1": 0.0, "cond2": 0.0, "cond3": -np.inf, "cond4": 0.0}
    col = pair = anywhere = entry = 0
    worst: list[tuple[int, float]] = []
    for i in range(n_samples):
        U, psi = sample_instance(d, seed, i)
        if fixed_unitary is not None:
            U = fixed_unitary
        J = candidate_current(psi, U, dec, candidate)
        rep = check_conditions(J, psi, U, dec, tol)
        for name, ok in rep.flags().items():
            tallies[name] += not ok
        max_res["cond1"] = max(max_res["cond1"], rep.cond1_max_imag)
        max_res["cond2"] = max(max_res["cond2"], rep.cond2_max_asym)
        max_res["cond3"] = max(max_res["cond3"], float(rep.cond3_excess.max()))
        max_res["cond4"] = max(max_res["cond4"], float(np.abs(rep.cond4_residual).max()))
        bad = rep.cond3_excess > tol
        col += bool(bad[qp])
        pair += bool(bad[q] or bad[qp])
        anywhere += bool(bad.any())
        w = dec.weights(psi.amplitudes)
        entry += bool(max(J.entries[q, qp], 0.0) - w[qp] > tol)
        worst.append((i, float(rep.cond3_excess[qp])))
    worst.sort(key=lambda x: -x[1])
    return ScanResult(
        n_samples=n_samples,
        candidate=str(candidate),
        q_pair=(q, qp),
        violation_count=col,
        pair_count=pair,
        any_count=anywhere,
        entry_count=entry,
        tallies=tallies,
        max_residual=max_res,
        worst_excess=worst[:keep_worst],
    )
