"""Ensemble statistics against reference (Born) distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

# reference cells expecting fewer counts than this are pooled before the chi-square
MIN_EXPECTED = 5.0


@dataclass
class EnsembleStats:
    """Occupation counts per recorded time; every row sums to ``n_runs``."""

    times: np.ndarray
    counts: np.ndarray  # (n_times, n_configs)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.counts = np.atleast_2d(np.asarray(self.counts, dtype=np.int64))
        if self.counts.shape[0] != self.times.size:
            raise ValueError("need one row of counts per recorded time")
        totals = self.counts.sum(axis=1)
        if np.any(totals != totals[0]):
            raise ValueError("counts must sum to n_runs at every recorded time")

    @property
    def n_runs(self) -> int:
        return int(self.counts[0].sum())

    @property
    def empirical(self) -> np.ndarray:
        return self.counts / self.n_runs

    def standard_errors(self, reference: np.ndarray) -> np.ndarray:
        p = np.asarray(reference, dtype=float)
        return np.sqrt(p * (1 - p) / self.n_runs)


@dataclass
class Comparison:
    tv_distance: float
    chi_square: float
    dof: int
    p_value: float
    z_scores: np.ndarray

    def as_dict(self) -> dict:
        return {
            "tv_distance": self.tv_distance,
            "chi_square": self.chi_square,
            "dof": self.dof,
            "p_value": self.p_value,
            "max_abs_z": float(np.max(np.abs(self.z_scores))) if self.z_scores.size else 0.0,
        }


def tv_distance(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def compare_distributions(counts, reference) -> Comparison:
    """TV distance, Pearson chi-square (|Q|-1 dof after pooling) and per-configuration z-scores."""
    counts = np.asarray(counts, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if counts.shape != ref.shape:
        raise ValueError("counts and reference cover different configuration sets")
    n = counts.sum()
    emp = counts / n
    se = np.sqrt(ref * (1 - ref) / n)
    diff = emp - ref
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff == 0, 0.0, np.copysign(np.inf, diff)))

    expected = ref * n
    small = expected < MIN_EXPECTED
    obs = counts[~small]
    exp = expected[~small]
    if small.any():
        obs = np.append(obs, counts[small].sum())
        exp = np.append(exp, expected[small].sum())
    keep = exp > 0
    if np.any(obs[~keep] > 0):
        chi2 = np.inf
    else:
        chi2 = float(((obs[keep] - exp[keep]) ** 2 / exp[keep]).sum())
    dof = max(int(keep.sum()) - 1, 0)
    p_value = float(sps.chi2.sf(chi2, dof)) if dof > 0 else (1.0 if chi2 == 0 else 0.0)
    return Comparison(tv_distance(emp, ref), chi2, dof, p_value, z)


def lag1_independence_test(configs, marginals) -> tuple[float, int, float]:
    """Chi-square test that each step is drawn from its own marginal, independently of the previous step.

    ``configs`` (n_steps,) is one run; ``marginals`` (n_steps, k) are the
    distributions each step should have.  For every previous value r the
    vector of next-step counts is compared with its expectation
    sum_k [Q_k = r] p_{k+1} under the exact multinomial covariance.  The
    marginals may change from step to step, where a pooled contingency
    table would show spurious association.

    Returns (statistic, degrees of freedom, p-value).
    """
    configs = np.asarray(configs)
    p = np.asarray(marginals, dtype=float)
    prev, nxt, p_next = configs[:-1], configs[1:], p[1:]
    k = p.shape[1]
    stat = 0.0
    dof = 0
    for r in range(k):
        sel = prev == r
        if not sel.any():
            continue
        obs = np.bincount(nxt[sel], minlength=k).astype(float)
        P = p_next[sel]
        exp = P.sum(axis=0)
        cov = np.diag(exp) - P.T @ P
        live = exp > 0
        if np.any(obs[~live] > 0):
            return np.inf, 1, 0.0
        diff = (obs - exp)[live]
        c = cov[np.ix_(live, live)]
        # one direction of the covariance is null (counts sum to the row total)
        pinv = np.linalg.pinv(c, rcond=1e-10, hermitian=True)
        stat += float(diff @ pinv @ diff)
        dof += int(np.linalg.matrix_rank(c, tol=1e-10 * max(1.0, np.abs(c).max())))
    return stat, dof, float(sps.chi2.sf(stat, dof)) if dof else 1.0


def pooled_marginal_z(configs, marginals) -> np.ndarray:
    """z-scores of total occupation counts against sum of per-step marginals."""
    configs = np.asarray(configs)
    p = np.asarray(marginals, dtype=float)
    k = p.shape[1]
    obs = np.bincount(configs, minlength=k)
    exp = p.sum(axis=0)
    var = (p * (1 - p)).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(var > 0, (obs - exp) / np.sqrt(var), np.where(obs == exp, 0.0, np.inf))
