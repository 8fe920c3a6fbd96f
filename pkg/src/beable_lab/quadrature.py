"""Adaptive composite Gauss-Legendre quadrature for vector-valued integrands.

The integrand is refined panel by panel until a panel's single-rule
estimate agrees with the sum over its two halves.  Accepted panels keep
their node values, so callers can build cumulative integrals (and nested
time-ordered integrals) without re-evaluating the integrand.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import legendre

DEFAULT_ORDER = 8


@lru_cache(maxsize=None)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def left_integration_matrix(order: int) -> np.ndarray:
    """S with (S f)_i = integral from -1 to x_i of the interpolant of f at the Gauss nodes."""
    x, _ = gauss_rule(order)
    V = legendre.legvander(x, order - 1)
    # antiderivative of each Legendre basis polynomial, anchored at -1
    A = np.empty((order, order))
    for j in range(order):
        c = np.zeros(order)
        c[j] = 1.0
        A[:, j] = legendre.legval(x, legendre.legint(c, lbnd=-1))
    S = A @ np.linalg.inv(V)
    S.setflags(write=False)
    return S


@dataclass
class Panels:
    """Accepted panels of an adaptive rule.

    edges: (p+1,) panel boundaries; nodes: (p, m) Gauss nodes; values:
    (p, m, k) integrand at the nodes; capped: number of panels accepted at
    the minimum width without meeting the tolerance.
    """

    edges: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    order: int
    capped: int = 0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def panel_integrals(self) -> np.ndarray:
        _, w = gauss_rule(self.order)
        return 0.5 * self.widths[:, None] * np.einsum("m,pmk->pk", w, self.values)

    def cumulative_at_edges(self) -> np.ndarray:
        """(p+1, k) integral from the left end to each edge."""
        I = self.panel_integrals()
        out = np.zeros((I.shape[0] + 1, I.shape[1]))
        np.cumsum(I, axis=0, out=out[1:])
        return out

    def cumulative_at_nodes(self, values: np.ndarray | None = None) -> np.ndarray:
        """(p, m, k) integral from the left end to each node of the interpolated integrand."""
        values = self.values if values is None else values
        S = left_integration_matrix(self.order)
        local = 0.5 * self.widths[:, None, None] * np.einsum("ij,pjk->pik", S, values)
        _, w = gauss_rule(self.order)
        full = 0.5 * self.widths[:, None] * np.einsum("m,pmk->pk", w, values)
        before = np.concatenate([np.zeros((1, full.shape[1])), np.cumsum(full, axis=0)[:-1]])
        return before[:, None, :] + local

    def total(self, values: np.ndarray | None = None) -> np.ndarray:
        values = self.values if values is None else values
        _, w = gauss_rule(self.order)
        return (0.5 * self.widths[:, None] * np.einsum("m,pmk->pk", w, values)).sum(axis=0)


def _nodes_for(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    return 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x[None, :]


def adaptive_panels(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-14,
    order: int = DEFAULT_ORDER,
    n_initial: int = 8,
    max_depth: int = 40,
    breakpoints=(),
) -> Panels:
    """Refine panels of [a, b] until each meets ``|I_whole - I_halves| <= rtol*|I_halves| + atol*width``.

    ``f`` maps an array of points (N,) to values (N, k).  All panels of a
    refinement level are evaluated in a single call.
    """
    if not b > a:
        raise ValueError("need b > a")
    x, w = gauss_rule(order)
    edges = np.unique(np.concatenate([np.linspace(a, b, n_initial + 1), [p for p in breakpoints if a < p < b]]))
    lo, hi = edges[:-1], edges[1:]
    min_width = (b - a) * 2.0**-max_depth

    acc_lo, acc_nodes, acc_vals = [], [], []
    capped = 0
    while lo.size:
        mid = 0.5 * (lo + hi)
        p = lo.size
        pts = np.concatenate([_nodes_for(lo, hi, x), _nodes_for(lo, mid, x), _nodes_for(mid, hi, x)])
        vals = np.asarray(f(pts.ravel()), dtype=float)
        vals = vals.reshape(3 * p, order, -1)
        whole, left, right = vals[:p], vals[p : 2 * p], vals[2 * p :]
        width = hi - lo
        I_whole = 0.5 * width[:, None] * np.einsum("m,pmk->pk", w, whole)
        I_halves = 0.25 * width[:, None] * (np.einsum("m,pmk->pk", w, left) + np.einsum("m,pmk->pk", w, right))
        err = np.abs(I_whole - I_halves).max(axis=1)
        scale = np.abs(I_halves).max(axis=1)
        ok = err <= rtol * scale + atol * width
        at_floor = width <= 2 * min_width
        capped += int(np.count_nonzero(~ok & at_floor))
        done = ok | at_floor
        if done.any():
            d_lo, d_mid, d_hi = lo[done], mid[done], hi[done]
            acc_lo.append(np.concatenate([d_lo, d_mid]))
            acc_nodes.append(np.concatenate([_nodes_for(d_lo, d_mid, x), _nodes_for(d_mid, d_hi, x)]))
            acc_vals.append(np.concatenate([left[done], right[done]]))
        keep = ~done
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])

    lo_all = np.concatenate(acc_lo)
    order_idx = np.argsort(lo_all, kind="stable")
    nodes = np.concatenate(acc_nodes)[order_idx]
    values = np.concatenate(acc_vals)[order_idx]
    lefts = lo_all[order_idx]
    edges = np.append(lefts, b)
    return Panels(edges=edges, nodes=nodes, values=values, order=order, capped=capped)


def gauss_integral(f: Callable[[np.ndarray], np.ndarray], a: np.ndarray, b: np.ndarray, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Single-panel rule over many intervals at once: returns (len(a), k)."""
    x, w = gauss_rule(order)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = _nodes_for(a, b, x)
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(a.size, order, -1)
    return 0.5 * (b - a)[:, None] * np.einsum("m,pmk->pk", w, vals)
