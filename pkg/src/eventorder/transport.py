"""Soft permutations: entropic normalisation, noise, decoding, prior divergence.

A score matrix x (positions x events) is mapped to the doubly stochastic
relaxation S = sinkhorn(exp((x + noise) / tau)) where the noise, when
used, is standard Gumbel — so as tau -> 0 the map concentrates on the
maximum-score hard permutation and sampling the noise samples
permutations. Decoding back to a hard ordering goes either through an
exact maximum-weight assignment or through ranking expected positions.

The divergence of the implied distribution over noisy scores from the
zero-score prior at temperature tau_prior has a closed form in x (per
entry: a Gumbel location shift plus temperature change), implemented
here together with its gradient; both stay finite as long as
Gamma(1 + tau_prior/tau) and exp(-x * tau_prior/tau) do.
"""

from __future__ import annotations

import math

import numpy as np

from . import backend
from .core import EventSequence, SoftPermutation, rng_from_seed

EULER_GAMMA = 0.5772156649015329


def _square_scores(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError("score matrix must be square")
    if not np.isfinite(x).all():
        raise ValueError("score matrix must be finite")
    return x


def gumbel_quantile(u):
    """Standard Gumbel quantile function, -log(-log u) for u in (0, 1)."""
    return -np.log(-np.log(u))


def sample_gumbel(n: int, rng) -> np.ndarray:
    """An n x n matrix of standard Gumbel draws via the quantile transform."""
    u = rng_from_seed(rng).random((n, n))
    # U = 0 has probability 2**-53 but would produce -inf; nudge into (0, 1).
    return gumbel_quantile(np.clip(u, 1e-300, None))


def sinkhorn(x, tau: float = 1.0, n_s: int = 20, noise=None) -> SoftPermutation:
    """Soft permutation from scores: n_s normalisation sweeps of exp((x + noise)/tau).

    Each sweep rescales columns to sum to one and then rows, in log
    space throughout; rows of the result therefore sum to one exactly
    while column sums approach one as n_s grows. Lower tau sharpens the
    result toward the best hard assignment.
    """
    log_s, _, _ = _sinkhorn_raw(x, tau, n_s, noise)[:3]
    return SoftPermutation(np.exp(log_s))


def _sinkhorn_raw(x, tau, n_s, noise=None):
    """Forward sweeps returning (log_s, r_hist, c_hist, a) for backprop."""
    x = _square_scores(x)
    if not tau > 0:
        raise ValueError("tau must be positive")
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    a = x if noise is None else x + noise
    a = a / tau
    log_s, r_hist, c_hist = backend.sinkhorn_log(a, int(n_s))
    return log_s, r_hist, c_hist, a


def _sinkhorn_vjp(a, r_hist, c_hist, log_s, grad_s, tau):
    """dL/dx given dL/dS (additive noise does not change the Jacobian)."""
    return _sinkhorn_vjp_log(a, r_hist, c_hist, grad_s * np.exp(log_s), tau)


def _sinkhorn_vjp_log(a, r_hist, c_hist, grad_log_s, tau):
    """dL/dx given dL/d(log S), the form losses on log-domain outputs produce."""
    return backend.sinkhorn_log_grad(a, r_hist, c_hist, grad_log_s) / tau


def kl_and_grad(x, tau: float, tau_prior: float) -> tuple[float, np.ndarray]:
    """Divergence from the zero-score prior, and its gradient in x.

    With r = tau_prior / tau and N the matrix side,

        KL = N^2 (log(tau / tau_prior) - 1 + gamma_E (r - 1))
             + r * sum(x) + sum(exp(-x r)) * Gamma(1 + r)
        dKL/dx = r * (1 - exp(-x r) * Gamma(1 + r))

    evaluated entrywise in log space so large r (strong priors at low
    temperature) only overflows where the true value exceeds float64
    range. At x = 0 and tau = tau_prior both are exactly zero.
    """
    x = _square_scores(x)
    if not (tau > 0 and tau_prior > 0):
        raise ValueError("temperatures must be positive")
    n2 = x.size
    r = tau_prior / tau
    lg = math.lgamma(1.0 + r)
    with np.errstate(over="ignore"):
        e = np.exp(lg - x * r)  # exp(-x r) * Gamma(1 + r), may be inf
    kl = n2 * (math.log(tau / tau_prior) - 1.0 + EULER_GAMMA * (r - 1.0))
    kl += r * float(x.sum()) + float(e.sum())
    grad = r * (1.0 - e)
    return kl, grad


def kl_to_prior(x, tau: float, tau_prior: float) -> float:
    """Divergence from the zero-score prior (see kl_and_grad)."""
    return kl_and_grad(x, tau, tau_prior)[0]


def soft_to_sequence(soft, method: str = "assignment") -> EventSequence:
    """Decode a soft permutation to a hard event ordering.

    method="assignment" solves the maximum-weight assignment exactly
    (ties broken toward the lexicographically smallest ordering);
    method="barycentre" ranks events by expected position, which is
    cheaper and matches the assignment on well-converged matrices.
    """
    s = soft.s_matrix if isinstance(soft, SoftPermutation) else np.asarray(soft, float)
    if method == "assignment":
        return EventSequence(solve_assignment(s))
    if method == "barycentre":
        expected_pos = np.arange(s.shape[0]) @ s
        return EventSequence(np.argsort(expected_pos, kind="stable"))
    raise ValueError(f"unknown decode method {method!r}")


def solve_assignment(scores) -> np.ndarray:
    """Maximum-total-score assignment of columns to rows.

    Returns col_of_row with col_of_row[i] the column assigned to row i.
    Among score-maximising assignments, returns the one whose
    (col_of_row[0], col_of_row[1], ...) tuple is lexicographically
    smallest; optimality of a candidate edge is decided from the duals
    of the assignment LP (an edge can appear in an optimal assignment
    iff it is tight), so tie-breaking never degrades the total score.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValueError("score matrix must be square")
    if not np.isfinite(scores).all():
        raise ValueError("score matrix must be finite")
    n = scores.shape[0]
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    cost = -scores
    col_of_row, u, v = _assignment_duals(cost)
    tol = 1e-9 * (1.0 + np.abs(cost).max())
    tight = (cost - u[:, None] - v[None, :]) <= tol
    if (tight.sum(axis=1) == 1).all():
        return col_of_row  # unique optimum, nothing to break
    return _lex_smallest_matching(tight, col_of_row)


def _assignment_duals(cost):
    """Min-cost perfect assignment with dual potentials (shortest augmenting paths).

    Returns (col_of_row, u, v) with u[i] + v[j] <= cost[i, j] everywhere
    and equality on assigned pairs.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # row matched to each column; 0 = free
    cols = np.arange(n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        way = np.zeros(n + 1, dtype=np.int64)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = cols[~used]
            cur = cost[i0 - 1, free - 1] - u[i0] - v[free]
            better = cur < minv[free]
            np.minimum.at(minv, free, cur)
            way[free[better]] = j0
            k = int(np.argmin(minv[free]))
            j1 = int(free[k])
            delta = minv[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = int(way[j0])
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _lex_smallest_matching(tight, col_of_row):
    """Lexicographically smallest perfect matching of the tight-edge graph.

    Starts from a known perfect matching and, row by row, tries each
    smaller tight column; a candidate is kept iff the displaced row can
    be re-matched by an augmenting path that leaves earlier (fixed) rows
    untouched.
    """
    n = tight.shape[0]
    nbrs = [np.flatnonzero(tight[i]) for i in range(n)]  # ascending
    row_match = col_of_row.astype(np.int64).copy()
    col_match = np.empty(n, dtype=np.int64)
    col_match[row_match] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)
    for i in range(n):
        cur = row_match[i]
        for j in nbrs[i]:
            if j >= cur:
                break
            if fixed_col[j]:
                continue
            displaced = int(col_match[j])
            row_match[i] = j
            col_match[j] = i
            col_match[cur] = -1
            row_match[displaced] = -1
            fixed_col[j] = True
            if _augment(displaced, nbrs, row_match, col_match, fixed_col):
                break
            fixed_col[j] = False  # revert the trial
            row_match[displaced] = j
            col_match[j] = displaced
            col_match[cur] = i
            row_match[i] = cur
        fixed_col[row_match[i]] = True
    return row_match


def _augment(r0, nbrs, row_match, col_match, fixed_col):
    """Find one augmenting path from unmatched row r0 over non-fixed columns."""
    n = len(nbrs)
    seen = np.zeros(n, dtype=bool)
    origin = np.empty(n, dtype=np.int64)
    stack = [r0]
    while stack:
        r = stack.pop()
        for j in nbrs[r]:
            if seen[j] or fixed_col[j]:
                continue
            seen[j] = True
            origin[j] = r
            k = int(col_match[j])
            if k == -1:
                while True:  # flip the path back to r0
                    r2 = int(origin[j])
                    nxt = row_match[r2]
                    row_match[r2] = j
                    col_match[j] = r2
                    if r2 == r0:
                        return True
                    j = nxt
            stack.append(k)
    return False
