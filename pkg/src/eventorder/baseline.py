"""Classical event-based model baseline: hard sequences only.

The reference approach to cross-sectional event ordering scores a hard
sequence by the same stage-marginalised likelihood the variational model
uses and explores sequence space by swapping pairs of positions, either
greedily (accept only improvements, best of several random starts) or as
a Metropolis chain (accept with probability min(1, exp(delta))). Both
re-evaluate the full likelihood per proposal, which is what makes them
the slow baseline: every step costs O(I * N) on top of the table gather.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EventSequence, LikelihoodTables, log_sum_exp, rng_from_seed, spawn_seeds
from .model import _stage_logits


def hard_seq_loglik(t: LikelihoodTables, s) -> float:
    """Log-likelihood of a hard event sequence under the uniform stage prior."""
    order = s.order if isinstance(s, EventSequence) else np.asarray(s, dtype=np.int64)
    g = _stage_logits(t.log_p[:, order], t.log_c[:, order])
    return float(log_sum_exp(g, axis=1).sum()) - t.log_p.shape[0] * np.log(g.shape[1])


def _propose_pair(n: int, rng) -> tuple[int, int]:
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    return i, j + (j >= i)


def _climb(t, order, n_iter, rng):
    """Greedy pairwise-swap ascent from one start; returns (order, ll, trace).

    trace[k] is the accepted-state log-likelihood after proposal k, so it
    is non-decreasing by construction (strict improvements only).
    """
    order = np.array(order, dtype=np.int64)
    n = order.size
    ll = hard_seq_loglik(t, order)
    trace = np.empty(n_iter)
    for k in range(n_iter):
        if n >= 2:
            i, j = _propose_pair(n, rng)
            order[i], order[j] = order[j], order[i]
            cand = hard_seq_loglik(t, order)
            if cand > ll:
                ll = cand
            else:
                order[i], order[j] = order[j], order[i]
        trace[k] = ll
    return order, ll, trace


def ebm_greedy(t: LikelihoodTables, n_iter: int, n_seeds: int, seed=0) -> EventSequence:
    """Best sequence from n_seeds greedy pairwise-swap climbs of n_iter steps.

    Each start is an independent uniformly random permutation; a proposal
    swaps two distinct random positions and is kept only when it strictly
    improves the likelihood. n_iter = 0 returns the best bare start.
    """
    if n_iter < 0:
        raise ValueError("n_iter must be nonnegative")
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    n = t.log_p.shape[1]
    best_order, best_ll = None, -np.inf
    for chain_seed in spawn_seeds(seed, n_seeds):
        rng = rng_from_seed(chain_seed)
        order, ll, _ = _climb(t, rng.permutation(n), n_iter, rng)
        if ll > best_ll:
            best_order, best_ll = order, ll
    return EventSequence(best_order)


@dataclass(frozen=True)
class McmcTrace:
    """Metropolis chain output: per-step states, likelihoods, and accept count."""

    orders: np.ndarray  # (n_samples, N) chain state after each proposal
    log_liks: np.ndarray  # (n_samples,)
    accepted: int

    def __post_init__(self):
        if self.orders.shape[0] != self.log_liks.shape[0]:
            raise ValueError("orders and log_liks must have one row per step")
        if not 0 <= self.accepted <= self.log_liks.shape[0]:
            raise ValueError("accept count out of range")

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.log_liks.shape[0]

    @property
    def samples(self) -> list[EventSequence]:
        return [EventSequence(o) for o in self.orders]

    @property
    def map_sequence(self) -> EventSequence:
        return EventSequence(self.orders[int(np.argmax(self.log_liks))])


def ebm_mcmc(t: LikelihoodTables, init: EventSequence, n_samples: int, seed=0) -> McmcTrace:
    """Metropolis sampling over sequences with two-position swap proposals.

    Starts at init and records the chain state after every proposal (no
    burn-in, no thinning); a proposal is accepted with probability
    min(1, exp(loglik difference)). The maximum-likelihood sample is the
    trace's map_sequence.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    order = np.array(init.order if isinstance(init, EventSequence) else init, dtype=np.int64)
    n = order.size
    rng = rng_from_seed(seed)
    ll = hard_seq_loglik(t, order)
    orders = np.empty((n_samples, n), dtype=np.int32)
    log_liks = np.empty(n_samples)
    accepted = 0
    for k in range(n_samples):
        if n >= 2:
            i, j = _propose_pair(n, rng)
            order[i], order[j] = order[j], order[i]
            cand = hard_seq_loglik(t, order)
            if rng.random() < np.exp(min(cand - ll, 0.0)):
                ll = cand
                accepted += 1
            else:
                order[i], order[j] = order[j], order[i]
        else:
            accepted += 1
        orders[k] = order
        log_liks[k] = ll
    return McmcTrace(orders=orders, log_liks=log_liks, accepted=accepted)
