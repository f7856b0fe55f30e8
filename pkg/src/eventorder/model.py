"""Variational ordering inference: likelihood, ELBO, gradients, fitting, staging.

The data likelihood marginalises each individual over N+1 latent stages
(stage k = the first k events in the ordering have occurred) with a
uniform stage prior. Under a soft permutation, position n's likelihood
column is the S[n, :]-weighted mixture of the per-event *density*
columns, taken in the density domain and then logged:

    B[i, n] = log sum_j S[n, j] * exp(log_table[i, j])

which reduces to an exact column permutation when S is hard. Mixing the
log tables directly (an expected log-likelihood) is also exact at the
vertices but behaves very differently away from them: a near-flat S
then gives every position the average *log* density, which is dominated
by the worst-fitting events, saturates the stage posteriors, and leaves
a near-rank-one gradient that stalls the optimiser. The density-domain
mixture keeps the stage posteriors soft at a flat S, and in practice is
the difference between recovering the generating order and not.

Fitting maximises the single-sample ELBO

    data_loglik(tables, sinkhorn((x + eps)/tau)) - KL(x; tau, tau_prior)

over the score matrix x with Adam, backpropagating by hand through the
stage marginalisation, the density mixing, and the unrolled
normalisation sweeps; eps is fresh Gumbel noise each step in stochastic
mode and 0 otherwise.
"""

from __future__ import annotations

import time

import numpy as np

from .core import (
    Dataset,
    DivergenceError,
    EventSequence,
    FittedModel,
    LikelihoodTables,
    ModelConfig,
    SoftPermutation,
    StagePosterior,
    log_sum_exp,
    rng_from_seed,
    validate_dataset,
)
from .mixture import build_tables, fit_mixtures
from .transport import (
    _sinkhorn_vjp_log,
    _square_scores,
    kl_and_grad,
    sample_gumbel,
    soft_to_sequence,
)
from . import backend

# Entries of an overflowing KL gradient are clamped here so Adam's second
# moment stays finite; the update direction is preserved.
GRAD_CLAMP = 1e150

# Mixed densities below exp(-690.8) are floored so their log stays finite;
# everything this model family produces sits far above the floor.
TINY_DENSITY = 1e-300

_ADAM_B1, _ADAM_B2, _ADAM_EPS = 0.9, 0.999, 1e-8


def _as_matrix(s) -> np.ndarray:
    return s.s_matrix if isinstance(s, SoftPermutation) else np.asarray(s, dtype=np.float64)


def _checked_matrix(t: LikelihoodTables, s) -> np.ndarray:
    s_arr = _as_matrix(s)
    if s_arr.shape[0] != t.log_p.shape[1]:
        raise ValueError(
            f"soft permutation is {s_arr.shape[0]}x{s_arr.shape[1]} but tables"
            f" have {t.log_p.shape[1]} features"
        )
    return s_arr


def permuted_tables(t: LikelihoodTables, s) -> tuple[np.ndarray, np.ndarray]:
    """Position-indexed expected log-likelihood columns under soft ordering s.

    Column n of the result mixes the event log-table columns with
    weights S[n, :]; at a hard S this reorders columns exactly. The
    likelihood itself mixes in the density domain (mixed_tables); this
    log-domain average is the right object for inspecting per-position
    expectations at or near a hard ordering.
    """
    s_arr = _checked_matrix(t, s)
    return t.log_p @ s_arr.T, t.log_c @ s_arr.T


def _mixed_cols(table: np.ndarray, s_arr: np.ndarray):
    """log(exp(table) @ S^T) with per-row max scaling; also the scaled parts."""
    m = table.max(axis=1)[:, None]
    scaled = np.exp(table - m)
    out = scaled @ s_arr.T
    np.maximum(out, TINY_DENSITY, out=out)
    return np.log(out) + m, out, scaled


def mixed_tables(t: LikelihoodTables, s) -> tuple[np.ndarray, np.ndarray]:
    """Position-indexed log mixed-density columns under soft ordering s.

    Column n is log Σ_j S[n, j] exp(table[:, j]): the ordering weights
    mix the per-event density columns, so a hard S reorders columns
    exactly and an unobserved feature (log density 0) contributes unit
    density. Mixtures beneath TINY_DENSITY are floored before the log.
    """
    s_arr = _checked_matrix(t, s)
    return _mixed_cols(t.log_p, s_arr)[0], _mixed_cols(t.log_c, s_arr)[0]


def _stage_logits(lam_p: np.ndarray, lam_c: np.ndarray) -> np.ndarray:
    """g[i, k] = sum_{n<k} lam_p[i, n] + sum_{n>=k} lam_c[i, n], k = 0..N."""
    n_ind, n = lam_p.shape
    cp = np.zeros((n_ind, n + 1))
    np.cumsum(lam_p, axis=1, out=cp[:, 1:])
    cc = np.zeros((n_ind, n + 1))
    np.cumsum(lam_c, axis=1, out=cc[:, 1:])
    return cp + (cc[:, -1:] - cc)


def data_loglik(t: LikelihoodTables, s) -> float:
    """Log-likelihood of all individuals under soft ordering s, uniform stage prior."""
    b_p, b_c = mixed_tables(t, s)
    g = _stage_logits(b_p, b_c)
    ll = float(log_sum_exp(g, axis=1).sum()) - t.log_p.shape[0] * np.log(g.shape[1])
    if not np.isfinite(ll):
        raise DivergenceError("data log-likelihood is non-finite")
    return ll


def _loglik_and_grad_log_s(t, s_arr):
    """Data log-likelihood and its gradient with respect to log S."""
    b_p, out_p, p_scaled = _mixed_cols(t.log_p, s_arr)
    b_c, out_c, c_scaled = _mixed_cols(t.log_c, s_arr)
    g = _stage_logits(b_p, b_c)
    lse = log_sum_exp(g, axis=1)
    ll = float(lse.sum()) - t.log_p.shape[0] * np.log(g.shape[1])
    w = np.exp(g - lse[:, None])  # per-individual stage posterior
    reached = np.cumsum(w, axis=1)[:, :-1]  # P(stage <= n), n = 0..N-1
    # d ll / dB_p[i, n] = P(stage > n), d ll / dB_c[i, n] = P(stage <= n),
    # and dB[i, n] / d log S[n, j] is event j's weight inside mixture (i, n)
    grad_log_s = s_arr * (
        ((1.0 - reached) / out_p).T @ p_scaled + (reached / out_c).T @ c_scaled
    )
    return ll, grad_log_s, w


def elbo(x, t: LikelihoodTables, cfg: ModelConfig, noise=None) -> float:
    """Single-sample evidence lower bound at scores x (deterministic when noise is None)."""
    return _elbo_and_grad(x, t, cfg, noise, want_grad=False)[0]


def elbo_grad(x, t: LikelihoodTables, cfg: ModelConfig, noise=None) -> np.ndarray:
    """Exact reverse-mode gradient of the single-sample ELBO with respect to x."""
    return _elbo_and_grad(x, t, cfg, noise)[1]


def _elbo_and_grad(x, t, cfg, noise=None, want_grad=True):
    x = _square_scores(x)
    if x.shape[0] != t.log_p.shape[1]:
        raise ValueError("score matrix side must equal the number of features")
    a = (x if noise is None else x + noise) / cfg.tau
    log_s, r_hist, c_hist = backend.sinkhorn_log(a, cfg.n_s)
    s_arr = np.exp(log_s)
    ll, grad_log_s, _ = _loglik_and_grad_log_s(t, s_arr)
    kl, kl_grad = kl_and_grad(x, cfg.tau, cfg.tau_prior)
    value = ll - kl
    if not want_grad:
        return value, None
    grad = _sinkhorn_vjp_log(a, r_hist, c_hist, grad_log_s, cfg.tau) - kl_grad
    if np.isnan(grad).any():
        raise DivergenceError("ELBO gradient is NaN")
    return value, grad


def initial_scores(t: LikelihoodTables, observed: np.ndarray, kind: str) -> np.ndarray:
    """Starting score matrix: zeros, or a mild ridge from abnormality prevalence.

    The prevalence start puts each event's ridge at a position
    proportional to how rarely it looks abnormal (common abnormalities
    happen early), which can speed up convergence on large cohorts but
    introduces a data-dependent bias; it is opt-in.
    """
    n = t.log_p.shape[1]
    if kind == "zeros":
        return np.zeros((n, n))
    if kind != "prevalence":
        raise ValueError(f"unknown x_init {kind!r}")
    abnormal = (t.log_p > t.log_c) & observed
    counts = observed.sum(axis=0)
    rate = np.where(counts > 0, abnormal.sum(axis=0) / np.maximum(counts, 1), 0.5)
    target = (1.0 - rate) * (n - 1)
    pos = np.arange(n)[:, None]
    return -4.0 * ((pos - target[None, :]) / n) ** 2


def fit(d: Dataset, cfg: ModelConfig = ModelConfig()) -> FittedModel:
    """Fit mixtures and the ordering posterior; returns the decoded model.

    Runs cfg.n_opt Adam steps (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) on
    the ELBO. The trace records the objective at the start of each step;
    a non-improving run is returned as-is for diagnosis, not raised.
    """
    validate_dataset(d)
    mixtures = fit_mixtures(d)
    t = build_tables(d, mixtures)
    n = d.n_features
    x = initial_scores(t, d.observed, cfg.x_init)
    rng = rng_from_seed(cfg.seed)
    m = np.zeros((n, n))
    v = np.zeros((n, n))
    trace = np.empty(cfg.n_opt)
    started = time.perf_counter()
    for step in range(cfg.n_opt):
        noise = sample_gumbel(n, rng) if cfg.use_gumbel_noise else None
        value, grad = _elbo_and_grad(x, t, cfg, noise)
        trace[step] = value
        g = np.clip(grad, -GRAD_CLAMP, GRAD_CLAMP)
        m = _ADAM_B1 * m + (1 - _ADAM_B1) * g
        v = _ADAM_B2 * v + (1 - _ADAM_B2) * g * g
        m_hat = m / (1 - _ADAM_B1 ** (step + 1))
        v_hat = v / (1 - _ADAM_B2 ** (step + 1))
        x = x + cfg.learning_rate * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
    elapsed = time.perf_counter() - started
    log_s = backend.sinkhorn_log(x / cfg.tau, cfg.n_s)[0]
    soft = SoftPermutation(np.exp(log_s))
    return FittedModel(
        x_scores=x,
        soft_perm=soft,
        sequence=soft_to_sequence(soft, "assignment"),
        mixtures=mixtures,
        elbo_trace=trace,
        config=cfg,
        feature_names=d.feature_names,
        inference_seconds=elapsed,
    )


def stage(fm: FittedModel, d: Dataset) -> list[StagePosterior]:
    """Stage posterior for every individual under the fitted hard sequence.

    Stage k means the first k events of fm.sequence have occurred; an
    all-missing row gets the uniform posterior.
    """
    if tuple(d.feature_names) != tuple(fm.feature_names):
        missing = set(fm.feature_names) - set(d.feature_names)
        extra = set(d.feature_names) - set(fm.feature_names)
        raise ValueError(
            "dataset features do not match the fitted model"
            + (f"; missing {sorted(missing)}" if missing else "")
            + (f"; unexpected {sorted(extra)}" if extra else "")
            + ("; same names, different order" if not missing and not extra else "")
        )
    t = build_tables(d, fm.mixtures)
    order = fm.sequence.order
    g = _stage_logits(t.log_p[:, order], t.log_c[:, order])
    w = np.exp(g - log_sum_exp(g, axis=1)[:, None])
    return [StagePosterior(row) for row in w]


def sample_positional_variance(
    fm: FittedModel, cfg: ModelConfig, n_samples: int, seed=None
) -> np.ndarray:
    """Event-by-position frequency matrix over posterior permutation samples.

    Each sample perturbs the learned scores with fresh Gumbel noise,
    renormalises, and decodes a hard ordering; entry [event, position]
    is the fraction of samples placing that event there, so every row
    sums to one.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = rng_from_seed(cfg.seed if seed is None else seed)
    n = fm.x_scores.shape[0]
    counts = np.zeros((n, n))
    positions = np.arange(n)
    for _ in range(n_samples):
        noisy = fm.x_scores + sample_gumbel(n, rng)
        log_s = backend.sinkhorn_log(noisy / cfg.tau, cfg.n_s)[0]
        order = soft_to_sequence(np.exp(log_s), "assignment").order
        counts[order, positions] += 1.0
    return counts / n_samples
