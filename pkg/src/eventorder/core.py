"""Domain types and shared numeric utilities.

Everything downstream works on the objects defined here: an observation
matrix with missing-value mask and group labels, per-feature two-component
mixture parameters, the log-density lookup tables derived from them, and
the two permutation representations (soft doubly stochastic matrix, hard
event sequence).

All types are immutable after construction; array fields are copied and
marked read-only so instances can be shared freely across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

EULER_GAMMA = 0.5772156649015329

# Reproducibility contract: every stochastic operation takes an integer
# seed (or a Generator derived from one) and draws from NumPy's PCG64 via
# default_rng. Sub-streams are split with SeedSequence.spawn so parallel
# replicates stay independent and bit-reproducible on one platform.


def rng_from_seed(seed) -> np.random.Generator:
    """Build the package-standard generator (PCG64) from a seed.

    Accepts an int, a SeedSequence, or an existing Generator (returned
    unchanged so callers can thread one generator through a pipeline).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    """Split a master seed into n independent child seed sequences."""
    return np.random.SeedSequence(seed).spawn(n)


class DivergenceError(RuntimeError):
    """A numeric routine produced a non-finite result (overflow, EM collapse)."""


class Label(enum.IntEnum):
    CONTROL = 0
    PATIENT = 1
    UNLABELLED = 2


def _frozen(a: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Cross-sectional snapshot data: one row per individual, one column per feature.

    values[i, j] is the measurement of feature j for individual i, in
    whatever units the feature uses; observed[i, j] marks whether that
    cell was measured. labels hold the diagnostic group of each
    individual (control / patient / unlabelled).
    """

    values: np.ndarray
    observed: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __init__(self, values, observed=None, labels=None, feature_names=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        n_ind, n_feat = values.shape
        if observed is None:
            observed = np.isfinite(values)
        observed = np.asarray(observed, dtype=bool)
        if labels is None:
            raise ValueError("labels are required")
        labels = np.asarray([Label(l) for l in np.asarray(labels).ravel()], dtype=np.int8)
        if feature_names is None:
            feature_names = tuple(f"feature_{j}" for j in range(n_feat))
        object.__setattr__(self, "values", _frozen(np.where(observed, values, np.nan)))
        object.__setattr__(self, "observed", _frozen(observed))
        object.__setattr__(self, "labels", _frozen(labels, dtype=np.int8))
        object.__setattr__(self, "feature_names", tuple(str(n) for n in feature_names))

    @property
    def n_individuals(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def validate_dataset(d: Dataset) -> None:
    """Check every Dataset invariant; raise ValueError on the first violation.

    Required for fitting: matching shapes, at least one individual and
    feature, finite values at observed cells, and at least one control
    and one patient among the labels.
    """
    n_ind, n_feat = d.values.shape
    if n_ind < 1 or n_feat < 1:
        raise ValueError("dataset must have at least one individual and one feature")
    if d.observed.shape != d.values.shape:
        raise ValueError(
            f"observed mask shape {d.observed.shape} does not match values {d.values.shape}"
        )
    if d.labels.shape != (n_ind,):
        raise ValueError(f"need exactly one label per individual, got {d.labels.shape}")
    if len(d.feature_names) != n_feat:
        raise ValueError(
            f"{len(d.feature_names)} feature names for {n_feat} features"
        )
    if not np.isfinite(d.values[d.observed]).all():
        raise ValueError("non-finite value at an observed cell")
    if not (d.labels == Label.CONTROL).any():
        raise ValueError("no control group: mixture fitting needs labelled controls")
    if not (d.labels == Label.PATIENT).any():
        raise ValueError("no patient group: mixture fitting needs labelled patients")


@dataclass(frozen=True)
class MixtureParams:
    """Per-feature two-component Gaussian parameters.

    The control component (mu_c, sigma_c) models normal measurements, the
    patient component (mu_p, sigma_p) abnormal ones; w is the fitted
    abnormal-component weight. Tables store pure component densities, so w
    only steers the EM responsibilities.
    """

    mu_c: np.ndarray
    sigma_c: np.ndarray
    mu_p: np.ndarray
    sigma_p: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("mu_c", "sigma_c", "mu_p", "sigma_p", "w"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.float64))
        if not (self.sigma_c > 0).all() or not (self.sigma_p > 0).all():
            raise ValueError("sigma must be positive for every feature and component")
        if not ((self.w >= 0) & (self.w <= 1)).all():
            raise ValueError("mixture weight must lie in [0, 1]")

    @property
    def n_features(self) -> int:
        return self.mu_c.shape[0]


@dataclass(frozen=True)
class LikelihoodTables:
    """Per-cell log densities under the patient and control components.

    Missing cells carry 0 in both tables so their contributions cancel at
    every stage (missing-at-random treatment); tables are immutable and
    fixed for the whole of inference.
    """

    log_p: np.ndarray
    log_c: np.ndarray

    def __post_init__(self):
        log_p = np.asarray(self.log_p, dtype=np.float64)
        log_c = np.asarray(self.log_c, dtype=np.float64)
        if log_p.shape != log_c.shape or log_p.ndim != 2:
            raise ValueError("log_p and log_c must be matrices of equal shape")
        if not np.isfinite(log_p).all() or not np.isfinite(log_c).all():
            raise DivergenceError("non-finite log density in likelihood table")
        object.__setattr__(self, "log_p", _frozen(log_p))
        object.__setattr__(self, "log_c", _frozen(log_c))

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_p.shape


@dataclass(frozen=True)
class SoftPermutation:
    """Doubly stochastic relaxation of a permutation.

    s_matrix[n, j] is the soft assignment of event j to sequence position
    n. Rows are exactly normalised by construction (the final Sinkhorn
    sweep ends on rows); column sums converge to 1 with the number of
    sweeps, so strict double stochasticity is checked by
    is_doubly_stochastic rather than at construction.
    """

    s_matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.s_matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("s_matrix must be square")
        if not np.isfinite(m).all():
            raise DivergenceError("non-finite entry in soft permutation")
        if (m < 0).any():
            raise ValueError("soft permutation entries must be nonnegative")
        object.__setattr__(self, "s_matrix", _frozen(m))

    @property
    def n(self) -> int:
        return self.s_matrix.shape[0]

    def is_doubly_stochastic(self, tol: float = 1e-6) -> bool:
        row = np.abs(self.s_matrix.sum(axis=1) - 1.0).max()
        col = np.abs(self.s_matrix.sum(axis=0) - 1.0).max()
        return bool(row <= tol and col <= tol)


@dataclass(frozen=True)
class EventSequence:
    """Hard ordering of events: order[n] is the event at position n."""

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64).ravel()
        n = order.shape[0]
        if n < 1:
            raise ValueError("sequence must contain at least one event")
        counts = np.bincount(order, minlength=n) if order.min(initial=0) >= 0 else None
        if counts is None or counts.shape[0] != n or (counts != 1).any():
            raise ValueError("order must be a bijection on {0..N-1}")
        object.__setattr__(self, "order", _frozen(order, dtype=np.int64))

    def __len__(self) -> int:
        return self.order.shape[0]

    def positions(self) -> np.ndarray:
        """Inverse map: positions()[j] is the sequence position of event j."""
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(len(self))
        return pos

    def to_matrix(self) -> np.ndarray:
        """Hard permutation matrix with a 1 at (position, event)."""
        n = len(self)
        m = np.zeros((n, n))
        m[np.arange(n), self.order] = 1.0
        return m


@dataclass(frozen=True)
class ModelConfig:
    """Inference settings.

    tau is the posterior temperature, tau_prior the prior temperature; n_s
    the number of Sinkhorn sweeps per evaluation and n_opt the number of
    optimiser steps. With use_gumbel_noise off (the default) the single
    evaluation per step is deterministic; switching it on draws a fresh
    noise matrix each step for stochastic training and uncertainty
    sampling. x_init selects the score-matrix initialisation: "zeros"
    (uninformative, the default) or "prevalence" (a heuristic warm start
    from per-feature abnormality rates).
    """

    tau: float = 1.0
    tau_prior: float = 1.0
    n_s: int = 20
    n_opt: int = 200
    learning_rate: float = 0.1
    use_gumbel_noise: bool = False
    seed: int = 0
    x_init: str = "zeros"

    def __post_init__(self):
        if not (self.tau > 0 and self.tau_prior > 0):
            raise ValueError("tau and tau_prior must be positive")
        if self.n_s < 1 or self.n_opt < 1:
            raise ValueError("n_s and n_opt must be positive integers")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.x_init not in ("zeros", "prevalence"):
            raise ValueError(f"unknown x_init {self.x_init!r}")


@dataclass(frozen=True)
class FittedModel:
    """Result of fitting: learned scores, decoded orderings, and diagnostics."""

    x_scores: np.ndarray
    soft_perm: SoftPermutation
    sequence: EventSequence
    mixtures: MixtureParams
    elbo_trace: np.ndarray
    config: ModelConfig
    feature_names: tuple[str, ...]
    inference_seconds: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "x_scores", _frozen(self.x_scores, dtype=np.float64))
        object.__setattr__(self, "elbo_trace", _frozen(self.elbo_trace, dtype=np.float64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))


@dataclass(frozen=True)
class StagePosterior:
    """Posterior over stages 0..N for one individual (stage k = first k events occurred)."""

    probs: np.ndarray
    ml_stage: int = field(init=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if (p < 0).any() or not np.isfinite(p).all():
            raise ValueError("stage posterior must be finite and nonnegative")
        total = p.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"stage posterior sums to {total!r}, expected 1")
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "ml_stage", int(np.argmax(p)))


def log_sum_exp(v, axis=None) -> np.ndarray | float:
    """Overflow-safe log(sum(exp(v))) along an axis (all entries if None)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)  # all -inf: exp underflows to 0 cleanly
    out = np.squeeze(m, axis=axis) if axis is not None else m.reshape(())
    with np.errstate(divide="ignore"):  # log(0) = -inf is the correct answer here
        out = out + np.log(np.sum(np.exp(v - m), axis=axis))
    return out if axis is not None else float(out)
