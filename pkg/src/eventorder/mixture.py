"""Per-feature two-component Gaussian mixtures and the log-density tables.

Each feature gets its own univariate mixture: a "normal" component
anchored at initialisation to the labelled controls and an "abnormal"
component anchored to the labelled patients. EM then runs over the
pooled observed values of the feature (controls, patients and unlabelled
alike), so unlabelled individuals inform the refinement while the labels
fix which component is which. The resulting component densities — not
the mixture — fill the per-cell log-likelihood tables used by inference,
with missing cells set to 0 in both tables so they cancel at every
stage.
"""

from __future__ import annotations

import numpy as np

from .core import (
    Dataset,
    DivergenceError,
    Label,
    LikelihoodTables,
    MixtureParams,
    validate_dataset,
)

_LOG_2PI = float(np.log(2.0 * np.pi))
SIGMA_FLOOR_SCALE = 1e-3  # times the feature's observed standard deviation


def _log_normal(v, mu, sigma):
    z = (v - mu) / sigma
    return -0.5 * (z * z + _LOG_2PI) - np.log(sigma)


def _fit_feature(v, v_control, v_patient, max_iter, tol):
    """EM for one feature; returns (mu_c, sigma_c, mu_p, sigma_p, w, ll_trace).

    w is the abnormal-component weight. Monotonicity of the observed-data
    log-likelihood is enforced each iteration except when the sigma floor
    binds (projecting sigma up can cost likelihood).
    """
    floor = SIGMA_FLOOR_SCALE * float(v.std())
    if floor == 0.0:
        raise ValueError("feature is constant: cannot fit a mixture")
    mu_c, sigma_c = float(v_control.mean()), max(float(v_control.std()), floor)
    mu_p, sigma_p = float(v_patient.mean()), max(float(v_patient.std()), floor)
    w = v_patient.size / (v_patient.size + v_control.size)
    ll_trace = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        w = min(max(w, 1e-12), 1.0 - 1e-12)  # keep both components alive
        lp = _log_normal(v, mu_p, sigma_p) + np.log(w)
        lc = _log_normal(v, mu_c, sigma_c) + np.log1p(-w)
        m = np.maximum(lp, lc)
        log_mix = m + np.log(np.exp(lp - m) + np.exp(lc - m))
        ll = float(log_mix.sum())
        floored = sigma_c <= floor or sigma_p <= floor
        if not np.isfinite(ll) or (not floored and ll < prev_ll - 1e-7 * (1 + abs(prev_ll))):
            raise DivergenceError("EM log-likelihood is non-finite or decreased")
        ll_trace.append(ll)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll
        g = np.exp(lp - log_mix)  # responsibility of the abnormal component
        sg, sn = float(g.sum()), float((1.0 - g).sum())
        w = sg / v.size
        mu_p = float((g * v).sum()) / sg
        mu_c = float(((1.0 - g) * v).sum()) / sn
        sigma_p = max(np.sqrt(float((g * (v - mu_p) ** 2).sum()) / sg), floor)
        sigma_c = max(np.sqrt(float(((1.0 - g) * (v - mu_c) ** 2).sum()) / sn), floor)
    for val in (mu_c, sigma_c, mu_p, sigma_p, w):
        if not np.isfinite(val):
            raise DivergenceError("EM produced a non-finite parameter")
    return mu_c, sigma_c, mu_p, sigma_p, w, ll_trace


def fit_mixtures(d: Dataset, max_iter: int = 200, tol: float = 1e-6) -> MixtureParams:
    """Fit the per-feature mixtures over all observed values of each feature.

    Needs at least two observed control values and two observed patient
    values per feature to anchor the initialisation.
    """
    validate_dataset(d)
    is_control = d.labels == Label.CONTROL
    is_patient = d.labels == Label.PATIENT
    out = np.empty((5, d.n_features))
    for j in range(d.n_features):
        obs = d.observed[:, j]
        v = d.values[obs, j]
        v_control = d.values[obs & is_control, j]
        v_patient = d.values[obs & is_patient, j]
        if v_control.size < 2 or v_patient.size < 2:
            raise ValueError(
                f"feature {d.feature_names[j]!r}: need >= 2 observed control"
                f" and >= 2 observed patient values to initialise EM"
            )
        out[:, j] = _fit_feature(v, v_control, v_patient, max_iter, tol)[:5]
    return MixtureParams(mu_c=out[0], sigma_c=out[1], mu_p=out[2], sigma_p=out[3], w=out[4])


def build_tables(d: Dataset, m: MixtureParams) -> LikelihoodTables:
    """Per-cell log densities under each fitted component; 0 where missing."""
    if m.n_features != d.n_features:
        raise ValueError(
            f"mixture has {m.n_features} features, dataset has {d.n_features}"
        )
    v = np.where(d.observed, d.values, 0.0)  # placeholder at missing cells
    log_p = np.where(d.observed, _log_normal(v, m.mu_p, m.sigma_p), 0.0)
    log_c = np.where(d.observed, _log_normal(v, m.mu_c, m.sigma_c), 0.0)
    return LikelihoodTables(log_p=log_p, log_c=log_c)
