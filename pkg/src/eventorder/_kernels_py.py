"""Pure-NumPy reference kernels for the entropic normalisation sweeps.

The compiled extension (_kernels.pyx) implements exactly the same
algorithm; this module is the import-time fallback and the ground truth
the extension is tested against.

Everything here stays in log space. The normalised matrix is represented
implicitly as

    log S = A - r[:, None] - c[None, :]

where A is the (read-only) input potential and r, c are per-row and
per-column offsets. A sweep does a column step (recompute c so columns
sum to one) followed by a row step (recompute r so rows sum to one), so
after the final sweep row sums are exact and column sums converge with
the sweep count. Offsets after each step are kept because the backward
pass reuses them to rebuild the intermediate softmax matrices instead of
storing n_s dense matrices.
"""

import numpy as np

BACKEND_NAME = "python"


def sinkhorn_log(a, n_s):
    """Run n_s column+row normalisation sweeps on potential matrix a.

    Returns (log_s, r_hist, c_hist): the final log-normalised matrix and
    the offset histories, where r_hist[t], c_hist[t] are the offsets in
    effect after sweep t's row and column steps (index 0 = zeros).
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    n = a.shape[0]
    r = np.zeros(n)
    r_hist = np.zeros((n_s + 1, n))
    c_hist = np.zeros((n_s + 1, n))
    for t in range(1, n_s + 1):
        z = a - r[:, None]
        m = z.max(axis=0)
        c = m + np.log(np.exp(z - m).sum(axis=0))
        z = a - c[None, :]
        m = z.max(axis=1)
        r = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
        c_hist[t] = c
        r_hist[t] = r
    log_s = a - r[:, None] - c_hist[n_s][None, :]
    return log_s, r_hist, c_hist


def sinkhorn_log_grad(a, r_hist, c_hist, grad_log_s):
    """Reverse-mode gradient of the sweeps: dL/dA from dL/d(log S).

    Each step's Jacobian-transpose product has the softmax form
    g -= (sum of g over the normalised axis) * softmax, and every
    intermediate softmax matrix is exp(A - r - c) for the offsets that
    were in effect, so the histories are all that is needed. Callers
    holding dL/dS instead multiply by exp(log S) first.
    """
    n_s = r_hist.shape[0] - 1
    g = np.array(grad_log_s, dtype=np.float64)
    for t in range(n_s, 0, -1):
        p = np.exp(a - r_hist[t][:, None] - c_hist[t][None, :])
        g = g - g.sum(axis=1)[:, None] * p
        q = np.exp(a - r_hist[t - 1][:, None] - c_hist[t][None, :])
        g = g - g.sum(axis=0)[None, :] * q
    return g
