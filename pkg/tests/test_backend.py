import os
import subprocess
import sys

import numpy as np
import pytest

from eventorder import _kernels_py as pyk
from eventorder import backend


def test_compiled_backend_is_active():
    # the build in this repository compiles the extension; if this fails
    # the package silently runs on the slow path, which we want to notice
    if os.environ.get("EVENTORDER_PURE_PYTHON", "") not in ("", "0"):
        pytest.skip("fallback forced via EVENTORDER_PURE_PYTHON")
    assert backend.backend_name() == "compiled"


compiled = pytest.importorskip("eventorder._kernels")


@pytest.mark.parametrize("n,n_s,scale", [(2, 1, 1.0), (7, 9, 3.0), (60, 40, 0.2), (200, 100, 1.0)])
def test_forward_parity(n, n_s, scale):
    a = np.random.default_rng(n * 1000 + n_s).normal(size=(n, n)) / scale
    ls_c, rh_c, ch_c = compiled.sinkhorn_log(a, n_s)
    ls_p, rh_p, ch_p = pyk.sinkhorn_log(a, n_s)
    assert np.abs(ls_c - ls_p).max() < 1e-12
    assert np.abs(rh_c - rh_p).max() < 1e-12
    assert np.abs(ch_c - ch_p).max() < 1e-12


@pytest.mark.parametrize("n,n_s", [(2, 1), (7, 9), (60, 40)])
def test_gradient_parity(n, n_s):
    rng = np.random.default_rng(n + n_s)
    a = rng.normal(size=(n, n))
    g = rng.normal(size=(n, n))
    _, rh, ch = pyk.sinkhorn_log(a, n_s)
    gc = compiled.sinkhorn_log_grad(a, rh, ch, g)
    gp = pyk.sinkhorn_log_grad(a, rh, ch, g)
    assert np.abs(gc - gp).max() < 1e-12


def test_gradient_accepts_noncontiguous():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    _, rh, ch = compiled.sinkhorn_log(a, 4)
    g = rng.normal(size=(12, 12))[::2, ::2]  # strided view
    assert not g.flags.c_contiguous
    got = compiled.sinkhorn_log_grad(a, rh, ch, g)
    want = pyk.sinkhorn_log_grad(a, rh, ch, np.ascontiguousarray(g))
    assert np.abs(got - want).max() < 1e-12


def test_env_override_forces_python_backend():
    import os

    env = dict(os.environ, EVENTORDER_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import eventorder.backend as b; print(b.backend_name())"],
        capture_output=True,
        text=True,
        env=env,
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "python"
