import os
import subprocess
import sys
from pathlib import Path

import pytest

from biascube._core import _kernels_py

try:
    from biascube._core import _ckernels
except ImportError:
    _ckernels = None

needs_compiled = pytest.mark.skipif(_ckernels is None, reason="extension not built")

SRC = str(Path(__file__).resolve().parent.parent / "src")


def _random_inputs(rng, n=5, d=3):
    size = 1 << n
    df = rng.standard_normal((n, size, d))
    mu = rng.random(size)
    mu /= mu.sum()
    trans = rng.random((2, 2)) + 0.05
    score = rng.standard_normal((2, 2))
    return df, mu, trans, score


@needs_compiled
@pytest.mark.parametrize("p,q", [(1.0, 1.0), (1.5, 1.5), (2.0, 2.0), (1.3, 2.0), (2.0, 1.5)])
def test_score_gradient_parity(p, q, rng):
    df, mu, trans, score = _random_inputs(rng)
    a = _kernels_py.score_gradient_moment(df, mu, trans, score, p, q)
    b = _ckernels.score_gradient_moment(df, mu, trans, score, p, q)
    assert b == pytest.approx(a, rel=1e-12)


@needs_compiled
@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 2.7])
def test_pair_displacement_parity(q, rng):
    values = rng.standard_normal((64, 3))
    w = rng.random(64)
    w /= w.sum()
    a = _kernels_py.pair_displacement_mean(values, w, q)
    b = _ckernels.pair_displacement_mean(values, w, q)
    assert b == pytest.approx(a, rel=1e-12)


def test_env_var_forces_fallback():
    env = dict(os.environ, BIASCUBE_PURE_PYTHON="1", PYTHONPATH=SRC)
    out = subprocess.run(
        [sys.executable, "-c",
         "from biascube._core import BACKEND, HAVE_COMPILED; print(BACKEND, HAVE_COMPILED)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.split() == ["python", "False"]


@needs_compiled
def test_selected_backend_is_compiled():
    if os.environ.get("BIASCUBE_PURE_PYTHON"):
        pytest.skip("fallback forced via environment")
    from biascube._core import BACKEND, HAVE_COMPILED

    assert HAVE_COMPILED and BACKEND == "compiled"


def test_engine_agrees_across_backends(rng, monkeypatch):
    """The engine must produce the same exact-mode value on either backend."""
    import biascube._core as core
    from biascube.cube import lp_norm_spec, random_cube_function
    from biascube.engine import score_gradient_moment_exact

    f = random_cube_function(4, 2, rng)
    got = score_gradient_moment_exact(f, 0.1, 0.7, 1.5, lp_norm_spec(1.5))
    monkeypatch.setattr(core, "score_gradient_moment", _kernels_py.score_gradient_moment)
    fallback = score_gradient_moment_exact(f, 0.1, 0.7, 1.5, lp_norm_spec(1.5))
    assert fallback == pytest.approx(got, rel=1e-12)
