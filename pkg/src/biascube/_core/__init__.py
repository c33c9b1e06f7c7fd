"""Hot-kernel backend selection.

Imports the compiled extension when it is built and falls back to the NumPy
implementation otherwise. Set BIASCUBE_PURE_PYTHON=1 to force the fallback,
for example when benchmarking the two against each other.
"""

from __future__ import annotations

import os

if os.environ.get("BIASCUBE_PURE_PYTHON"):
    from biascube._core import _kernels_py as _backend

    HAVE_COMPILED = False
else:
    try:
        from biascube._core import _ckernels as _backend  # type: ignore[attr-defined]

        HAVE_COMPILED = True
    except ImportError:
        from biascube._core import _kernels_py as _backend

        HAVE_COMPILED = False

BACKEND = _backend.BACKEND
score_gradient_moment = _backend.score_gradient_moment
pair_displacement_mean = _backend.pair_displacement_mean
