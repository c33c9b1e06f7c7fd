"""Timing comparison of the compiled enumeration kernels against the NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Both backends compute identical values; the table reports wall time per call
and the speedup of the compiled extension where it is available.
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from biascube._core import _kernels_py  # noqa: E402

try:
    from biascube._core import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        value = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return value, best


def bench_score_gradient(n: int, d: int, rng) -> None:
    size = 1 << n
    df = rng.standard_normal((n, size, d))
    mu = rng.random(size)
    mu /= mu.sum()
    trans = np.abs(rng.random((2, 2))) + 0.1
    score = rng.standard_normal((2, 2))
    args = (df, mu, trans, score, 1.5, 1.5)
    v_py, t_py = _time(_kernels_py.score_gradient_moment, *args)
    row = f"score_gradient n={n:2d} d={d}  python {t_py * 1e3:9.2f} ms"
    if _ckernels is not None:
        v_c, t_c = _time(_ckernels.score_gradient_moment, *args)
        assert abs(v_py - v_c) <= 1e-9 * max(1.0, abs(v_py))
        row += f"   compiled {t_c * 1e3:9.2f} ms   speedup {t_py / t_c:6.1f}x"
    print(row)


def bench_pair_displacement(n: int, d: int, rng) -> None:
    size = 1 << n
    values = rng.standard_normal((size, d))
    w = rng.random(size)
    w /= w.sum()
    v_py, t_py = _time(_kernels_py.pair_displacement_mean, values, w, 2.0)
    row = f"pair_disp      n={n:2d} d={d}  python {t_py * 1e3:9.2f} ms"
    if _ckernels is not None:
        v_c, t_c = _time(_ckernels.pair_displacement_mean, values, w, 2.0)
        assert abs(v_py - v_c) <= 1e-9 * max(1.0, abs(v_py))
        row += f"   compiled {t_c * 1e3:9.2f} ms   speedup {t_py / t_c:6.1f}x"
    print(row)


def main() -> None:
    rng = np.random.default_rng(0)
    if _ckernels is None:
        print("compiled extension not built; showing fallback timings only")
    for n in (6, 8, 10):
        bench_score_gradient(n, 3, rng)
    for n in (8, 10, 12):
        bench_pair_displacement(n, 3, rng)


if __name__ == "__main__":
    main()
