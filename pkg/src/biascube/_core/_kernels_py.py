"""Pure NumPy implementations of the hot enumeration kernels.

These mirror biascube._core._ckernels exactly; the compiled module is
preferred at import when present. Both kernels enumerate all 4^n joint
states, so they are the runtime bottleneck of exact-mode verification.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _abs_pow(v: np.ndarray, q: float) -> np.ndarray:
    a = np.abs(v)
    if q == 2.0:
        return a * a
    if q == 1.0:
        return a
    if q == 1.5:
        return a * np.sqrt(a)
    return a**q


def _qnorm_pow(v: np.ndarray, q: float, p: float) -> np.ndarray:
    """||row||_q^p along the last axis."""
    acc = _abs_pow(v, q).sum(axis=-1)
    if p == q:
        return acc
    if q == 2.0:
        nrm = np.sqrt(acc)
    elif q == 1.0:
        nrm = acc
    else:
        nrm = acc ** (1.0 / q)
    if p == 1.0:
        return nrm
    if p == 2.0:
        return nrm * nrm
    return nrm**p


def score_gradient_moment(
    df: np.ndarray,
    mu: np.ndarray,
    trans: np.ndarray,
    score: np.ndarray,
    p: float,
    q: float,
) -> float:
    """Mean over the joint start/end law of ||sum_i score_i * df[i, start]||_q^p.

    df has shape (n, 2^n, d); mu weights the start point; trans and score are
    the 2x2 per-coordinate kernel and score tables indexed by bits.
    """
    n, size, d = df.shape
    idx = np.arange(size, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n)) & 1).astype(np.int64)  # (size, n)
    acc = 0.0
    for x in range(size):
        if mu[x] == 0.0:
            continue
        bx = bits[x]
        kern = trans[bx[None, :], bits].prod(axis=1)  # (size,)
        coef = score[bx[None, :], bits]  # (size, n)
        vec = coef @ df[:, x, :]  # (size, d)
        acc += mu[x] * float(kern @ _qnorm_pow(vec, q, p))
    return acc


def pair_displacement_mean(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """E ||f(X) - f(Y)||_q over an independent weighted pair of table rows."""
    size = values.shape[0]
    acc = 0.0
    for x in range(size):
        if weights[x] == 0.0:
            continue
        diff = values[x + 1 :] - values[x]
        if diff.shape[0] == 0:
            break
        acc += 2.0 * weights[x] * float(weights[x + 1 :] @ _qnorm_pow(diff, q, 1.0))
    return acc
