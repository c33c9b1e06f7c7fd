"""Average distortion of cube embeddings against the Hamming metric.

An embedding has average distortion D when it is D-Lipschitz for Hamming
distance while its mean displacement E||f(x) - f(y)|| over an independent
pair stays at least the mean Hamming distance E d(x, y) = 2 n alpha (1-alpha).
For an arbitrary table the reported distortion rescales f so the displacement
constraint is tight, which is the smallest D any rescaling achieves. The
type-p bound gives the floor (1-alpha) (alpha n)^(1-1/p) / (64 T) on D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom as _binom

from biascube import _core
from biascube.cube import BiasedMeasure, CubeFunction, CubePoint, NormSpec, measure_weights
from biascube.engine import MCSpec, _substream

EXACT_PAIR_MAX_N = 10
LIPSCHITZ_MAX_N = 16


def hamming(x: CubePoint, y: CubePoint) -> int:
    """Number of differing coordinates."""
    if x.n != y.n:
        raise ValueError(f"points live on cubes of different dimension ({x.n} vs {y.n})")
    return (x.index ^ y.index).bit_count()


def average_hamming(alpha: float, n: int) -> float:
    """E d(x, y) over an independent biased pair: 2 n alpha (1 - alpha)."""
    return 2.0 * n * alpha * (1.0 - alpha)


def pair_agreement_probability(alpha: float, n: int) -> float:
    """P(d(x, y) = 0) = (1 - 2 alpha (1 - alpha))^n."""
    return (1.0 - 2.0 * alpha * (1.0 - alpha)) ** n


def lipschitz_constant(f: CubeFunction, norm: NormSpec) -> float:
    """Max over Hamming-adjacent pairs of ||f(x) - f(y)||.

    Adjacent pairs suffice: Hamming is a path metric, so every pair is joined
    by unit steps and the one-step bound propagates.
    """
    if f.n > LIPSCHITZ_MAX_N:
        raise ValueError(f"lipschitz scan limited to n <= {LIPSCHITZ_MAX_N}")
    idx = np.arange(f.size)
    best = 0.0
    for i in range(f.n):
        best = max(best, float(norm.norm(f.values - f.values[idx ^ (1 << i)]).max()))
    return best


def average_displacement(
    f: CubeFunction,
    alpha: float,
    norm: NormSpec,
    mode: str = "exact",
    mc: MCSpec | None = None,
) -> float:
    """E ||f(x) - f(y)|| over an independent biased pair."""
    w = measure_weights(BiasedMeasure(alpha, f.n))
    if mode == "exact":
        if f.n > EXACT_PAIR_MAX_N:
            raise ValueError(f"exact pair enumeration limited to n <= {EXACT_PAIR_MAX_N}")
        return float(_core.pair_displacement_mean(f.values, w, norm.q))
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    mc = mc or MCSpec()
    rng = _substream(mc.seed, 0)
    total, count = 0.0, 0
    per = mc.samples // mc.batches
    for _ in range(mc.batches):
        bx = (rng.random((per, f.n)) < alpha) @ (1 << np.arange(f.n, dtype=np.int64))
        by = (rng.random((per, f.n)) < alpha) @ (1 << np.arange(f.n, dtype=np.int64))
        total += float(norm.norm(f.values[bx] - f.values[by]).sum())
        count += per
    return total / count


def distortion_lower_bound(alpha: float, n: int, p: float, T: float) -> float:
    """(1 - alpha) (alpha n)^(1 - 1/p) / (64 T), the type-p distortion floor.

    Conservative explicit constant assembled from the 32-constant bound, the
    Lipschitz control of flip derivatives, Jensen and the exact mean Hamming
    distance. At p = 1 the bound degenerates to the constant (1 - alpha)/(64 T).
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha={alpha} must lie in (0, 1/2)")
    if not 1.0 <= p <= 2.0:
        raise ValueError(f"p={p} must lie in [1, 2]")
    return (1.0 - alpha) * (alpha * n) ** (1.0 - 1.0 / p) / (64.0 * T)


@dataclass
class EmbeddingReport:
    lipschitz: float
    avg_displacement: float
    avg_hamming: float
    distortion: float
    lower_bound: float
    params: dict

    def to_record(self, command: str = "distortion") -> dict:
        return {
            "command": command,
            "params": self.params,
            "lhs": self.lower_bound,
            "rhs": self.distortion,
            "ratio": self.lower_bound / self.distortion if self.distortion > 0 else 0.0,
            "error_estimate": 0.0,
            "pass": self.lower_bound <= self.distortion,
            "notes": (
                f"lipschitz={self.lipschitz!r} displacement={self.avg_displacement!r} "
                f"avg_hamming={self.avg_hamming!r}"
            ),
        }


def average_distortion(
    f: CubeFunction,
    alpha: float,
    norm: NormSpec,
    mode: str = "exact",
    mc: MCSpec | None = None,
) -> EmbeddingReport:
    """Distortion after the optimal rescaling of f.

    Rescaling f by E d / displacement makes the displacement constraint tight
    and leaves distortion = lipschitz * E d / displacement, the smallest value
    any rescaling of f achieves. Constant tables have no displacement and no
    defined distortion.
    """
    disp = average_displacement(f, alpha, norm, mode, mc)
    if disp <= 0.0:
        raise ValueError("constant embedding: displacement is zero, distortion undefined")
    lip = lipschitz_constant(f, norm)
    ed = average_hamming(alpha, f.n)
    value = lip * ed / disp
    params = {"n": f.n, "d": f.d, "alpha": alpha, "p": norm.p, "q": norm.q,
              "T": norm.T, "mode": mode}
    lower = distortion_lower_bound(alpha, f.n, norm.p, norm.T) if alpha < 0.5 else float("nan")
    return EmbeddingReport(lip, disp, ed, value, lower, params)


def identity_displacement(n: int, alpha: float, q: float = 2.0) -> float:
    """E ||x - y||_q for the identity map: 2 E[d^(1/q)] via the binomial law.

    The Hamming distance of an independent biased pair is Binomial(n, theta)
    with theta = 2 alpha (1 - alpha), and each differing coordinate contributes
    |2|^q to the q-th power of the displacement.
    """
    theta = 2.0 * alpha * (1.0 - alpha)
    k = np.arange(n + 1)
    pmf = _binom.pmf(k, n, theta)
    return float(2.0 * (pmf @ k ** (1.0 / q)))


def identity_embedding_report(n: int, alpha: float, q: float = 2.0) -> EmbeddingReport:
    """Closed-form distortion report for the identity map into l_q^n.

    Exact for any n, which is how the constant-distortion regime alpha ~ 1/n
    is checked at sizes far beyond the table limit.
    """
    p = min(max(q, 1.0), 2.0)
    disp = identity_displacement(n, alpha, q)
    ed = average_hamming(alpha, n)
    value = 2.0 * ed / disp
    params = {"n": n, "d": n, "alpha": alpha, "p": p, "q": q, "T": 1.0,
              "mode": "closed_form"}
    lower = distortion_lower_bound(alpha, n, p, 1.0) if alpha < 0.5 else float("nan")
    return EmbeddingReport(2.0, disp, ed, value, lower, params)
