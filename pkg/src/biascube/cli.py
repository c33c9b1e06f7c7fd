"""Batch front end: config handling, seeding, experiment dispatch, report emission.

One declarative key = value config file plus flag overrides (flags win); every
run writes JSON-lines records with schema
{command, params, lhs, rhs, ratio, error_estimate, pass, notes} after a single
header record, and exits 0 exactly when every contract in the run passed.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from biascube import distortion as dist
from biascube import engine, io, poisson
from biascube.cube import NormSpec, biased_identity_residual, random_cube_function
from biascube.engine import MCSpec, _substream
from biascube.quadrature import (
    QuadratureSpec,
    integrate_time,
    score_envelope_integral,
    score_envelope_integrand,
    sqrt_kernel_integrand,
)
from biascube.reporting import dump_jsonl, header_record, write_csv
from biascube.semigroup import (
    KernelParams,
    apply_heat,
    dirichlet_form,
    dirichlet_form_gradient,
    heat_derivative_residual,
    score_abs_moment,
    score_moment_bound,
    score_table,
    transition_matrix,
)

SEED_REQUIRED = {
    "verify-identities", "verify-theorem", "verify-corollary",
    "extremal-search", "poisson-verify", "scaling-limit",
}


class UsageError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok.strip()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise UsageError(field, message)


def _norm(params: dict, p: float) -> NormSpec:
    q = params.get("q")
    return NormSpec(q=p if q is None else float(q), p=p, T=float(params.get("T", 1.0)))


def _alpha_ok(alpha: float) -> None:
    _require(0.0 < alpha < 1.0, "alpha", f"must lie in (0, 1); got {alpha}")


def _mk_record(command, params, lhs, rhs, ratio, err, passed, notes="") -> dict:
    return {
        "command": command, "params": params, "lhs": float(lhs), "rhs": float(rhs),
        "ratio": float(ratio), "error_estimate": float(err), "pass": bool(passed),
        "notes": notes,
    }


# ---------------------------------------------------------------- commands

def _cmd_verify_identities(params: dict):
    tol = float(params.get("tolerance", 1e-12))
    count = int(params.get("count", 100))
    n_max = int(params.get("n", 5))
    d_max = int(params.get("d", 3))
    alphas = _floats(params.get("alpha_grid", "0.05,0.1,0.25,0.49"))
    ts = _floats(params.get("t_grid", "0.1,1,3"))
    for a in alphas:
        _alpha_ok(a)
    _require(1 <= n_max <= 10, "n", "identity battery needs 1 <= n <= 10")
    rng = _substream(int(params["seed"]), 1)
    worst = {k: 0.0 for k in (
        "kernel_row_sum", "time_zero_identity", "stationarity", "detailed_balance",
        "semigroup_property", "biased_derivative_identity", "dirichlet_identity",
        "heat_derivative_identity",
    )}
    for a in alphas:
        mu = np.array([1.0 - a, a])
        for t in ts:
            K = transition_matrix(KernelParams(a, t))
            worst["kernel_row_sum"] = max(worst["kernel_row_sum"], float(np.abs(K.sum(axis=1) - 1).max()))
            worst["stationarity"] = max(worst["stationarity"], float(np.abs(mu @ K - mu).max()))
            db = abs(mu[0] * K[0, 1] - mu[1] * K[1, 0])
            worst["detailed_balance"] = max(worst["detailed_balance"], db)
        K0 = transition_matrix(KernelParams(a, 0.0))
        worst["time_zero_identity"] = max(worst["time_zero_identity"], float(np.abs(K0 - np.eye(2)).max()))
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        d = int(rng.integers(1, d_max + 1))
        f = random_cube_function(n, d, rng)
        g = random_cube_function(n, d, rng)
        for a in alphas:
            worst["biased_derivative_identity"] = max(
                worst["biased_derivative_identity"], biased_identity_residual(f, a))
            worst["dirichlet_identity"] = max(
                worst["dirichlet_identity"],
                abs(dirichlet_form(f, g, a) - dirichlet_form_gradient(f, g, a)))
            for t in ts:
                kp = KernelParams(a, t)
                two = apply_heat(apply_heat(f, KernelParams(a, t / 2)), KernelParams(a, t / 2))
                worst["semigroup_property"] = max(
                    worst["semigroup_property"], float(np.abs(two.values - apply_heat(f, kp).values).max()))
                for i in range(n):
                    worst["heat_derivative_identity"] = max(
                        worst["heat_derivative_identity"], heat_derivative_residual(f, kp, i))
        zero = apply_heat(f, KernelParams(alphas[0], 0.0))
        worst["time_zero_identity"] = max(
            worst["time_zero_identity"], float(np.abs(zero.values - f.values).max()))
    base = {"n": n_max, "d": d_max, "count": count, "alpha_grid": alphas,
            "t_grid": ts, "seed": int(params["seed"])}
    records = [
        _mk_record("verify-identities", {**base, "identity": name}, res, tol,
                   res / tol, 0.0, res <= tol)
        for name, res in sorted(worst.items())
    ]
    return records, None, None


def _cmd_verify_delta_bound(params: dict):
    tol = float(params.get("tolerance", 1e-12))
    alphas = params.get("alpha_grid")
    alphas = _floats(alphas) if alphas else list(np.linspace(0.005, 0.495, 50))
    ts = params.get("t_grid")
    ts = _floats(ts) if ts else list(np.geomspace(0.01, 10.0, 50))
    ps = _floats(params.get("p_grid", "1,1.5,2"))
    for a in alphas:
        _require(0.0 < a < 0.5, "alpha_grid", f"bound sweep needs alpha < 1/2; got {a}")
    worst_violation = -np.inf
    worst_mean = 0.0
    for a in alphas:
        for t in ts:
            kp = KernelParams(a, t)
            K = transition_matrix(kp)
            sc = score_table(kp)
            worst_mean = max(worst_mean, float(np.abs((K * sc).sum(axis=1)).max()))
            for p in ps:
                bound = score_moment_bound(a, t, p)
                for x in (-1, 1):
                    worst_violation = max(worst_violation, score_abs_moment(kp, p, x) - bound)
    base = {"alphas": len(alphas), "ts": len(ts), "p_grid": ps}
    records = [
        _mk_record("verify-delta-bound", {**base, "check": "moment_bound"},
                   worst_violation, tol, 0.0, 0.0, worst_violation <= tol,
                   "max over grid of exact moment minus envelope"),
        _mk_record("verify-delta-bound", {**base, "check": "conditional_mean_zero"},
                   worst_mean, 1e-14, 0.0, 0.0, worst_mean <= 1e-14),
    ]
    return records, None, None


def _cmd_verify_theorem(params: dict):
    n = int(params.get("n", 4))
    d = int(params.get("d", 2))
    alpha = float(params.get("alpha", 0.1))
    p = float(params.get("p", 1.5))
    count = int(params.get("count", 1))
    mode = str(params.get("mode", "exact"))
    _alpha_ok(alpha)
    _require(p >= 1.0, "p", f"must be >= 1; got {p}")
    _require(mode in ("exact", "mc"), "mode", f"must be exact or mc; got {mode}")
    _require(1 <= n <= engine.EXACT_JOINT_MAX_N or mode == "mc", "n",
             f"exact mode needs n <= {engine.EXACT_JOINT_MAX_N}")
    seed = int(params["seed"])
    norm = _norm(params, min(max(p, 1.0), 2.0))
    quad = QuadratureSpec(tol=float(params.get("tolerance", 1e-8)))
    mc = MCSpec(int(params.get("samples", 100_000)), seed) if mode == "mc" else None
    records = []
    for k in range(count):
        f = random_cube_function(n, d, _substream(seed, 100 + k))
        rep = engine.verify_pisier(f, alpha, p, norm, quad, mode, mc)
        rep.params["case"] = k
        rep.params["seed"] = seed
        records.append(rep.to_record("verify-theorem"))
    return records, None, None


def _cmd_verify_corollary(params: dict):
    n = int(params.get("n", 4))
    d = int(params.get("d", 2))
    alpha = float(params.get("alpha", 0.1))
    p = float(params.get("p", 1.5))
    count = int(params.get("count", 1))
    _alpha_ok(alpha)
    _require(1.0 <= p <= 2.0, "p", f"type bound needs p in [1, 2]; got {p}")
    seed = int(params["seed"])
    norm = _norm(params, p)
    records = []
    for k in range(count):
        f = random_cube_function(n, d, _substream(seed, 200 + k))
        rep = engine.verify_poincare(f, alpha, norm, p)
        rep.params["case"] = k
        rep.params["seed"] = seed
        records.append(rep.to_record("verify-corollary"))
    return records, None, None


def _cmd_sharpness_scan(params: dict):
    p = float(params.get("p", 2.0))
    n = int(params.get("n", 8))
    grid = params.get("alpha_grid")
    grid = _floats(grid) if grid else list(np.geomspace(1e-3, 0.4, 25))
    _require(1.0 <= p <= 2.0, "p", f"must lie in [1, 2]; got {p}")
    for a in grid:
        _require(0.0 < a < 0.5, "alpha_grid", f"scan needs alpha in (0, 1/2); got {a}")
    rows = engine.sharpness_scan(p, n, grid)
    records = [
        _mk_record("sharpness-scan", {"alpha": r.alpha, "p": r.p, "n": n},
                   r.lhs, r.rhs, r.ratio, 0.0, r.in_band,
                   f"lhs/alpha^(1/p)={r.alpha_ratio!r}")
        for r in rows
    ]
    csv_rows = [{"alpha": r.alpha, "p": r.p, "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio}
                for r in rows]
    return records, csv_rows, ["alpha", "p", "lhs", "rhs", "ratio"]


def _cmd_extremal_search(params: dict):
    n = int(params.get("n", 3))
    d = int(params.get("d", 3))
    alpha = float(params.get("alpha", 0.1))
    p = float(params.get("p", 1.5))
    budget = int(params.get("budget", 4000))
    _alpha_ok(alpha)
    _require(1.0 <= p <= 2.0, "p", f"must lie in [1, 2]; got {p}")
    _require(1 <= n <= 5 and 1 <= d <= 4, "n", "search is exact-evaluation only: n <= 5, d <= 4")
    seed = int(params["seed"])
    norm = _norm(params, p)
    result = engine.extremal_search(n, d, alpha, p, norm, budget=budget, seed=seed)
    a_eff = engine.effective_alpha(alpha)
    bound = 32.0 * norm.T * a_eff ** (1.0 / p)
    warm = engine.two_point_centered_moment(a_eff, p) if norm.q == p else 0.0
    passed = result.ratio <= bound * (1.0 + 1e-6) and result.ratio >= warm - 1e-9
    rec = _mk_record(
        "extremal-search",
        {"n": n, "d": d, "alpha": alpha, "p": p, "q": norm.q, "T": norm.T,
         "seed": seed, "budget": budget},
        result.ratio, bound, result.ratio / bound, 0.0, passed,
        f"evaluations={result.evaluations} restarts={result.restarts} warm={warm!r}")
    csv_rows = [{"alpha": alpha, "p": p, "lhs": result.ratio, "rhs": bound,
                 "ratio": result.ratio / bound}]
    return [rec], csv_rows, ["alpha", "p", "lhs", "rhs", "ratio"]


def _cmd_poisson_verify(params: dict):
    m_max = int(params.get("m", 3))
    K = int(params.get("K", 12))
    d = int(params.get("d", 2))
    count = int(params.get("count", 50))
    theorem_count = int(params.get("theorem_count", 4))
    samples = int(params.get("samples", 100_000))
    ps = _floats(params.get("p_grid", "1,2"))
    _require(1 <= m_max <= 3, "m", "poisson sweep keeps m <= 3")
    _require(K >= 4, "K", "cutoff too small")
    seed = int(params["seed"])
    quad = QuadratureSpec(panels=int(params.get("panels", 12)))
    records = []
    for k in range(count):
        rng = _substream(seed, 300 + k)
        m = 1 + k % m_max
        p = ps[k % len(ps)]
        f = poisson.random_lattice_function(m, K, d, rng)
        rep = poisson.verify_poincare(f, _norm(params, p), p)
        rep.params["case"] = k
        records.append(rep.to_record("poisson-verify"))
    for k in range(theorem_count):
        rng = _substream(seed, 400 + k)
        m = 1 + k % m_max
        p = ps[k % len(ps)]
        f = poisson.random_lattice_function(m, K, d, rng)
        rep = poisson.verify_pisier(f, p, _norm(params, p), quad, MCSpec(samples, seed + k))
        rep.params["case"] = k
        records.append(rep.to_record("poisson-verify"))
    return records, None, None


def _cmd_binomial_limit(params: dict):
    n_list = _ints(params.get("n_list", "4,16,64,256"))
    ts = _floats(params.get("t_grid", "0.5,1,3"))
    cutoff = int(params.get("cutoff", 40))
    threshold = float(params.get("tv_threshold", 0.02))
    _require(all(n >= 2 for n in n_list), "n_list", "need n >= 2")
    _require(sorted(n_list) == list(n_list), "n_list", "must be increasing")
    records, csv_rows = [], []
    for t in ts:
        rows = poisson.binomial_limit_tv(n_list, t, cutoff)
        prev = None
        for row in rows:
            rhs = prev if prev is not None else 1.0
            records.append(_mk_record(
                "binomial-limit", {"n": row.n, "t": row.t, "cutoff": cutoff},
                row.tv, rhs, row.tv / rhs, row.mass_out, row.tv < rhs,
                "strictly below previous n" if prev is not None else "first n"))
            csv_rows.append({"n": row.n, "t": row.t, "tv_distance": row.tv})
            prev = row.tv
        records.append(_mk_record(
            "binomial-limit", {"n": rows[-1].n, "t": t, "check": "threshold"},
            rows[-1].tv, threshold, rows[-1].tv / threshold, rows[-1].mass_out,
            rows[-1].tv < threshold))
    return records, csv_rows, ["n", "t", "tv_distance"]


def _cmd_scaling_limit(params: dict):
    m = int(params.get("m", 1))
    K = int(params.get("K", 12))
    d = int(params.get("d", 1))
    p = float(params.get("p", 1.0))
    n_list = _ints(params.get("n_list", "4,8,16"))
    shape = str(params.get("f", "indicator"))
    _require(m * max(n_list) <= poisson.MAX_LIFT_BITS, "n_list",
             f"m * n must stay <= {poisson.MAX_LIFT_BITS}")
    seed = int(params["seed"])
    norm = _norm(params, min(max(p, 1.0), 2.0))
    if shape == "indicator":
        _require(m == 1, "f", "builtin indicator table is m = 1")
        f = poisson.indicator_at_zero(K)
    elif shape == "clipped":
        _require(m == 1, "f", "builtin clipped table is m = 1")
        f = poisson.clipped_identity(K)
    elif shape == "random":
        f = poisson.random_lattice_function(m, K, d, _substream(seed, 500))
    else:
        f = io.load_lattice_function(shape)
    mc = MCSpec(int(params.get("samples", 100_000)), seed)
    report = poisson.scaling_limit_report(f, n_list, p, norm, mc=mc)
    records, csv_rows = [], []
    prev_gap = None
    for row in report.rows:
        gap = abs(row.cube_rhs - report.poisson_rhs)
        lhs_gap = abs(row.cube_lhs - report.poisson_lhs)
        ok = prev_gap is None or gap <= prev_gap[0] * (1 + 1e-9)
        ok = ok and (prev_gap is None or lhs_gap <= prev_gap[1] * (1 + 1e-9))
        records.append(_mk_record(
            "scaling-limit", {"n": row.n, "m": f.m, "K": f.K, "p": p, "f": shape},
            gap, prev_gap[0] if prev_gap else gap, lhs_gap, 0.0, ok,
            f"cube_lhs={row.cube_lhs!r} cube_rhs={row.cube_rhs!r} "
            f"poisson_lhs={report.poisson_lhs!r} poisson_rhs={report.poisson_rhs!r} "
            f"plus_portion={row.plus_portion!r} rhs_method={report.rhs_method}"))
        csv_rows.append({"n": row.n, "cube_lhs": row.cube_lhs, "cube_rhs": row.cube_rhs,
                         "poisson_lhs": report.poisson_lhs,
                         "poisson_rhs": report.poisson_rhs,
                         "plus_portion": row.plus_portion})
        prev_gap = (gap, lhs_gap)
    cols = ["n", "cube_lhs", "cube_rhs", "poisson_lhs", "poisson_rhs", "plus_portion"]
    return records, csv_rows, cols


def _cmd_distortion(params: dict):
    manifest = params.get("manifest")
    records, csv_rows = [], []
    cols = ["n", "alpha", "q", "lipschitz", "displacement", "avg_hamming",
            "distortion", "lower_bound"]
    if manifest:
        mode = str(params.get("mode", "exact"))
        mc = None
        if mode == "mc":
            _require(params.get("seed") is not None, "seed", "mc displacement needs a seed")
            mc = MCSpec(int(params.get("samples", 100_000)), int(params["seed"]))
        for entry in io.load_embedding_manifest(manifest):
            f = io.load_cube_function(entry.path)
            norm = NormSpec(entry.q, entry.p, entry.T)
            for alpha in entry.alphas:
                _alpha_ok(alpha)
                rep = dist.average_distortion(f, alpha, norm, mode, mc)
                rep.params["file"] = entry.path.name
                records.append(rep.to_record())
                csv_rows.append({"n": f.n, "alpha": alpha, "q": entry.q,
                                 "lipschitz": rep.lipschitz,
                                 "displacement": rep.avg_displacement,
                                 "avg_hamming": rep.avg_hamming,
                                 "distortion": rep.distortion,
                                 "lower_bound": rep.lower_bound})
        return records, csv_rows, cols
    n_list = _ints(params.get("n_list", "8,32,128,512"))
    q = float(params.get("q", 2.0))
    scale = float(params.get("alpha_scale", 1.0))
    fixed = params.get("alpha")
    for n in n_list:
        alpha = float(fixed) if fixed is not None else scale / n
        _alpha_ok(alpha)
        rep = dist.identity_embedding_report(n, alpha, q)
        records.append(rep.to_record())
        csv_rows.append({"n": n, "alpha": alpha, "q": q, "lipschitz": rep.lipschitz,
                         "displacement": rep.avg_displacement,
                         "avg_hamming": rep.avg_hamming,
                         "distortion": rep.distortion, "lower_bound": rep.lower_bound})
    return records, csv_rows, cols


def _cmd_quadrature_selftest(params: dict):
    tol = float(params.get("tolerance", 1e-8))
    alpha = float(params.get("alpha", 0.1))
    _alpha_ok(alpha)
    ps = _floats(params.get("p_grid", "1,1.5,2"))
    records = []
    for p in ps:
        res = integrate_time(score_envelope_integrand(alpha, p), QuadratureSpec(tol=tol))
        want = score_envelope_integral(alpha, p)
        records.append(_mk_record(
            "quadrature-selftest", {"integral": "score_envelope", "alpha": alpha, "p": p},
            res.value, want, res.value / want, res.error, abs(res.value - want) <= tol,
            f"intervals={res.intervals}"))
    tol_sqrt = min(tol, 1e-10)
    res = integrate_time(sqrt_kernel_integrand, QuadratureSpec(tol=tol_sqrt))
    records.append(_mk_record(
        "quadrature-selftest", {"integral": "sqrt_kernel"},
        res.value, 2.0, res.value / 2.0, res.error, abs(res.value - 2.0) <= tol_sqrt,
        f"intervals={res.intervals}"))
    return records, None, None


HANDLERS = {
    "verify-identities": _cmd_verify_identities,
    "verify-delta-bound": _cmd_verify_delta_bound,
    "verify-theorem": _cmd_verify_theorem,
    "verify-corollary": _cmd_verify_corollary,
    "sharpness-scan": _cmd_sharpness_scan,
    "extremal-search": _cmd_extremal_search,
    "poisson-verify": _cmd_poisson_verify,
    "binomial-limit": _cmd_binomial_limit,
    "scaling-limit": _cmd_scaling_limit,
    "distortion": _cmd_distortion,
    "quadrature-selftest": _cmd_quadrature_selftest,
}

_COMMAND_FLAGS = {
    "verify-identities": ["n", "d", "count", "alpha-grid", "t-grid"],
    "verify-delta-bound": ["alpha-grid", "t-grid", "p-grid"],
    "verify-theorem": ["n", "d", "alpha", "p", "q", "T", "count", "mode"],
    "verify-corollary": ["n", "d", "alpha", "p", "q", "T", "count"],
    "sharpness-scan": ["p", "n", "alpha-grid"],
    "extremal-search": ["n", "d", "alpha", "p", "q", "T", "budget"],
    "poisson-verify": ["m", "K", "d", "p-grid", "q", "T", "count", "theorem-count", "panels"],
    "binomial-limit": ["n-list", "t-grid", "cutoff", "tv-threshold"],
    "scaling-limit": ["m", "K", "d", "p", "q", "T", "n-list", "f", "panels"],
    "distortion": ["manifest", "n-list", "q", "alpha", "alpha-scale", "mode"],
    "quadrature-selftest": ["alpha", "p-grid"],
}


def parse_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; values stay strings."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("config", f"line {lineno} is not key = value: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biascube", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for name, flags in _COMMAND_FLAGS.items():
        sp = sub.add_parser(name)
        for flag in ["config", "seed", "out", "csv", "tolerance", "samples"] + flags:
            sp.add_argument(f"--{flag}", default=argparse.SUPPRESS,
                            dest=flag.replace("-", "_"))
    parser.add_argument("--config", default=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    given = dict(vars(ns))
    command = given.pop("command", None)
    try:
        config = parse_config_file(given["config"]) if "config" in given else {}
        command = command or config.pop("command", None)
        if command not in HANDLERS:
            raise UsageError("command", f"unknown or missing command {command!r}")
        params = dict(config)
        params.update({k: v for k, v in given.items() if k != "config"})
        if command in SEED_REQUIRED and params.get("seed") is None:
            raise UsageError("seed", "this command samples; --seed is mandatory")
        try:
            records, csv_rows, csv_cols = HANDLERS[command](params)
        except (ValueError, IndexError) as exc:
            raise UsageError("params", str(exc)) from exc
    except UsageError as exc:
        print(f"error: invalid {exc.field}: {exc}", file=sys.stderr)
        return 2
    out = params.get("out")
    with (open(out, "w") if out else nullcontext(sys.stdout)) as stream:
        dump_jsonl([header_record(command, params)], stream)
        dump_jsonl(records, stream)
    if params.get("csv") and csv_rows is not None:
        write_csv(csv_rows, csv_cols, params["csv"])
    failures = [r for r in records if not r["pass"]]
    if failures:
        first = failures[0]
        print(f"contract violation in {first['command']} params={first['params']}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
