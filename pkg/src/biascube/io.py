"""Line-oriented table formats and the embedding corpus manifest.

Cube tables: header "n d", then 2^n rows of d decimals, row index = bitmask.
Lattice tables: header "m K d", then K^m rows, row index = C-order ravel.
Values are parsed as binary64; writing uses shortest round-tripping decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from biascube.cube import CubeFunction
from biascube.poisson import LatticeFunction


def _read_table(lines, header_len: int, what: str):
    if not lines:
        raise ValueError(f"empty {what} file")
    header = lines[0].split()
    if len(header) != header_len:
        raise ValueError(f"{what} header must have {header_len} integers, got {lines[0]!r}")
    try:
        head = [int(tok) for tok in header]
    except ValueError as exc:
        raise ValueError(f"bad {what} header {lines[0]!r}") from exc
    return head


def save_cube_function(f: CubeFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{f.n} {f.d}\n")
        for row in f.values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_cube_function(path) -> CubeFunction:
    lines = Path(path).read_text().splitlines()
    n, d = _read_table(lines, 2, "cube function")
    rows = lines[1:]
    if len(rows) != (1 << n):
        raise ValueError(f"expected {1 << n} rows, found {len(rows)}")
    values = np.array([[float(tok) for tok in row.split()] for row in rows])
    if values.shape[1] != d:
        raise ValueError(f"rows carry {values.shape[1]} values, header says d={d}")
    return CubeFunction(values, n)


def save_lattice_function(f: LatticeFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{f.m} {f.K} {f.d}\n")
        for row in f.values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_lattice_function(path) -> LatticeFunction:
    lines = Path(path).read_text().splitlines()
    m, K, d = _read_table(lines, 3, "lattice function")
    rows = lines[1:]
    if len(rows) != K**m:
        raise ValueError(f"expected {K**m} rows, found {len(rows)}")
    values = np.array([[float(tok) for tok in row.split()] for row in rows])
    if values.shape[1] != d:
        raise ValueError(f"rows carry {values.shape[1]} values, header says d={d}")
    return LatticeFunction(values, m, K)


@dataclass
class ManifestEntry:
    path: Path
    q: float
    p: float
    T: float
    alphas: list[float]


def load_embedding_manifest(path) -> list[ManifestEntry]:
    """JSON manifest of embedding files: [{file, q, p, T, alphas}, ...]."""
    path = Path(path)
    data = json.loads(path.read_text())
    entries = data["entries"] if isinstance(data, dict) else data
    out = []
    for e in entries:
        out.append(ManifestEntry(
            path=path.parent / e["file"],
            q=float(e["q"]),
            p=float(e["p"]),
            T=float(e.get("T", 1.0)),
            alphas=[float(a) for a in e["alphas"]],
        ))
    return out
