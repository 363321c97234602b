"""Empirical and exact wavelet coefficients, sparse by construction.

Empirical coefficients at level l are sample means of 2^{l/2} phi(2^l X - k)
(resp. psi); each observation touches at most B2 - B1 translates, so tables
are keyed by the integers actually hit.  Exact coefficients integrate a grid
density against the dilated basis tables.
"""

from __future__ import annotations

import csv as _csv
import math
from dataclasses import dataclass, field

import numpy as np

from waveden.basis import (
    DEFAULT_RESOLUTION,
    WaveletFamily,
    phi_at,
    psi_at,
    snap_dyadic,
    tabulate_phi,
    tabulate_psi,
)
from waveden.kernel import level_inner_products


class SampleParseError(ValueError):
    """Malformed sample input; carries the offending line number."""

    def __init__(self, path, line_no, detail):
        super().__init__(f"{path}:{line_no}: {detail}")
        self.line_no = line_no


@dataclass(frozen=True)
class Sample:
    """Sorted i.i.d. observations with a provenance tag."""

    observations: np.ndarray
    seed_provenance: str = ""

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim != 1 or len(obs) < 1:
            raise ValueError("sample must be a nonempty 1-d array")
        if np.any(np.diff(obs) < 0):
            obs = np.sort(obs)
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return len(self.observations)


def read_sample(path: str, csv_column=None) -> Sample:
    """Read observations from text (one decimal per line, # comments) or CSV."""
    values = []
    if csv_column is None:
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                text = raw.split("#", 1)[0].strip()
                if not text:
                    continue
                try:
                    values.append(float(text))
                except ValueError:
                    raise SampleParseError(path, line_no, f"not a decimal literal: {text!r}") from None
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(_csv.reader(fh))
        if not rows:
            raise SampleParseError(path, 1, "empty CSV file")
        col = csv_column
        start = 0
        if isinstance(col, str):
            try:
                col = rows[0].index(csv_column)
            except ValueError:
                raise SampleParseError(path, 1, f"no column named {csv_column!r}") from None
            start = 1
        for line_no, row in enumerate(rows[start:], start=start + 1):
            if not row:
                continue
            try:
                values.append(float(row[col]))
            except (ValueError, IndexError):
                raise SampleParseError(path, line_no, f"bad value in column {csv_column!r}") from None
    if not values:
        raise SampleParseError(path, 1, "no observations found")
    return Sample(np.asarray(values), seed_provenance=f"file:{path}")


@dataclass(frozen=True)
class CoefficientSet:
    """Sparse alpha (level j0) and beta (levels j0 <= l < j1) tables."""

    family: WaveletFamily
    j0: int
    j1: int
    alpha: dict
    beta: dict  # keyed by (level, k)
    kind: str  # "empirical" | "exact"
    n: int = 0  # sample size for empirical sets

    def __post_init__(self):
        if self.kind not in ("empirical", "exact"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        for (l, _k) in self.beta:
            if not self.j0 <= l < self.j1:
                raise ValueError(f"beta level {l} outside [{self.j0}, {self.j1})")
        if self.kind == "empirical" and self.n > 0:
            if len(self.alpha) > self.n * (self.family.width + 1):
                raise ValueError("alpha sparsity bound violated")

    def beta_level(self, l: int) -> dict:
        return {k: v for (ll, k), v in self.beta.items() if ll == l}


def _empirical_level(xs, family, level, base, R):
    """Sample-mean coefficients of 2^{level/2} base(2^level x - k)."""
    if base == "phi":
        b1, b2 = family.support_phi
        evalf = phi_at
    else:
        b1, b2 = family.support_psi
        evalf = psi_at
    v = np.asarray(xs, dtype=float) * float(1 << level)
    if not family.is_haar:
        v = snap_dyadic(v, R)
    k0 = np.ceil(v - b2).astype(np.int64)
    kmin = int(k0.min())
    width = b2 - b1
    dense = np.zeros(int(k0.max()) - kmin + width)
    for d in range(width):
        k = k0 + d
        np.add.at(dense, k - kmin, evalf(family, v - k, R))
    dense *= 2.0 ** (level / 2.0) / len(v)
    nz = np.nonzero(dense)[0]
    return {int(kmin + i): float(dense[i]) for i in nz}


def empirical_alpha(sample: Sample, family: WaveletFamily, j0: int,
                    R: int = DEFAULT_RESOLUTION) -> dict:
    """alpha-hat_k at level j0: mean of 2^{j0/2} phi(2^{j0} X - k)."""
    if j0 < 0:
        raise ValueError("level must be >= 0")
    return _empirical_level(sample.observations, family, j0, "phi", R)


def empirical_beta(sample: Sample, family: WaveletFamily, l: int,
                   R: int = DEFAULT_RESOLUTION) -> dict:
    """beta-hat_{lk}: mean of 2^{l/2} psi(2^l X - k)."""
    if l < 0:
        raise ValueError("level must be >= 0")
    return _empirical_level(sample.observations, family, l, "psi", R)


def empirical_coefficient_set(sample: Sample, family: WaveletFamily, j0: int, j1: int,
                              R: int = DEFAULT_RESOLUTION) -> CoefficientSet:
    alpha = empirical_alpha(sample, family, j0, R)
    beta = {}
    for l in range(j0, j1):
        for k, v in empirical_beta(sample, family, l, R).items():
            beta[(l, k)] = v
    return CoefficientSet(family, j0, j1, alpha, beta, "empirical", n=sample.n)


def _exact_level(density, family, level, base, R):
    table = tabulate_phi(family, R) if base == "phi" else tabulate_psi(family, R)
    grid = density.grid
    o = round(grid.origin * (1 << R))
    q = grid.values * grid.spacing
    keys, vals = level_inner_products(q, table, level, R, o)
    vals = vals * 2.0 ** (level / 2.0)
    nz = np.abs(vals) > 0.0
    return {int(k): float(v) for k, v in zip(keys[nz], vals[nz])}


def exact_coefficients(density, family: WaveletFamily, j0: int, j1: int) -> CoefficientSet:
    """Quadrature coefficients alpha_k(p0) at j0 and beta_lk(p0), j0 <= l < j1."""
    R = density.grid.resolution
    if R < j1 + 4:
        raise ValueError(f"density resolution {R} too coarse for top level {j1} (need >= j1 + 4)")
    alpha = _exact_level(density, family, j0, "phi", R)
    beta = {}
    for l in range(j0, j1):
        for k, v in _exact_level(density, family, l, "psi", R).items():
            beta[(l, k)] = v
    cs = CoefficientSet(family, j0, j1, alpha, beta, "exact")
    # Parseval sanity: projection energy cannot exceed the density's L2 mass
    energy = sum(v * v for v in alpha.values()) + sum(v * v for v in beta.values())
    l2 = float(np.sum(density.grid.values[1:] ** 2)) * density.grid.spacing
    if energy > l2 + 1e-6 + 0.01 * l2:
        raise ValueError(f"Parseval violation: coefficient energy {energy} > density L2 {l2}")
    return cs


def exact_alpha(density, family: WaveletFamily, level: int) -> dict:
    return _exact_level(density, family, level, "phi", density.grid.resolution)


def exact_beta(density, family: WaveletFamily, level: int) -> dict:
    return _exact_level(density, family, level, "psi", density.grid.resolution)


def _sup_diff(emp: dict, exact: dict) -> float:
    keys = set(emp) | set(exact)
    if not keys:
        return 0.0
    return max(abs(emp.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def deviation_stats(sample: Sample, density, family: WaveletFamily, levels,
                    R: int = DEFAULT_RESOLUTION) -> list:
    """Per-level sup_k |alpha-hat - alpha| and sup_k |beta-hat - beta|."""
    records = []
    for l in levels:
        rec = {
            "level": l,
            "sup_alpha_dev": _sup_diff(
                _empirical_level(sample.observations, family, l, "phi", R),
                _exact_level(density, family, l, "phi", density.grid.resolution),
            ),
            "sup_beta_dev": _sup_diff(
                _empirical_level(sample.observations, family, l, "psi", R),
                _exact_level(density, family, l, "psi", density.grid.resolution),
            ),
        }
        records.append(rec)
    return records


def merge_coefficient_tables(tables, weights=None) -> dict:
    """Weighted merge of sparse tables, deterministic by sorted key order."""
    if weights is None:
        weights = [1.0] * len(tables)
    keys = sorted(set().union(*tables))
    out = {}
    for k in keys:
        out[k] = math.fsum(w * t.get(k, 0.0) for t, w in zip(tables, weights))
    return out
