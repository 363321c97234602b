"""Test densities with known sup-norms, smoothness and samplers.

Two constructions: truncated Gaussian mixtures (smooth reference densities)
and wavelet-synthesized densities whose detail coefficients decay exactly
like 2^{-l(t+1/2)}, so their Besov regularity is t by design.  Densities
live on dyadic grids; sampling is inverse-CDF on the grid and is
deterministic given a seed.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from waveden.basis import (
    DEFAULT_RESOLUTION,
    DyadicTable,
    WaveletFamily,
    table_integral,
    tabulate_phi,
    tabulate_psi,
)
from waveden.kernel import level_expansion, level_inner_products, make_kernel_context, project_density
from waveden.coefficients import Sample


class ConstructionError(ValueError):
    """Density construction cannot satisfy its positivity budget."""


@dataclass(frozen=True)
class DensityModel:
    """A grid density with its CDF, sup-norm and smoothness metadata."""

    grid: DyadicTable
    cdf_grid: DyadicTable
    support: tuple
    sup_norm: float
    smoothness_t: float | None
    description: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = self.grid.values
        if np.any(v < 0):
            raise ValueError("density values must be nonnegative")
        mass = table_integral(v, self.grid.spacing)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"density mass {mass} deviates from 1 beyond 1e-6")
        c = self.cdf_grid.values
        if np.any(np.diff(c) < -1e-12) or abs(c[0]) > 1e-12 or abs(c[-1] - 1.0) > 1e-9:
            raise ValueError("cdf grid must be nondecreasing from 0 to 1")

    def pdf(self, x):
        return self.grid.at(x)

    def cdf(self, x):
        return np.interp(x, self.cdf_grid.abscissae(), self.cdf_grid.values)


def _finalize(values, R, origin, smoothness_t, description, meta):
    values = np.maximum(values, 0.0)
    h = 2.0 ** -R
    mass = table_integral(values, h)
    values = values / mass
    cdf = np.concatenate(([0.0], np.cumsum(values[1:]) * h))
    cdf /= cdf[-1]
    grid = DyadicTable(R, origin, values, "density")
    cdf_grid = DyadicTable(R, origin, cdf, "cdf")
    support = grid.support
    return DensityModel(
        grid=grid,
        cdf_grid=cdf_grid,
        support=support,
        sup_norm=float(values.max()),
        smoothness_t=smoothness_t,
        description=description,
        meta=meta,
    )


def make_gaussian_mixture(components, truncation_radius: float = 8.0,
                          R: int = DEFAULT_RESOLUTION) -> DensityModel:
    """Truncated, renormalized Gaussian mixture on a dyadic grid.

    components: sequence of (weight, mean, stddev) with positive weights
    summing to 1 and positive stddevs.
    """
    comps = [(float(w), float(m), float(s)) for w, m, s in components]
    wsum = sum(w for w, _, _ in comps)
    if abs(wsum - 1.0) > 1e-9 or any(w <= 0 for w, _, _ in comps):
        raise ValueError("weights must be positive and sum to 1")
    if any(s <= 0 for _, _, s in comps):
        raise ValueError("stddevs must be positive")
    lo = math.floor(min(m - truncation_radius * s for _, m, s in comps))
    hi = math.ceil(max(m + truncation_radius * s for _, m, s in comps))
    xs = lo + np.arange((hi - lo) * (1 << R) + 1) * 2.0 ** -R
    values = np.zeros_like(xs)
    for w, m, s in comps:
        values += w / (s * math.sqrt(2 * math.pi)) * np.exp(-0.5 * ((xs - m) / s) ** 2)
    desc = "gaussian mixture " + ", ".join(f"({w}, {m}, {s})" for w, m, s in comps)
    return _finalize(values, R, float(lo), math.inf, desc,
                     {"kind": "gaussian_mixture", "components": comps,
                      "truncation_radius": truncation_radius})


def make_besov_density(t: float, seed: int, family: WaveletFamily,
                       R: int = DEFAULT_RESOLUTION,
                       base_components=((1.0, 0.0, 1.0),),
                       truncation_radius: float = 8.0,
                       core=(-1.0, 1.0),
                       levels=(3, 13),
                       amplitude: float | None = None) -> DensityModel:
    """Smooth base plus seeded detail perturbations decaying like 2^{-l(t+1/2)}.

    The perturbation sum_{l,k} eps 2^{-l(t+1/2)} xi_{lk} psi_{lk} uses signs
    xi_{lk} drawn from the seed and keys k whose supports lie inside `core`.
    eps is sized so the perturbation stays below half the base minimum on
    the core, keeping the density positive; psi terms leave the total mass
    unchanged.
    """
    if family.regularity_T + 1 <= t:
        raise ValueError(f"t={t} needs family regularity T >= t (T={family.regularity_T})")
    if t <= 0:
        raise ValueError("t must be positive")
    base = make_gaussian_mixture(base_components, truncation_radius, R)
    l0, l1 = levels
    if l1 > R - 1:
        raise ValueError(f"top perturbation level {l1 - 1} too fine for resolution {R}")
    psi = tabulate_psi(family, R)
    b1, b2 = family.support_psi
    width = b2 - b1
    xs0, xs1 = core
    envelope = width * max(abs(float(np.min(psi.values))), float(np.max(psi.values)))
    decay_sum = sum(2.0 ** (-l * t) for l in range(l0, l1))
    core_lo = int(np.searchsorted(base.grid.abscissae(), xs0))
    core_hi = int(np.searchsorted(base.grid.abscissae(), xs1))
    base_min_core = float(base.grid.values[core_lo : core_hi + 1].min())
    eps_cap = 0.5 * base_min_core / (envelope * decay_sum)
    eps = eps_cap if amplitude is None else float(amplitude)
    if eps <= 1e-12:
        raise ConstructionError("perturbation amplitude underflow: base too small on the core")
    if eps > eps_cap + 1e-12:
        raise ConstructionError(
            f"amplitude {eps} exceeds the positivity budget {eps_cap:.6g}")

    rng = np.random.default_rng(seed)
    values = base.grid.values.copy()
    o = round(base.grid.origin * (1 << R))
    perturbed = {}
    for l in range(l0, l1):
        # keys whose psi_{lk} support [(b1+k)/2^l, (b2+k)/2^l] sits inside the core
        k_lo = math.ceil(xs0 * (1 << l) - b1)
        k_hi = math.floor(xs1 * (1 << l) - b2)
        if k_hi < k_lo:
            continue
        ks = np.arange(k_lo, k_hi + 1)
        signs = rng.integers(0, 2, size=len(ks)) * 2 - 1
        scale = eps * 2.0 ** (-l * (t + 0.5)) * 2.0 ** (l / 2.0)
        level_expansion(ks, signs * scale, psi, l, R, o, values)
        perturbed[l] = [int(k) for k in ks]
    if not perturbed:
        raise ConstructionError("no perturbation keys fit inside the core")
    if float(values.min()) < 0.0:
        raise ConstructionError("positivity budget violated after synthesis")
    desc = f"besov t={t} over {family.name} base on {base.support}"
    meta = {
        "kind": "besov",
        "t": t,
        "seed": seed,
        "family": family.name,
        "epsilon": eps,
        "levels": [l0, l1],
        "core": [xs0, xs1],
        "base_components": [list(c) for c in base.meta["components"]],
        "perturbed_levels": sorted(perturbed),
    }
    return _finalize(values, R, base.grid.origin, t, desc, meta)


# ---------------------------------------------------------------------------
# Besov norms from wavelet coefficients


def _seq_norm(values, p):
    if len(values) == 0:
        return 0.0
    a = np.abs(np.asarray(values, dtype=float))
    if math.isinf(p):
        return float(a.max())
    return float((a ** p).sum() ** (1.0 / p))


def besov_level_norms(table: DyadicTable, family: WaveletFamily, p: float, L_max: int):
    """(alpha-norm, [beta level norms for l = 0..L_max]) by grid quadrature."""
    R = table.resolution
    o = round(table.origin * (1 << R))
    q = table.values * table.spacing
    _, a = level_inner_products(q, tabulate_phi(family, R), 0, R, o)
    psi = tabulate_psi(family, R)
    levels = []
    for l in range(0, L_max + 1):
        _, b = level_inner_products(q, psi, l, R, o)
        levels.append(_seq_norm(b * 2.0 ** (l / 2.0), p))
    return _seq_norm(a, p), levels


def besov_norm(target, family: WaveletFamily, s: float, p: float, q: float,
               L_max: int = 12) -> float:
    """Wavelet-coefficient Besov norm, truncated at L_max with a tail bound.

    Returns inf when the level sequence shows no decay at this smoothness
    (norm divergent within the truncation).
    """
    table = target.grid if isinstance(target, DensityModel) else target
    if L_max > table.resolution - 1:
        raise ValueError("L_max too fine for the table resolution")
    alpha_norm, levels = besov_level_norms(table, family, p, L_max)
    b = np.array([2.0 ** (l * (s + 0.5 - 1.0 / p)) * levels[l] for l in range(L_max + 1)])
    floor = 1e-13 * max(1.0, b.max(initial=0.0))
    live = b > floor
    ratio = None
    if live[-3:].all() and b[-2] > 0 and b[-3] > 0:
        ratio = max(b[-1] / b[-2], b[-2] / b[-3])
    if ratio is not None and ratio >= 1.0:
        return math.inf
    if math.isinf(q):
        detail = float(b.max(initial=0.0))  # decaying tail cannot raise the sup
    else:
        tail = 0.0
        if ratio is not None and 0.0 < ratio < 1.0:
            tail = (b[-1] * ratio) ** q / (1.0 - ratio ** q)
        detail = float((np.sum(b ** q) + tail) ** (1.0 / q))
    return alpha_norm + detail


# ---------------------------------------------------------------------------
# sampling and bias


def sample_density(density: DensityModel, n: int, seed: int) -> Sample:
    """Inverse-CDF sample on the grid; deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    xs = np.interp(u, density.cdf_grid.values, density.cdf_grid.abscissae())
    return Sample(np.sort(xs), seed_provenance=f"seed={seed}")


def bias_curve(density: DensityModel, family: WaveletFamily, j_range) -> dict:
    """sup-norm of K_j(p0) - p0 per level j, with the log2 regression slope."""
    t = density.smoothness_t
    if t is not None and math.isfinite(t) and family.regularity_T + 1 <= t:
        raise ValueError("family regularity too low for the density smoothness")
    ctx = make_kernel_context(family, density.grid.resolution)
    records = []
    for j in j_range:
        proj = project_density(ctx, j, density.grid)
        dev = float(np.max(np.abs(proj.values - density.grid.values)))
        records.append({"j": int(j), "sup_dev": dev})
    js = np.array([r["j"] for r in records], dtype=float)
    logs = np.log2([max(r["sup_dev"], 1e-300) for r in records])
    slope = float(np.polyfit(js, logs, 1)[0]) if len(records) > 1 else math.nan
    return {"records": records, "slope": slope}


# ---------------------------------------------------------------------------
# CSV round trip


def export_density_csv(density: DensityModel, path: str) -> None:
    header = {
        "resolution": density.grid.resolution,
        "support": list(density.support),
        "sup_norm": density.sup_norm,
        "smoothness_t": None if density.smoothness_t is None else (
            "inf" if math.isinf(density.smoothness_t) else density.smoothness_t),
        "description": density.description,
        "meta": density.meta,
    }
    tmp_fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(tmp_fd, "w") as fh:
            fh.write("# waveden-density " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("abscissa,value\n")
            for x, v in zip(density.grid.abscissae(), density.grid.values):
                fh.write(f"{x!r},{v!r}\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def import_density_csv(path: str) -> DensityModel:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline().lstrip("# ").removeprefix("waveden-density "))
        fh.readline()
        values = np.array([float(line.split(",")[1]) for line in fh if line.strip()])
    R = header["resolution"]
    origin = header["support"][0]
    t = header["smoothness_t"]
    t = math.inf if t == "inf" else t
    return _finalize(values, R, origin, t, header["description"], header.get("meta", {}))
