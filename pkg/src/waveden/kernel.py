"""The wavelet projection kernel K(y, x), its dyadic rescalings and bounds.

K(y, x) = sum_k phi(y - k) phi(x - k) is the kernel of the orthogonal
projection onto the base multiresolution space; K_j(y, x) = 2^j K(2^j y,
2^j x) projects onto the level-j space.  The module also computes the
periodic normalizer sum_k phi^2(y - k) together with its extreme values
(D1, D2), and projects grid densities (the analytic mean of the linear
estimator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from waveden.basis import (
    DEFAULT_RESOLUTION,
    DyadicTable,
    WaveletFamily,
    phi_at,
    snap_dyadic,
    tabulate_phi,
    table_integral,
)


class DegenerateFamilyError(ValueError):
    """The normalizer sum_k phi^2(y - k) degenerates to ~0 somewhere."""


class ResolutionError(ValueError):
    """Grid resolution too coarse for the requested level."""


@dataclass(frozen=True)
class KernelContext:
    """Immutable bundle of the tables and constants behind K."""

    family: WaveletFamily
    R: int
    phi_table: DyadicTable
    norm_sq_table: DyadicTable
    D1: float
    D2: float


@lru_cache(maxsize=None)
def make_kernel_context(family: WaveletFamily, R: int = DEFAULT_RESOLUTION) -> KernelContext:
    phi = tabulate_phi(family, R)
    step = 1 << R
    norm_sq = np.zeros(step + 1)
    for m in range(family.width):
        norm_sq[:step] += phi.values[m * step : m * step + step] ** 2
    norm_sq[0] += phi.values[-1] ** 2  # translate hitting the right support edge
    norm_sq[step] = norm_sq[0]  # close the period
    table = DyadicTable(R, 0.0, norm_sq, "generic")
    d1 = math.sqrt(float(norm_sq.min()))
    d2 = math.sqrt(float(norm_sq.max()))
    if d1 <= 1e-8:
        raise DegenerateFamilyError(f"{family.name}: min of sum_k phi^2(y-k) is ~0")
    return KernelContext(family, R, phi, table, d1, d2)


def compute_D_bounds(ctx: KernelContext):
    """(D1, D2): min/max over a period of sqrt(sum_k phi^2(y - k))."""
    return ctx.D1, ctx.D2


def norm_squared(ctx: KernelContext, y):
    """sum_k phi^2(y - k), looked up on the one-period table."""
    y = np.asarray(y, dtype=float)
    frac = y - np.floor(y)
    idx = np.rint(frac * (1 << ctx.R)).astype(np.int64)
    out = ctx.norm_sq_table.values[idx]
    return out if out.ndim else float(out)


def kernel_K(ctx: KernelContext, y, x):
    """K(y, x) = sum_k phi(y - k) phi(x - k); zero when |y - x| > B2 - B1."""
    fam = ctx.family
    b1, b2 = fam.support_phi
    y = snap_dyadic(y, ctx.R) if not fam.is_haar else np.asarray(y, dtype=float)
    x = snap_dyadic(x, ctx.R) if not fam.is_haar else np.asarray(x, dtype=float)
    y, x = np.broadcast_arrays(y, x)
    out = np.zeros(y.shape)
    k0 = np.ceil(y - b2)
    for d in range(fam.width):
        k = k0 + d
        out += phi_at(fam, y - k, ctx.R) * phi_at(fam, x - k, ctx.R)
    return out if out.ndim else float(out)


def kernel_Kj(ctx: KernelContext, j: int, y, x):
    """K_j(y, x) = 2^j K(2^j y, 2^j x)."""
    if j < 0:
        raise ValueError("level j must be >= 0")
    return (1 << j) * kernel_K(ctx, np.asarray(y, dtype=float) * (1 << j),
                               np.asarray(x, dtype=float) * (1 << j))


# ---------------------------------------------------------------------------
# windowed inner products against dilated basis tables
#
# For a grid function q on x_m = (o + m) 2^-R and a basis table b (origin A1,
# resolution R), the inner products a_k = sum_m q_m b(2^j x_m - k) reduce to
# dot products of q-windows with the stride-2^j downsample of b, because the
# basis-table index of 2^j x_m - k is (o + m) 2^j - (k + A1) 2^R, an exact
# integer for j <= R.


def _window_geometry(q_len, basis_table, j, R, origin_ticks):
    step = 1 << j
    b_down = basis_table.values[::step]
    ld = len(b_down)
    a1 = round(basis_table.origin)
    shift = 1 << (R - j)
    # m0(k) = (k + A1) 2^{R-j} - origin_ticks, valid window m in [m0, m0+ld-1]
    k_lo = math.floor((origin_ticks) / shift) - a1 - (ld - 1) // shift - 1
    k_hi = math.ceil((origin_ticks + q_len - 1) / shift) - a1 + 1
    return b_down, ld, a1, shift, k_lo, k_hi


def level_inner_products(q, basis_table, j, R, origin_ticks):
    """a_k = sum_m q[m] * b(2^j x_m - k) for all k with a nonempty window.

    Returns (keys, values) as aligned arrays; keys are consecutive ints.
    """
    if R < j:
        raise ResolutionError(f"grid resolution {R} below level {j}")
    q = np.asarray(q, dtype=float)
    b_down, ld, a1, shift, k_lo, k_hi = _window_geometry(len(q), basis_table, j, R, origin_ticks)
    keys, vals = [], []
    for k in range(k_lo, k_hi + 1):
        m0 = (k + a1) * shift - origin_ticks
        s = max(0, m0)
        e = min(len(q), m0 + ld)
        if s >= e:
            continue
        keys.append(k)
        vals.append(float(np.dot(q[s:e], b_down[s - m0 : e - m0])))
    return np.asarray(keys, dtype=np.int64), np.asarray(vals)


def level_expansion(keys, coeffs, basis_table, j, R, origin_ticks, out):
    """out[m] += sum_k coeffs[k] * b(2^j x_m - k), in place."""
    if R < j:
        raise ResolutionError(f"grid resolution {R} below level {j}")
    b_down, ld, a1, shift, _, _ = _window_geometry(len(out), basis_table, j, R, origin_ticks)
    for k, c in zip(keys, coeffs):
        if c == 0.0:
            continue
        m0 = (int(k) + a1) * shift - origin_ticks
        s = max(0, m0)
        e = min(len(out), m0 + ld)
        if s >= e:
            continue
        out[s:e] += c * b_down[s - m0 : e - m0]
    return out


def project_function(ctx: KernelContext, j: int, table: DyadicTable) -> DyadicTable:
    """K_j(f) on f's own grid: quadrature of K_j(y, .) against the table."""
    R = table.resolution
    if R != ctx.R:
        raise ResolutionError(f"context resolution {ctx.R} != table resolution {R}")
    if R - j < 4:
        raise ResolutionError(f"grid spacing 2^-{R} too coarse for level {j} (need R >= j + 4)")
    o = round(table.origin * (1 << R))
    q = table.values * table.spacing
    keys, a = level_inner_products(q, ctx.phi_table, j, R, o)
    out = np.zeros(len(table.values))
    level_expansion(keys, (1 << j) * a, ctx.phi_table, j, R, o, out)
    return DyadicTable(R, table.origin, out, "density")


def project_density(ctx: KernelContext, j: int, density_table: DyadicTable) -> DyadicTable:
    """E p_n = K_j(p_0) for a nonnegative unit-mass grid density."""
    v = density_table.values
    if np.any(v < 0):
        raise ValueError("density table has negative values")
    mass = table_integral(v, density_table.spacing)
    if abs(mass - 1.0) > 1e-4:
        raise ValueError(f"density mass {mass} deviates from 1 by more than 1e-4")
    return project_function(ctx, j, density_table)
