"""Compactly supported orthonormal wavelets tabulated on dyadic grids.

Two families are supported: the Haar pair, which is exact on any dyadic
grid, and the extremal-phase Daubechies family dbK (K >= 2), whose
refinement filter is computed at build time by spectral factorization and
whose scaling function is obtained by cascade iteration.  No filter
constants are hard-coded; everything is validated against the filter
identities at construction.

All tables live on grids of spacing 2**-R with dyadic origins, so integer
translates and dyadic dilations map grid points to grid points exactly.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_RESOLUTION = 14
FILTER_TOL = 1e-12
CASCADE_TOL = 1e-10
CASCADE_MAX_ITER = 60
MAX_DB_ORDER = 10

SQRT2 = math.sqrt(2.0)


class UnsupportedFamilyError(ValueError):
    """Unknown wavelet family name."""


class NumericalFailureError(RuntimeError):
    """A numerical construction (filter or cascade) failed to converge."""


class TableTagError(ValueError):
    """Operation applied to a table with the wrong function tag."""


@dataclass(frozen=True)
class WaveletFamily:
    """A compactly supported father/mother wavelet pair.

    ``filter`` holds the refinement coefficients h_0..h_{N-1} of the
    father wavelet, normalized so that sum h_k = sqrt(2).  ``support_phi``
    and ``support_psi`` are integer intervals (B1, B2); the father wavelet
    vanishes outside (B1, B2].  ``regularity_T`` is the largest S for
    which the pair has S+1 vanishing moments (S = 0 for Haar).
    """

    name: str
    filter: tuple
    support_phi: tuple
    support_psi: tuple
    regularity_T: int
    vanishing_moments: int

    @property
    def width(self) -> int:
        return self.support_phi[1] - self.support_phi[0]

    @property
    def is_haar(self) -> bool:
        return self.name == "haar"


@dataclass(frozen=True)
class DyadicTable:
    """Values of a function at origin + m * 2**-R, m = 0..len-1.

    The origin must be a dyadic rational representable at resolution R.
    Values are read-only after construction.
    """

    resolution: int
    origin: float
    values: np.ndarray
    function_tag: str = "generic"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        ticks = self.origin * (1 << self.resolution)
        if abs(ticks - round(ticks)) > 1e-9:
            raise ValueError(f"origin {self.origin} is not dyadic at resolution {self.resolution}")

    @property
    def spacing(self) -> float:
        return 2.0 ** -self.resolution

    @property
    def support(self) -> tuple:
        return (self.origin, self.origin + (len(self.values) - 1) * self.spacing)

    def abscissae(self) -> np.ndarray:
        o = round(self.origin * (1 << self.resolution))
        return (o + np.arange(len(self.values))) * self.spacing

    def at(self, u):
        """Value at u by snap to the nearest grid point; 0 outside the table."""
        u = np.asarray(u, dtype=float)
        idx = np.rint((u - self.origin) * (1 << self.resolution)).astype(np.int64)
        inside = (idx >= 0) & (idx < len(self.values))
        out = np.zeros(u.shape)
        out[inside] = self.values[idx[inside]]
        return out if out.ndim else float(out)

    def interp(self, u):
        """Linearly interpolated value at u, clamped to the end values."""
        return np.interp(u, self.abscissae(), self.values)


# ---------------------------------------------------------------------------
# filters


def _filter_defects(h):
    """(refinement defect, worst shift-orthonormality defect) of a filter."""
    h = np.asarray(h, dtype=float)
    sum_defect = abs(h.sum() - SQRT2)
    orth = 0.0
    n = len(h)
    for m in range(1, (n + 1) // 2):
        orth = max(orth, abs(np.dot(h[: n - 2 * m], h[2 * m:])))
    orth = max(orth, abs(np.dot(h, h) - 1.0))
    return sum_defect, orth


def _daubechies_filter(order):
    """Length-2K extremal-phase Daubechies filter by spectral factorization.

    Factorizes |m0(w)|^2 = cos(w/2)^{2K} P(sin^2(w/2)) keeping the roots of
    P inside the unit circle, then normalizes the coefficient sum to sqrt(2).
    """
    K = order
    # P(y) = sum_{m<K} binom(K-1+m, m) y^m, highest degree first for np.roots
    p_coeffs = [math.comb(K - 1 + m, m) for m in range(K)][::-1]
    zroots = []
    for y in np.roots(p_coeffs):
        # substitute y = (2 - z - 1/z)/4, i.e. z^2 + (4y - 2) z + 1 = 0
        b = 4.0 * y - 2.0
        disc = np.sqrt(b * b - 4.0 + 0j)
        z1, z2 = (-b + disc) / 2.0, (-b - disc) / 2.0
        zroots.append(z1 if abs(z1) < 1.0 else z2)
    poly = np.array([1.0 + 0j])
    for z in zroots:
        poly = np.convolve(poly, np.array([1.0, -z]))
    for _ in range(K):
        poly = np.convolve(poly, np.array([1.0, 1.0]))
    h = poly.real
    h *= SQRT2 / h.sum()
    sum_defect, orth = _filter_defects(h)
    if sum_defect > FILTER_TOL or orth > FILTER_TOL:
        raise NumericalFailureError(
            f"db{K} spectral factorization defects {sum_defect:.2e}/{orth:.2e} exceed {FILTER_TOL}"
        )
    return tuple(h)


@lru_cache(maxsize=None)
def build_family(name: str) -> WaveletFamily:
    """Construct a wavelet family by name ('haar' or 'db2'..'db10')."""
    if name == "haar":
        return WaveletFamily(
            name="haar",
            filter=(1.0 / SQRT2, 1.0 / SQRT2),
            support_phi=(0, 1),
            support_psi=(0, 1),
            regularity_T=0,
            vanishing_moments=1,
        )
    if name.startswith("db"):
        try:
            order = int(name[2:])
        except ValueError:
            raise UnsupportedFamilyError(f"unknown wavelet family {name!r}") from None
        if not 2 <= order <= MAX_DB_ORDER:
            raise UnsupportedFamilyError(
                f"db order {order} outside supported range 2..{MAX_DB_ORDER}"
            )
        h = _daubechies_filter(order)
        n = len(h)
        # psi(x) = sqrt(2) sum_k g_k phi(2x - k) with g_k = (-1)^k h_{1-k},
        # k = 2-N..1, so supp psi = [1 - N/2, N/2]
        return WaveletFamily(
            name=name,
            filter=h,
            support_phi=(0, n - 1),
            support_psi=(1 - n // 2, n // 2),
            regularity_T=order - 1,
            vanishing_moments=order,
        )
    raise UnsupportedFamilyError(f"unknown wavelet family {name!r}")


# ---------------------------------------------------------------------------
# tables


def _haar_phi_values(R):
    v = np.ones((1 << R) + 1)
    v[0] = 0.0  # phi = 1 on (0, 1], left-open
    return v


def _haar_psi_values(R):
    half = 1 << (R - 1)
    v = np.empty(2 * half + 1)
    v[0] = 0.0
    v[1 : half + 1] = 1.0
    v[half + 1 :] = -1.0
    return v


def _cascade(family, R, max_iter, tol):
    """Fixed point of v(x) = sqrt(2) sum_k h_k v(2x - k) on the 2**-R grid."""
    h = np.asarray(family.filter)
    width = family.width
    n_pts = width * (1 << R) + 1
    v = np.zeros(n_pts)
    v[1 : (1 << R) + 1] = 1.0  # unit indicator on (0, 1] as the seed
    step = 1 << R
    for _ in range(max_iter):
        new = np.zeros(n_pts)
        for k, hk in enumerate(h):
            lo = k * step
            i0 = (lo + 1) // 2
            i1 = min(n_pts - 1, (n_pts - 1 + lo) // 2)
            if i0 > i1:
                continue
            new[i0 : i1 + 1] += hk * v[2 * i0 - lo : 2 * i1 - lo + 1 : 2]
        new *= SQRT2
        diff = np.max(np.abs(new - v))
        v = new
        if diff <= tol:
            return v
    raise NumericalFailureError(
        f"cascade for {family.name} at R={R} did not reach {tol} in {max_iter} iterations"
        f" (last increment {diff:.3e})"
    )


@lru_cache(maxsize=None)
def _phi_table(name, R, max_iter=CASCADE_MAX_ITER, tol=CASCADE_TOL):
    family = build_family(name)
    if family.is_haar:
        values = _haar_phi_values(R)
    else:
        values = _cascade(family, R, max_iter, tol)
    return DyadicTable(R, float(family.support_phi[0]), values, "phi")


@lru_cache(maxsize=None)
def _psi_table(name, R):
    family = build_family(name)
    if family.is_haar:
        return DyadicTable(R, 0.0, _haar_psi_values(R), "psi")
    phi = _phi_table(name, R)
    h = family.filter
    n = len(h)
    b1, b2 = family.support_psi
    n_pts = (b2 - b1) * (1 << R) + 1
    v = np.zeros(n_pts)
    # psi(x) = sqrt(2) sum_k (-1)^k h_{1-k} phi(2x - k), k = 2-n..1
    for k in range(2 - n, 2):
        g = (-1) ** (k & 1) * h[1 - k]
        # phi index of 2x - k for x = b1 + i 2**-R: 2i + (2 b1 - k) 2**R
        off = (2 * b1 - k) * (1 << R)
        i0 = max(0, -(off // 2))
        idx = 2 * np.arange(i0, n_pts) + off
        valid = (idx >= 0) & (idx < len(phi.values))
        sl = np.where(valid, np.clip(idx, 0, len(phi.values) - 1), 0)
        contrib = np.where(valid, phi.values[sl], 0.0)
        v[i0:] += g * contrib
    v *= SQRT2
    return DyadicTable(R, float(b1), v, "psi")


def tabulate_phi(family: WaveletFamily, R: int, max_iter: int = CASCADE_MAX_ITER) -> DyadicTable:
    """Father wavelet on its support at resolution R (cascade for dbK)."""
    if R < 1:
        raise ValueError("resolution must be >= 1")
    return _phi_table(family.name, R, max_iter)


def tabulate_psi(family: WaveletFamily, R: int) -> DyadicTable:
    """Mother wavelet on its support at resolution R."""
    if R < 1:
        raise ValueError("resolution must be >= 1")
    return _psi_table(family.name, R)


def table_integral(values, spacing) -> float:
    """Integral of a basis table by the right-endpoint rule.

    Basis tables follow the left-open convention (value at a jump is the
    limit from the right of the preceding cell), so the right-endpoint sum
    integrates Haar-type step tables exactly.  For the continuous
    Daubechies tables it coincides with the composite trapezoid rule
    because the endpoint values vanish.
    """
    return float(np.sum(values[1:])) * spacing


def tabulate_primitive(table: DyadicTable) -> DyadicTable:
    """Cumulative quadrature of a phi or psi table, starting at 0.

    Uses the cumulative right-endpoint rule (see table_integral), which
    renders Haar primitives exactly piecewise linear.
    """
    if table.function_tag not in ("phi", "psi"):
        raise TableTagError(f"primitive expects a phi or psi table, got {table.function_tag!r}")
    v = table.values
    prim = np.concatenate(([0.0], np.cumsum(v[1:]) * table.spacing))
    return DyadicTable(table.resolution, table.origin, prim, table.function_tag + "_primitive")


@lru_cache(maxsize=None)
def _phi_primitive(name, R):
    return tabulate_primitive(_phi_table(name, R))


@lru_cache(maxsize=None)
def _psi_primitive(name, R):
    return tabulate_primitive(_psi_table(name, R))


def phi_primitive(family: WaveletFamily, R: int) -> DyadicTable:
    return _phi_primitive(family.name, R)


def psi_primitive(family: WaveletFamily, R: int) -> DyadicTable:
    return _psi_primitive(family.name, R)


# ---------------------------------------------------------------------------
# pointwise evaluation

def snap_dyadic(u, R):
    """Round u to the nearest multiple of 2**-R (exact for dyadic input)."""
    scale = float(1 << R)
    return np.rint(np.asarray(u, dtype=float) * scale) / scale


def phi_at(family: WaveletFamily, u, R: int = DEFAULT_RESOLUTION):
    """phi(u), exact for Haar, nearest-grid-point lookup otherwise."""
    if family.is_haar:
        u = np.asarray(u, dtype=float)
        out = ((u > 0.0) & (u <= 1.0)).astype(float)
        return out if out.ndim else float(out)
    return _phi_table(family.name, R).at(u)


def psi_at(family: WaveletFamily, u, R: int = DEFAULT_RESOLUTION):
    """psi(u), exact for Haar, nearest-grid-point lookup otherwise."""
    if family.is_haar:
        u = np.asarray(u, dtype=float)
        out = ((u > 0.0) & (u <= 0.5)).astype(float) - ((u > 0.5) & (u <= 1.0)).astype(float)
        return out if out.ndim else float(out)
    return _psi_table(family.name, R).at(u)


def psi_norms(family: WaveletFamily, R: int = DEFAULT_RESOLUTION):
    """(L2 norm, sup norm) of psi from its table."""
    t = _psi_table(family.name, R)
    l2 = math.sqrt(table_integral(t.values ** 2, t.spacing))
    return l2, float(np.max(np.abs(t.values)))


# ---------------------------------------------------------------------------
# diagnostics


def check_orthonormality(family: WaveletFamily, R: int) -> dict:
    """Worst grid-quadrature defect of <phi, phi(. - k)> = delta_0k.

    Shifts run over |k| <= B2 - B1; by symmetry only k >= 0 are scanned.
    """
    if not family.is_haar and R < 10:
        raise ValueError("orthonormality scan needs R >= 10 for Daubechies tables")
    t = tabulate_phi(family, R)
    v = t.values
    step = 1 << R
    report = {}
    for k in range(family.width + 1):
        prod = v[k * step :] * v[: len(v) - k * step]
        val = table_integral(prod, t.spacing)
        report[k] = abs(val - (1.0 if k == 0 else 0.0))
    return {"family": family.name, "R": R, "max_defect": max(report.values()), "shifts": report}


def partition_of_unity_defect(family: WaveletFamily, R: int) -> float:
    """max over one period of |sum_k phi(x - k) - 1| at grid points."""
    t = tabulate_phi(family, R)
    step = 1 << R
    total = np.zeros(step)
    for k in range(family.width):
        total += t.values[k * step : k * step + step]
    total[0] += t.values[-1]  # translate hitting the right support edge (u = B2)
    return float(np.max(np.abs(total - 1.0)))


def refinement_residual(family: WaveletFamily, R: int) -> float:
    """sup over the grid of |phi(x) - sqrt(2) sum_k h_k phi(2x - k)|."""
    t = tabulate_phi(family, R)
    v = t.values
    n_pts = len(v)
    step = 1 << R
    new = np.zeros(n_pts)
    for k, hk in enumerate(family.filter):
        lo = k * step
        i0 = (lo + 1) // 2
        i1 = min(n_pts - 1, (n_pts - 1 + lo) // 2)
        if i0 > i1:
            continue
        new[i0 : i1 + 1] += hk * v[2 * i0 - lo : 2 * i1 - lo + 1 : 2]
    return float(np.max(np.abs(v - SQRT2 * new)))


def vanishing_moment_defects(family: WaveletFamily, R: int) -> list:
    """|integral of x^i psi(x) dx| for i = 0..vanishing_moments-1."""
    t = tabulate_psi(family, R)
    xs = t.abscissae()
    return [
        abs(table_integral(xs ** i * t.values, t.spacing))
        for i in range(family.vanishing_moments)
    ]


def basis_diagnostics(family: WaveletFamily, R: int = DEFAULT_RESOLUTION) -> dict:
    """All basis-quality numbers used by the acceptance gate and the CLI."""
    sum_defect, orth_filter = _filter_defects(family.filter)
    return {
        "family": family.name,
        "R": R,
        "filter_sum_defect": sum_defect,
        "filter_orthonormality_defect": orth_filter,
        "orthonormality_defect": check_orthonormality(family, R)["max_defect"],
        "partition_of_unity_defect": partition_of_unity_defect(family, R),
        "refinement_residual": refinement_residual(family, R),
        "vanishing_moment_defect": max(vanishing_moment_defects(family, R)),
    }


# ---------------------------------------------------------------------------
# optional on-disk cache


def table_cache_path(cache_dir, family_name, R, tag):
    return os.path.join(cache_dir, f"{family_name}_R{R}_{tag}.csv")


def save_table(table: DyadicTable, path: str) -> None:
    """Write (abscissa, value) pairs; floats use shortest round-trip form."""
    tmp_fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(tmp_fd, "w") as fh:
            fh.write(f"# dyadic-table resolution={table.resolution} origin={table.origin!r} "
                     f"tag={table.function_tag}\n")
            fh.write("abscissa,value\n")
            for x, v in zip(table.abscissae(), table.values):
                fh.write(f"{x!r},{v!r}\n")
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_table(path: str) -> DyadicTable:
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(part.split("=", 1) for part in header.lstrip("# ").split(" ")[1:])
        fh.readline()
        values = [float(line.split(",")[1]) for line in fh if line.strip()]
    return DyadicTable(
        int(fields["resolution"]), float(fields["origin"]), np.asarray(values), fields["tag"]
    )


def cached_phi_table(family: WaveletFamily, R: int, cache_dir: str) -> DyadicTable:
    """Load the phi table from cache_dir, generating and storing it if absent."""
    path = table_cache_path(cache_dir, family.name, R, "phi")
    if os.path.exists(path):
        return load_table(path)
    table = tabulate_phi(family, R)
    os.makedirs(cache_dir, exist_ok=True)
    save_table(table, path)
    return table
