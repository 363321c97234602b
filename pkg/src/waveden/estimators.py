"""Linear and hard-thresholding wavelet density estimators.

The linear estimator at level j is the sample average of K_j(y, X_i),
equivalently the empirical-coefficient expansion at level j; the two
evaluation routes are kept as mutual checks.  The thresholding estimator
keeps the level-j0 scaling part and only those detail coefficients
exceeding tau(n, l) = kappa sqrt(l/n).  CDFs come from primitive tables of
phi and psi, so they are exact for Haar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from waveden.basis import (
    DEFAULT_RESOLUTION,
    DyadicTable,
    WaveletFamily,
    build_family,
    phi_at,
    psi_at,
    phi_primitive,
    psi_primitive,
    psi_norms,
    snap_dyadic,
    table_integral,
)
from waveden.kernel import ResolutionError, kernel_Kj, make_kernel_context, norm_squared
from waveden.coefficients import Sample, empirical_alpha, empirical_beta


class DegenerateScheduleError(ValueError):
    """Threshold level schedule collapsed (j0 >= j1), n too small."""


class EstimatorFormatError(ValueError):
    """Unreadable or version-mismatched estimator document."""


def choose_j_optimal(n: int, t: float) -> int:
    """Level with 2^j nearest (in log2) to (n / ln n)^{1/(2t+1)}."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if t <= 0:
        raise ValueError("t must be positive")
    target = (n / math.log(n)) ** (1.0 / (2.0 * t + 1.0))
    return max(0, round(math.log2(target)))


def threshold_levels(n: int, T: int):
    """(j0, j1) for the thresholding estimator.

    2^{j0} tracks (n/ln n)^{1/(2(T+1)+1)} by log2 rounding and
    j1 = ceil(log2(n/ln n)), which lands 2^{j1} in [n/ln n, 2n/ln n].
    """
    if n < 8:
        raise ValueError("thresholding needs n >= 8")
    ratio = n / math.log(n)
    j0 = max(0, round(math.log2(ratio ** (1.0 / (2.0 * (T + 1) + 1.0)))))
    j1 = math.ceil(math.log2(ratio))
    if j0 >= j1:
        raise DegenerateScheduleError(f"j0={j0} >= j1={j1} at n={n}")
    return j0, j1


def threshold_constant(kappa: float, psi_l2: float, psi_sup: float, sup_norm_bound: float) -> float:
    """c(kappa) = kappa^2 / (8 ||psi||_2^2 bound + (8 / (3 sqrt(log 2))) kappa ||psi||_inf)."""
    denom = 8.0 * psi_l2 ** 2 * sup_norm_bound + 8.0 / (3.0 * math.sqrt(math.log(2.0))) * kappa * psi_sup
    return kappa * kappa / denom


def default_kappa(family: WaveletFamily, sup_norm_bound: float, eta: float, T: int,
                  R: int = DEFAULT_RESOLUTION) -> float:
    """Smallest integer kappa with c(kappa) >= (T+3)(1 + 1/eta) log 2.

    c(kappa) grows without bound in kappa, so the search terminates; psi
    norms come from the family table.
    """
    if sup_norm_bound <= 0 or eta <= 0:
        raise ValueError("sup_norm_bound and eta must be positive")
    l2, sup = psi_norms(family, R)
    need = (T + 3) * (1.0 + 1.0 / eta) * math.log(2.0)
    for kappa in range(1, 100001):
        if threshold_constant(float(kappa), l2, sup, sup_norm_bound) >= need:
            return float(kappa)
    raise RuntimeError("kappa search grid exhausted")


# ---------------------------------------------------------------------------
# coefficient table expansion helpers


def _dense(table: dict):
    if not table:
        return 0, np.zeros(1)
    kmin = min(table)
    vec = np.zeros(max(table) - kmin + 1)
    for k, v in table.items():
        vec[k - kmin] = v
    return kmin, vec


def _expand_level(family, R, level, kmin, vec, y, base):
    """sum_k c_k 2^{level/2} base(2^level y - k) at the points y."""
    if base == "phi":
        b1, b2 = family.support_phi
        evalf = phi_at
    else:
        b1, b2 = family.support_psi
        evalf = psi_at
    v = np.asarray(y, dtype=float) * float(1 << level)
    if not family.is_haar:
        v = snap_dyadic(v, R)
    k0 = np.ceil(v - b2).astype(np.int64)
    out = np.zeros(v.shape)
    for d in range(b2 - b1):
        k = k0 + d
        idx = k - kmin
        ok = (idx >= 0) & (idx < len(vec))
        w = evalf(family, v - k, R)
        out += np.where(ok, vec[np.clip(idx, 0, len(vec) - 1)] * w, 0.0)
    return out * 2.0 ** (level / 2.0)


def _cdf_level(family, R, level, kmin, vec, s, base):
    """sum_k c_k 2^{-level/2} Ibase(2^level s - k) with saturation by prefix sums."""
    if base == "phi":
        b1, b2 = family.support_phi
        prim = phi_primitive(family, R)
    else:
        b1, b2 = family.support_psi
        prim = psi_primitive(family, R)
    end = float(prim.values[-1])
    prefix = np.cumsum(vec)
    total = float(prefix[-1])
    v = np.asarray(s, dtype=float) * float(1 << level)
    k0 = np.ceil(v - b2).astype(np.int64)
    sat_idx = k0 - 1 - kmin
    sat = np.where(
        sat_idx < 0, 0.0,
        np.where(sat_idx >= len(vec), total, prefix[np.clip(sat_idx, 0, len(vec) - 1)]),
    )
    out = end * sat
    xs = prim.abscissae()
    for d in range(b2 - b1):
        k = k0 + d
        idx = k - kmin
        ok = (idx >= 0) & (idx < len(vec))
        w = np.interp(v - k, xs, prim.values)
        out += np.where(ok, vec[np.clip(idx, 0, len(vec) - 1)] * w, 0.0)
    return out * 2.0 ** (-level / 2.0)


# ---------------------------------------------------------------------------
# estimators


class LinearEstimator:
    """p_n(y) = (1/n) sum_i K_j(y, X_i) in coefficient form."""

    kind = "linear"

    def __init__(self, family: WaveletFamily, j: int, alpha: dict, n: int,
                 R: int = DEFAULT_RESOLUTION):
        self.family = family
        self.j = j
        self.alpha = dict(alpha)
        self.n = n
        self.R = R
        self._kmin, self._vec = _dense(self.alpha)

    @property
    def finest_level(self) -> int:
        return self.j


class ThresholdEstimator:
    """Level-j0 scaling part plus detail coefficients surviving |b| > tau."""

    kind = "threshold"

    def __init__(self, family: WaveletFamily, j0: int, j1: int, kappa: float,
                 tau: dict, base_alpha: dict, kept_beta: dict, n: int,
                 R: int = DEFAULT_RESOLUTION):
        self.family = family
        self.j0 = j0
        self.j1 = j1
        self.kappa = kappa
        self.tau = dict(tau)
        self.base_alpha = dict(base_alpha)
        self.kept_beta = dict(kept_beta)
        self.n = n
        self.R = R
        self._kmin, self._vec = _dense(self.base_alpha)
        self._levels = {}
        for (l, k), v in self.kept_beta.items():
            self._levels.setdefault(l, {})[k] = v
        self._levels = {l: _dense(tbl) for l, tbl in sorted(self._levels.items())}

    @property
    def finest_level(self) -> int:
        return max([self.j0] + list(self._levels))


def fit_linear(sample: Sample, family: WaveletFamily, j: int,
               R: int = DEFAULT_RESOLUTION) -> LinearEstimator:
    if j < 0:
        raise ValueError("level j must be >= 0")
    return LinearEstimator(family, j, empirical_alpha(sample, family, j, R), sample.n, R)


def fit_threshold(sample: Sample, family: WaveletFamily, kappa: float, T: int,
                  R: int = DEFAULT_RESOLUTION, tau_override=None) -> ThresholdEstimator:
    """Hard-thresholding fit with tau(n, l) = kappa sqrt(l/n).

    tau_override(n, l), when given, replaces the tau rule (test hook; 0
    keeps every nonzero coefficient, reproducing the j1 linear estimator).
    """
    if kappa is not None and kappa <= 0 and tau_override is None:
        raise ValueError("kappa must be positive")
    n = sample.n
    j0, j1 = threshold_levels(n, T)
    base_alpha = empirical_alpha(sample, family, j0, R)
    tau = {}
    kept = {}
    for l in range(j0, j1):
        tau_l = float(tau_override(n, l)) if tau_override is not None else kappa * math.sqrt(l / n)
        tau[l] = tau_l
        if math.isinf(tau_l):
            continue
        for k, v in empirical_beta(sample, family, l, R).items():
            if abs(v) > tau_l:
                kept[(l, k)] = v
    return ThresholdEstimator(family, j0, j1, kappa, tau, base_alpha, kept, n, R)


def eval_density(est, y):
    """p_n(y); may be negative for non-Haar families."""
    y = np.asarray(y, dtype=float)
    if est.kind == "linear":
        out = _expand_level(est.family, est.R, est.j, est._kmin, est._vec, y, "phi")
    else:
        out = _expand_level(est.family, est.R, est.j0, est._kmin, est._vec, y, "phi")
        for l, (kmin, vec) in est._levels.items():
            out += _expand_level(est.family, est.R, l, kmin, vec, y, "psi")
    return out if out.ndim else float(out)


def eval_density_by_kernel(est: LinearEstimator, sample: Sample, y):
    """(1/n) sum_i K_j(y, X_i): the kernel-average route, for cross-checks."""
    ctx = make_kernel_context(est.family, est.R)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.array([
        float(np.mean(kernel_Kj(ctx, est.j, np.full(sample.n, yy), sample.observations)))
        for yy in y
    ])
    return out if len(out) > 1 else float(out[0])


def cdf(est, s):
    """F_n(s) = integral of p_n from -infinity to s, from primitive tables."""
    s = np.asarray(s, dtype=float)
    if est.kind == "linear":
        out = _cdf_level(est.family, est.R, est.j, est._kmin, est._vec, s, "phi")
    else:
        out = _cdf_level(est.family, est.R, est.j0, est._kmin, est._vec, s, "phi")
        for l, (kmin, vec) in est._levels.items():
            out += _cdf_level(est.family, est.R, l, kmin, vec, s, "psi")
    return out if out.ndim else float(out)


def total_mass(est) -> float:
    """integral of p_n over the line (1 up to quadrature tolerance)."""
    phi_end = float(phi_primitive(est.family, est.R).values[-1])
    if est.kind == "linear":
        return phi_end * sum(est.alpha.values()) * 2.0 ** (-est.j / 2.0)
    out = phi_end * sum(est.base_alpha.values()) * 2.0 ** (-est.j0 / 2.0)
    psi_end = float(psi_primitive(est.family, est.R).values[-1])
    for l, (kmin, vec) in est._levels.items():
        out += psi_end * float(vec.sum()) * 2.0 ** (-l / 2.0)
    return out


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function: values[i] on (breakpoints[i-1], breakpoints[i]]."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(self.breakpoints) + 1:
            raise ValueError("need len(values) == len(breakpoints) + 1")
        if any(b1 >= b2 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), np.asarray(x, dtype=float), side="left")
        return np.asarray(self.values)[idx]


def integrate_against(est, f):
    """integral of p_n * f.

    Step functions integrate exactly through CDF increments; grid tables by
    quadrature of p_n * f on the table's grid.
    """
    if isinstance(f, StepFunction):
        cuts = [float(cdf(est, b)) for b in f.breakpoints]
        bounds = [0.0] + cuts + [total_mass(est)]
        return float(sum(c * (b2 - b1) for c, b1, b2 in zip(f.values, bounds, bounds[1:])))
    if isinstance(f, DyadicTable):
        pn = eval_density(est, f.abscissae())
        return table_integral(pn * f.values, f.spacing)
    raise TypeError(f"cannot integrate against {type(f).__name__}")


def sup_deviation_statistic(est, reference: DyadicTable, normalized: bool = False) -> float:
    """Grid sup of |p_n - reference|, optionally with the periodic normalizer.

    The reference grid must resolve the estimator's finest level (spacing
    at most 2^{-(level+4)}); the result is a certified under-approximation
    of the true sup over the reference's span.
    """
    level = est.finest_level
    if reference.resolution < level + 4:
        raise ResolutionError(
            f"reference resolution {reference.resolution} below level {level} + 4")
    xs = reference.abscissae()
    diff = np.abs(eval_density(est, xs) - reference.values)
    if normalized:
        ctx = make_kernel_context(est.family, est.R)
        j = est.j if est.kind == "linear" else est.j0
        diff = diff / np.sqrt(norm_squared(ctx, xs * float(1 << j)))
    return float(diff.max())


# ---------------------------------------------------------------------------
# serialization


def serialize_estimator(est) -> str:
    doc = {
        "format": "waveden-estimator",
        "version": 1,
        "kind": est.kind,
        "family": est.family.name,
        "R": est.R,
        "n": est.n,
    }
    if est.kind == "linear":
        doc["j"] = est.j
        doc["alpha"] = [[int(k), v] for k, v in sorted(est.alpha.items())]
    else:
        doc["j0"] = est.j0
        doc["j1"] = est.j1
        doc["kappa"] = est.kappa
        doc["tau"] = [[int(l), v] for l, v in sorted(est.tau.items())]
        doc["alpha"] = [[int(k), v] for k, v in sorted(est.base_alpha.items())]
        doc["beta"] = [[int(l), int(k), v] for (l, k), v in sorted(est.kept_beta.items())]
    return json.dumps(doc, sort_keys=True)


def deserialize_estimator(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EstimatorFormatError(f"not a JSON document: {exc}") from None
    if doc.get("format") != "waveden-estimator":
        raise EstimatorFormatError("not a waveden estimator document")
    if doc.get("version") != 1:
        raise EstimatorFormatError(f"unsupported document version {doc.get('version')!r}")
    family = build_family(doc["family"])
    if doc["kind"] == "linear":
        alpha = {int(k): float(v) for k, v in doc["alpha"]}
        return LinearEstimator(family, int(doc["j"]), alpha, int(doc["n"]), int(doc["R"]))
    if doc["kind"] == "threshold":
        tau = {int(l): float(v) for l, v in doc["tau"]}
        alpha = {int(k): float(v) for k, v in doc["alpha"]}
        beta = {(int(l), int(k)): float(v) for l, k, v in doc["beta"]}
        return ThresholdEstimator(family, int(doc["j0"]), int(doc["j1"]), float(doc["kappa"]),
                                  tau, alpha, beta, int(doc["n"]), int(doc["R"]))
    raise EstimatorFormatError(f"unknown estimator kind {doc['kind']!r}")
