"""Weighted Schatten norms, error envelopes, and the size calculus.

All norms are tracial (normalized trace), so they are sensitive to the
rank of the observables.  The weighted norm with weight ell combines the
Hilbert-Schmidt term with a p-th Schatten term; the envelopes below are
products of these norms with the appropriate N and ell prefactors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import semicircle

__all__ = [
    "WeightedNormSpec",
    "SizeReport",
    "singular_values",
    "schatten_moment",
    "weighted_norm",
    "otoc_error_envelope",
    "chain_ell",
    "local_law_envelope_avg",
    "local_law_envelope_iso",
    "size_report",
]


@dataclass(frozen=True)
class WeightedNormSpec:
    """Exponent and weight of an ell-weighted (2, p)-Schatten norm."""

    p: float
    ell: float

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not self.ell > 0:
            raise ValueError(f"ell must be positive, got {self.ell}")


@dataclass(frozen=True)
class SizeReport:
    """Deterministic mean/standard-deviation sizes of a chain of observables."""

    mean_size: float
    sd_size: float
    iso_mean_size: float
    iso_sd_size: float


def singular_values(a: np.ndarray) -> np.ndarray:
    """Singular values, descending.  Hermitian input uses eigvalsh."""
    a = np.asarray(a)
    if a.shape[0] == a.shape[1] and np.allclose(a, a.conj().T, atol=1e-12 * max(1.0, np.abs(a).max())):
        return np.sort(np.abs(np.linalg.eigvalsh(a)))[::-1]
    return np.linalg.svd(a, compute_uv=False)


def _as_svals(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        return a
    return singular_values(a)


def schatten_moment(a, p: float) -> float:
    """Normalized Schatten moment <|A|^p>^(1/p); p = inf gives the operator norm.

    Accepts a matrix or a precomputed 1-D array of singular values.
    """
    s = _as_svals(a)
    if math.isinf(p):
        return float(np.max(s))
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(np.mean(s**p) ** (1.0 / p))


def weighted_norm(a, spec: WeightedNormSpec) -> float:
    """ell-weighted (2, p)-Schatten norm.

    <|A|^2>^(1/2) / ell^(1/2) + <|A|^p>^(1/p) / ell^(1/p), with the
    second term replaced by the unweighted operator norm at p = inf.
    """
    s = _as_svals(a)
    hs = schatten_moment(s, 2.0) / math.sqrt(spec.ell)
    if math.isinf(spec.p):
        return hs + schatten_moment(s, math.inf)
    return hs + schatten_moment(s, spec.p) / spec.ell ** (1.0 / spec.p)


def otoc_error_envelope(t, n: int, a, b, eps: float = 0.1):
    """High-probability error envelope for the OTOC leading terms.

    exp(t / N^(1/2-eps)) * sqrt(t^4 <A^2>^2/N + |t| <A^8>^(1/2)/N)
    * (same factor for B).  `a` and `b` may be matrices or singular-value
    arrays; t may be a scalar or a grid.
    """
    t_arr = np.asarray(t, dtype=float)
    sa = _as_svals(a)
    sb = _as_svals(b)
    a2 = float(np.mean(sa**2))
    b2 = float(np.mean(sb**2))
    a8_half = math.sqrt(float(np.mean(sa**8)))
    b8_half = math.sqrt(float(np.mean(sb**8)))
    growth = np.exp(t_arr / n ** (0.5 - eps))
    fac_a = np.sqrt(t_arr**4 * a2**2 / n + np.abs(t_arr) * a8_half / n)
    fac_b = np.sqrt(t_arr**4 * b2**2 / n + np.abs(t_arr) * b8_half / n)
    out = growth * fac_a * fac_b
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out)
    return out


def chain_ell(zs: Sequence[complex]) -> float:
    """Chain scale ell = min_j eta_j * rho_j over the spectral parameters."""
    params = [semicircle.SpectralParam.from_z(z) for z in zs]
    return min(p.ell for p in params)


def local_law_envelope_avg(zs: Sequence[complex], observables: Sequence) -> float:
    """Averaged local-law envelope (1/N) prod_i |||A_i|||_(2k, ell)."""
    k = len(observables)
    if len(zs) != k:
        raise ValueError("averaged chain needs as many spectral parameters as observables")
    ell = chain_ell(zs)
    n = np.asarray(observables[0]).shape[0] if np.ndim(observables[0]) == 2 else len(_as_svals(observables[0]))
    prod = 1.0
    for a in observables:
        prod *= weighted_norm(a, WeightedNormSpec(p=2 * k, ell=ell))
    return prod / n


def local_law_envelope_iso(zs: Sequence[complex], observables: Sequence) -> float:
    """Isotropic local-law envelope (N*ell)^(-1/2) prod_i |||A_i|||_(inf, ell)."""
    k = len(observables)
    if len(zs) != k + 1:
        raise ValueError("isotropic chain needs one more spectral parameter than observables")
    ell = chain_ell(zs)
    n = np.asarray(observables[0]).shape[0] if np.ndim(observables[0]) == 2 else len(_as_svals(observables[0]))
    prod = 1.0
    for a in observables:
        prod *= weighted_norm(a, WeightedNormSpec(p=math.inf, ell=ell))
    return prod / math.sqrt(n * ell)


def size_report(ell: float, observables: Sequence) -> SizeReport:
    """Mean and standard-deviation sizes, averaged and isotropic.

    k = 0 uses the conventions (mean, sd) = (0, 1) in the averaged case
    and (1, ell^(-1/2)) in the isotropic case; k = 1 has mean size zero.
    """
    if ell <= 0:
        raise ValueError("ell must be positive")
    k = len(observables)
    if k == 0:
        return SizeReport(0.0, 1.0, 1.0, ell**-0.5)
    svals = [_as_svals(a) for a in observables]
    mean = 0.0
    if k >= 2:
        mean = 1.0
        for s in svals:
            mean *= weighted_norm(s, WeightedNormSpec(p=k, ell=ell))
    sd = 1.0
    iso = 1.0
    for s in svals:
        sd *= weighted_norm(s, WeightedNormSpec(p=2 * k, ell=ell))
        iso *= weighted_norm(s, WeightedNormSpec(p=math.inf, ell=ell))
    return SizeReport(mean_size=mean, sd_size=sd, iso_mean_size=iso, iso_sd_size=iso / math.sqrt(ell))
