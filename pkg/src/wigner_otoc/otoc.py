"""Out-of-time-ordered correlators, empirical and theoretical.

The empirical side works in the eigenbasis of one Wigner sample, where
Heisenberg evolution is a diagonal phase; diagonal low-rank observables
get a factored evaluation whose cost per time point is linear in N.
The theoretical side needs only five scalar moments of the observables
and the Fourier transform of the semicircle density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import semicircle
from .ensemble import SpectralFactorization

__all__ = [
    "Observable",
    "OtocMoments",
    "OtocCurve",
    "TimeEstimate",
    "build_example_observables",
    "moment_set",
    "empirical_otoc",
    "empirical_otoc_beta",
    "theoretical_otoc",
    "theoretical_otoc_beta",
    "sff_closed_form",
    "empirical_sff",
    "gue_overlap_prediction",
    "empirical_overlap",
    "estimate_scrambling_time",
    "estimate_relaxation_time",
    "assemble_curve",
]

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
BETA_MAX = 12.0


class Observable:
    """An N x N Hermitian observable with cached moments.

    Diagonal observables may be given by (support, values); the dense
    matrix is materialized lazily, and the factored form feeds the
    low-rank OTOC evaluation.
    """

    def __init__(self, matrix=None, diag_support=None, n=None):
        if (matrix is None) == (diag_support is None):
            raise ValueError("give exactly one of matrix, diag_support")
        self._matrix = None
        self.diag_support = None
        if matrix is not None:
            matrix = np.asarray(matrix)
            scale = max(1.0, float(np.abs(matrix).max()))
            if np.abs(matrix - matrix.conj().T).max() > HERMITICITY_TOL * scale:
                raise ValueError("observable is not Hermitian to working tolerance")
            self._matrix = matrix
            self.n = matrix.shape[0]
        else:
            support, values = diag_support
            support = np.asarray(support, dtype=int)
            values = np.asarray(values, dtype=float)
            if n is None:
                raise ValueError("diagonal observables need the ambient dimension n")
            if support.size != values.size or np.unique(support).size != support.size:
                raise ValueError("support indices must be distinct and match the values")
            self.diag_support = (support, values)
            self.n = int(n)
        self._svals = None
        self._moments: dict = {}

    @classmethod
    def from_matrix(cls, matrix) -> "Observable":
        return cls(matrix=matrix)

    @classmethod
    def diagonal(cls, support, values, n: int) -> "Observable":
        return cls(diag_support=(support, values), n=n)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            support, values = self.diag_support
            m = np.zeros((self.n, self.n))
            m[support, support] = values
            self._matrix = m
        return self._matrix

    @property
    def traceless(self) -> bool:
        if self.diag_support is not None:
            support, values = self.diag_support
            tr = float(values.sum())
            scale = float(np.abs(values).max()) if values.size else 0.0
        else:
            tr = complex(np.trace(self._matrix)).real
            scale = float(np.abs(self._matrix).max())
        return abs(tr) <= TRACE_TOL * self.n * max(scale, 1.0)

    @property
    def svals(self) -> np.ndarray:
        if self._svals is None:
            if self.diag_support is not None:
                vals = np.zeros(self.n)
                vals[: self.diag_support[0].size] = np.abs(self.diag_support[1])
                self._svals = np.sort(vals)[::-1]
            else:
                self._svals = np.sort(np.abs(np.linalg.eigvalsh(self._matrix)))[::-1]
        return self._svals

    def schatten(self, p: float) -> float:
        """Cached normalized Schatten moment <|A|^p>^(1/p)."""
        if p not in self._moments:
            if math.isinf(p):
                self._moments[p] = float(self.svals[0])
            else:
                self._moments[p] = float(np.mean(self.svals**p) ** (1.0 / p))
        return self._moments[p]

    def trace_moment(self, p: int) -> float:
        """Signed normalized trace <A^p> for integer p."""
        if self.diag_support is not None:
            _, values = self.diag_support
            return float(np.sum(values**p)) / self.n
        lam = np.linalg.eigvalsh(self.matrix)
        return float(np.mean(lam**p))


@dataclass(frozen=True)
class OtocMoments:
    """The five scalars the leading OTOC expression consumes."""

    a2: float
    b2: float
    ab: float
    a2b2: float
    abab: complex
    traceless_a: bool = True
    traceless_b: bool = True


@dataclass
class OtocCurve:
    """Time grid with empirical statistics, theory, and error envelope."""

    ts: np.ndarray
    empirical_mean: np.ndarray
    empirical_std: np.ndarray
    theory: np.ndarray
    envelope: np.ndarray
    n: int
    samples: int
    parts: tuple[np.ndarray, np.ndarray] | None = None


@dataclass(frozen=True)
class TimeEstimate:
    value: float | None
    resolution: float
    status: str = "ok"


def build_example_observables(n: int, a: float, b: float) -> tuple[Observable, Observable]:
    """The canonical disjointly supported diagonal pair.

    A carries an alternating +/- N^((1-a)/2) pattern on the first
    floor(N^a) slots (rounded down to even so it is exactly traceless),
    B the same on the last floor(N^b) slots, so AB = BA = 0 and the
    normalized second moments are 1 up to rounding.  The achieved
    moments are whatever the constructed matrices have; callers should
    use those rather than the nominal values.
    """
    if not (0 <= a < 1 and 0 <= b < 1):
        raise ValueError("rank exponents must lie in [0, 1)")
    # the 1e-9 absorbs float pow error when N^a is an exact integer
    ra = int(n**a + 1e-9) // 2 * 2
    rb = int(n**b + 1e-9) // 2 * 2
    if ra < 2 or rb < 2:
        raise ValueError("support would be empty after rounding; increase n or the exponent")
    if ra + rb > n:
        raise ValueError(f"supports overlap: {ra} + {rb} > {n}")
    sign_a = np.where(np.arange(ra) % 2 == 0, 1.0, -1.0)
    sign_b = np.where(np.arange(rb) % 2 == 0, 1.0, -1.0)
    obs_a = Observable.diagonal(np.arange(ra), n ** ((1 - a) / 2) * sign_a, n)
    obs_b = Observable.diagonal(np.arange(n - rb, n), n ** ((1 - b) / 2) * sign_b, n)
    return obs_a, obs_b


def _as_observable(a) -> Observable:
    return a if isinstance(a, Observable) else Observable.from_matrix(a)


def moment_set(a, b) -> OtocMoments:
    """<A^2>, <B^2>, <AB>, <A^2 B^2>, <ABAB> for a Hermitian pair.

    The first four are real for Hermitian inputs; <ABAB> is computed
    exactly and kept complex (its imaginary part is the caller's to
    inspect).
    """
    obs_a, obs_b = _as_observable(a), _as_observable(b)
    n = obs_a.n
    if obs_a.diag_support is not None and obs_b.diag_support is not None:
        da = np.zeros(n)
        db = np.zeros(n)
        sa, va = obs_a.diag_support
        sb, vb = obs_b.diag_support
        da[sa] = va
        db[sb] = vb
        ab = float(np.sum(da * db)) / n
        a2b2 = float(np.sum(da * da * db * db)) / n
        abab = complex(a2b2)  # diagonal observables commute
        a2 = float(np.sum(da * da)) / n
        b2 = float(np.sum(db * db)) / n
    else:
        ma, mb = obs_a.matrix, obs_b.matrix
        prod = ma @ mb
        a2 = obs_a.trace_moment(2)
        b2 = obs_b.trace_moment(2)
        ab = complex(np.trace(prod)).real / n
        a2b2 = complex(np.trace(ma @ prod @ mb)).real / n
        abab = complex(np.trace(prod @ prod)) / n
    return OtocMoments(
        a2=a2,
        b2=b2,
        ab=ab,
        a2b2=a2b2,
        abab=abab,
        traceless_a=obs_a.traceless,
        traceless_b=obs_b.traceless,
    )


def _rotate(fact: SpectralFactorization, matrix: np.ndarray) -> np.ndarray:
    u = fact.eigenvectors
    return u.conj().T @ matrix @ u


def _eigvec_columns(fact: SpectralFactorization, support: np.ndarray) -> np.ndarray:
    # Columns of U^H indexed by the original-basis support.
    return fact.eigenvectors.conj().T[:, support]


def empirical_otoc(fact: SpectralFactorization, a, b, ts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-point part, four-point part, and commutator OTOC on a grid.

    Heisenberg evolution is a diagonal phase in the eigenbasis.  When
    both observables are diagonal with small support the chain collapses
    onto the support (cost per time point ~ N * rank^2); otherwise the
    dense route is used.  Returns (D, F, C) with C = D - F clipped of
    its vanishing imaginary part.
    """
    obs_a, obs_b = _as_observable(a), _as_observable(b)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    lam = fact.eigenvalues
    n = fact.n
    if obs_a.diag_support is not None and obs_b.diag_support is not None:
        supp_a, val_a = obs_a.diag_support
        supp_b, val_b = obs_b.diag_support
        v_a = _eigvec_columns(fact, supp_a)
        v_b = _eigvec_columns(fact, supp_b)
        c_a = val_a[:, None] * (v_a.conj().T @ v_a) * val_a[None, :]
        c_b = val_b[:, None] * (v_b.conj().T @ v_b) * val_b[None, :]
        va_conj_t = v_a.conj().T
        d_vals = np.empty(ts.size, dtype=complex)
        f_vals = np.empty(ts.size, dtype=complex)
        for m, t in enumerate(ts):
            phase = np.exp(1j * lam * t)
            x = (va_conj_t * phase) @ v_b
            t1 = c_a @ x
            t2 = c_b @ x.conj().T
            d_vals[m] = np.sum(t1 * t2.T) / n
            y = (val_a[:, None] * x) * val_b[None, :]
            z = y @ x.conj().T
            f_vals[m] = np.sum(z * z.T) / n
    else:
        at = _rotate(fact, obs_a.matrix)
        bt = _rotate(fact, obs_b.matrix)
        a2t = at @ at
        b2t = bt @ bt
        md = a2t * b2t.T
        d_vals = np.empty(ts.size, dtype=complex)
        f_vals = np.empty(ts.size, dtype=complex)
        for m, t in enumerate(ts):
            u = np.exp(-1j * lam * t)
            d_vals[m] = (u @ md @ u.conj()) / n
            bt_t = (u.conj()[:, None] * bt) * u[None, :]
            y = at @ bt_t
            f_vals[m] = np.sum(y * y.T) / n
    return d_vals.real, f_vals.real, (d_vals - f_vals).real


def empirical_otoc_beta(fact: SpectralFactorization, a, b, ts, beta: float) -> np.ndarray:
    """Finite-temperature OTOC from Gibbs-weighted traces.

    beta = 0 delegates to the infinite-temperature path, so the
    reduction is exact; Gibbs weights are shifted by the smallest
    eigenvalue before exponentiation.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta > math.log(max(fact.n, 3)):
        raise ValueError("beta exceeds the log N regime guard")
    if beta == 0:
        return empirical_otoc(fact, a, b, ts)[2]
    obs_a, obs_b = _as_observable(a), _as_observable(b)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    lam = fact.eigenvalues
    weights = np.exp(-beta * (lam - lam[0]))
    weights /= weights.sum()
    at = _rotate(fact, obs_a.matrix)
    bt = _rotate(fact, obs_b.matrix)
    out = np.empty(ts.size)
    for m, t in enumerate(ts):
        u = np.exp(-1j * lam * t)
        a_t = (u[:, None] * at) * u.conj()[None, :]
        comm = a_t @ bt - bt @ a_t
        # Tr[K* K e^(-beta W)] / Z = sum_i w_i sum_j |K_ji|^2
        out[m] = 0.5 * float(weights @ np.sum(np.abs(comm) ** 2, axis=0))
    return out


def theoretical_otoc(moments: OtocMoments, ts) -> np.ndarray:
    """Leading deterministic OTOC expression on a time grid.

    <A^2><B^2>[1 - phi^2] + 2<AB>^2 phi^2 [phi^2 - phi(2t)]
    + <A^2B^2> phi^2 - <ABAB> phi^4, with phi the Fourier transform of
    the semicircle density.  Requires traceless observables.

    The sign of the <AB>^2 cross term is fixed by three independent
    routes that all agree: ensemble Monte Carlo at several N, the
    free-probability expansion of the four-point part (the only
    surviving second-order terms are 2<AB>^2 phi^2 [phi(2t) - phi^2]
    inside the four-point function, which enters the commutator with a
    minus), and exact second-order perturbation theory in t, which
    gives the small-t coefficient <A^2><B^2> + 2<AB>^2 + <A^2B^2> for
    commuting observables.
    """
    if not (moments.traceless_a and moments.traceless_b):
        raise ValueError("leading expression requires traceless observables")
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    p = semicircle.phi(ts)
    p2 = semicircle.phi(2 * ts)
    return (
        moments.a2 * moments.b2 * (1.0 - p**2)
        + 2.0 * moments.ab**2 * p**2 * (p**2 - p2)
        + moments.a2b2 * p**2
        - moments.abab.real * p**4
    )


def theoretical_otoc_beta(moments: OtocMoments, ts, beta: float) -> np.ndarray:
    """Finite-temperature leading expression with complex-argument phi.

    beta = 0 reduces exactly to the infinite-temperature expression.
    For disjointly supported observables every beta-dependent term
    carries a vanishing coefficient, so the curve is
    temperature-independent.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta > BETA_MAX:
        raise ValueError(f"beta guard: beta <= {BETA_MAX}")
    if not (moments.traceless_a and moments.traceless_b):
        raise ValueError("leading expression requires traceless observables")
    if beta == 0:
        return theoretical_otoc(moments, ts)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    p = semicircle.phi(ts)
    p2 = semicircle.phi(2 * ts)
    p_ib = semicircle.phi(1j * beta)
    if abs(p_ib.imag) > 1e-10:
        raise ValueError("phi(i beta) failed to be real")
    p_ib = p_ib.real
    p_tib = semicircle.phi(ts + 1j * beta)
    p_2tib = semicircle.phi(2 * ts + 1j * beta)
    # the cross term enters with a minus, as at infinite temperature;
    # validated against Gibbs-weighted ensemble averages
    return (
        moments.a2 * moments.b2 * (1.0 - p**2)
        - moments.ab**2 * (p / p_ib) * np.real(p2 * p_tib + p * p_2tib - 2.0 * p**2 * p_tib)
        + moments.a2b2 * p**2
        - moments.abab.real * p**3 * np.real(p_tib) / p_ib
    )


def sff_closed_form(t, n: int) -> np.ndarray:
    """GUE spectral form factor: phi(t)^2 + 1/N - (1/N)(1 - t/2N) 1(t <= 2N)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    ramp = (1.0 - ts / (2.0 * n)) * (ts <= 2.0 * n)
    out = semicircle.phi(ts) ** 2 + 1.0 / n - ramp / n
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out[0])
    return out


def empirical_sff(eigenvalue_samples: Sequence[np.ndarray], ts) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo r2(t) = E |<e^(itH)>|^2: per-grid mean and std over samples."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    vals = np.empty((len(eigenvalue_samples), ts.size))
    for s, lam in enumerate(eigenvalue_samples):
        traces = np.mean(np.exp(1j * np.outer(ts, lam)), axis=1)
        vals[s] = np.abs(traces) ** 2
    return np.mean(vals, axis=0), np.std(vals, axis=0, ddof=1)


def gue_overlap_prediction(a, b, t, n: int) -> np.ndarray:
    """GUE-averaged overlap E <A(t) B> from the closed-form r2."""
    obs_a, obs_b = _as_observable(a), _as_observable(b)
    tr_a = complex(np.trace(obs_a.matrix)).real / n
    tr_b = complex(np.trace(obs_b.matrix)).real / n
    tr_ab = complex(np.trace(obs_a.matrix @ obs_b.matrix)).real / n
    r2 = np.atleast_1d(sff_closed_form(t, n))
    out = tr_a * tr_b + (n**2 * r2 - 1.0) / (n**2 - 1.0) * (tr_ab - tr_a * tr_b)
    if np.isscalar(t) or np.ndim(t) == 0:
        return float(out[0])
    return out


def empirical_overlap(fact: SpectralFactorization, a, b, ts) -> np.ndarray:
    """<A(t) B> for one sample on a time grid (complex)."""
    obs_a, obs_b = _as_observable(a), _as_observable(b)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    lam = fact.eigenvalues
    at = _rotate(fact, obs_a.matrix)
    bt = _rotate(fact, obs_b.matrix)
    m = at * bt.T
    out = np.empty(ts.size, dtype=complex)
    for i, t in enumerate(ts):
        u = np.exp(-1j * lam * t)
        out[i] = (u @ m @ u.conj()) / fact.n
    return out


def estimate_scrambling_time(ts, values, window: tuple[float, float] = (0.0, 5.0)) -> TimeEstimate:
    """Time where the initial growth stops: first attainment of the
    window maximum.

    Oscillating curves reach their maximum repeatedly (the flat-peak
    case hits it at every zero of the Fourier transform), so the
    estimator takes the earliest grid point within a 0.1% band of the
    maximum rather than a bare argmax.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (ts >= window[0]) & (ts <= window[1])
    if not np.any(mask):
        raise ValueError("window contains no grid points")
    sub = values[mask]
    threshold = sub.max() - 1e-3 * (sub.max() - sub.min())
    idx = np.flatnonzero(mask)[np.flatnonzero(sub >= threshold)[0]]
    res = _local_spacing(ts, idx)
    return TimeEstimate(value=float(ts[idx]), resolution=res, status="ok")


def estimate_relaxation_time(ts, values, thermal: float, delta: float = 0.1) -> TimeEstimate:
    """Last exit time from the band thermal * [1 - delta, 1 + delta].

    The curves oscillate, so the estimator takes the last grid point
    outside the band; after it the curve stays inside for the rest of
    the grid.  Never exiting reports the grid start; never entering the
    band is reported as a distinct status with no value.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    outside = np.abs(values - thermal) > delta * abs(thermal)
    if not np.any(outside):
        return TimeEstimate(value=float(ts[0]), resolution=_local_spacing(ts, 0), status="never-exited")
    if np.all(outside):
        return TimeEstimate(value=None, resolution=float("nan"), status="never-entered")
    idx = int(np.flatnonzero(outside)[-1])
    return TimeEstimate(value=float(ts[idx]), resolution=_local_spacing(ts, idx), status="ok")


def _local_spacing(ts: np.ndarray, idx: int) -> float:
    if ts.size < 2:
        return float("nan")
    lo = max(idx - 1, 0)
    hi = min(idx + 1, ts.size - 1)
    return float((ts[hi] - ts[lo]) / (hi - lo))


def assemble_curve(ts, per_sample_c: np.ndarray, theory, envelope, n: int, parts=None) -> OtocCurve:
    """Aggregate per-sample OTOC values into a curve record.

    Means and standard deviations are computed with numpy's pairwise
    reductions over the sample axis, so the result is independent of
    sample evaluation order.
    """
    per_sample_c = np.asarray(per_sample_c)
    samples = per_sample_c.shape[0]
    std = np.std(per_sample_c, axis=0, ddof=1) if samples > 1 else np.zeros(per_sample_c.shape[1])
    return OtocCurve(
        ts=np.asarray(ts, dtype=float),
        empirical_mean=np.mean(per_sample_c, axis=0),
        empirical_std=std,
        theory=np.asarray(theory, dtype=float),
        envelope=np.asarray(envelope, dtype=float),
        n=n,
        samples=samples,
        parts=parts,
    )
