"""Empirical resolvent chains against their deterministic approximation.

Chains are evaluated in the eigenbasis of one spectral factorization:
each observable is rotated once, resolvents are diagonal weights, and
the closing trace is an elementwise contraction.  The module also hosts
the numeric identities the flow analysis rests on: the Ward identity,
the reduction inequality, the |G| integral representation, contour
linearization of resolvent pairs, and deviation tracking along the
coupled matrix/spectral-parameter flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import mterm, nc_comb, schatten, semicircle
from .ensemble import (
    SpectralFactorization,
    integrate_characteristic,
    gaussian_wigner,
    shoot_initial_condition,
)

__all__ = [
    "ChainSpec",
    "ResidualRecord",
    "ReductionRecord",
    "LinearizationRule",
    "FlowDeviationResult",
    "GuardError",
    "ContourError",
    "rotate_observable",
    "avg_chain",
    "iso_chain",
    "local_law_residual",
    "reduction_check",
    "absg_check",
    "linearize_pair",
    "flow_deviation_track",
]

DEFAULT_MESO_EPS = 0.1


class GuardError(ValueError):
    """A mesoscopic-scale or shape guard was violated."""


class ContourError(RuntimeError):
    """Contour quadrature could not stabilize (pinching near the axis)."""


@dataclass
class ChainSpec:
    """Layout of one chain: spectral parameters, observables, closing.

    Averaged chains carry k parameters, k-1 inner observables and a
    closing observable; isotropic chains carry k+1 parameters, k
    observables and a unit vector pair.
    """

    zs: list
    observables: list = field(default_factory=list)
    closing: np.ndarray | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        self.zs = [complex(z) for z in self.zs]
        if any(z.imag == 0 for z in self.zs):
            raise GuardError("spectral parameters must be off the real axis")
        if self.x is not None or self.y is not None:
            if self.closing is not None:
                raise GuardError("isotropic chains take vectors, not a closing observable")
            if len(self.zs) != len(self.observables) + 1:
                raise GuardError("isotropic chains need one more parameter than observables")
            for v in (self.x, self.y):
                if v is None or np.linalg.norm(v) > 1.0 + 1e-12:
                    raise GuardError("test vectors must have norm at most one")
        else:
            if self.closing is None:
                raise GuardError("averaged chains need a closing observable")
            if len(self.zs) != len(self.observables) + 1:
                raise GuardError("averaged chains need one more parameter than inner observables")

    @property
    def ell(self) -> float:
        return schatten.chain_ell(self.zs)

    @property
    def mode(self) -> str:
        return "iso" if self.x is not None else "avg"


@dataclass(frozen=True)
class ResidualRecord:
    empirical: complex
    deterministic: complex
    residual: float
    envelope: float
    ratio: float


@dataclass(frozen=True)
class ReductionRecord:
    lhs: float
    rhs: float
    ratio: float


def rotate_observable(fact: SpectralFactorization, a: np.ndarray) -> np.ndarray:
    """One-time rotation of an observable into the eigenbasis."""
    u = fact.eigenvectors
    return u.conj().T @ np.asarray(a) @ u


def _resolvent_diag(fact: SpectralFactorization, z: complex) -> np.ndarray:
    return 1.0 / (fact.eigenvalues - z)


def avg_chain(
    fact: SpectralFactorization,
    zs: Sequence[complex],
    observables: Sequence[np.ndarray],
    rotated: bool = False,
) -> complex:
    """Normalized trace of G(z_1) A_1 ... G(z_k) A_k.

    Exact up to factorization error: the product is folded in the
    eigenbasis with diagonal resolvent weights, and the trace closes
    with an elementwise contraction instead of a final matrix product.
    """
    k = len(zs)
    if len(observables) != k:
        raise GuardError("averaged chain needs as many observables as parameters")
    n = fact.n
    tilde = list(observables) if rotated else [rotate_observable(fact, a) for a in observables]
    r = [_resolvent_diag(fact, z) for z in zs]
    if k == 1:
        return complex(np.sum(r[0] * np.diagonal(tilde[0]))) / n
    x = r[0][:, None] * tilde[0]
    for i in range(1, k - 1):
        x = x @ (r[i][:, None] * tilde[i])
    last = r[k - 1][:, None] * tilde[k - 1]
    return complex(np.sum(x * last.T)) / n


def iso_chain(
    fact: SpectralFactorization,
    zs: Sequence[complex],
    observables: Sequence[np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    rotated: bool = False,
) -> complex:
    """Matrix element <x, G(z_1) A_1 ... A_k G(z_(k+1)) y>."""
    if len(zs) != len(observables) + 1:
        raise GuardError("isotropic chain needs one more parameter than observables")
    tilde = list(observables) if rotated else [rotate_observable(fact, a) for a in observables]
    u = fact.eigenvectors
    xt = u.conj().T @ np.asarray(x, dtype=complex)
    yt = u.conj().T @ np.asarray(y, dtype=complex)
    v = _resolvent_diag(fact, zs[-1]) * yt
    for i in range(len(observables) - 1, -1, -1):
        v = _resolvent_diag(fact, zs[i]) * (tilde[i] @ v)
    return complex(xt.conj() @ v)


def _check_meso_guard(n: int, zs: Sequence[complex], eps: float) -> float:
    ell = schatten.chain_ell(zs)
    if n * ell < n**eps:
        raise GuardError(f"mesoscopic guard violated: N*ell = {n * ell:.3g} < N^{eps}")
    return ell


def local_law_residual(
    fact: SpectralFactorization,
    zs: Sequence[complex],
    observables: Sequence[np.ndarray],
    mode: Literal["avg", "iso"] = "avg",
    x: np.ndarray | None = None,
    y: np.ndarray | None = None,
    eps: float = DEFAULT_MESO_EPS,
    cumulants: nc_comb.FreeCumulants | None = None,
    rotated_observables: Sequence[np.ndarray] | None = None,
) -> ResidualRecord:
    """Distance of one empirical chain from its deterministic value.

    The envelope is the weighted-Schatten product of the matching local
    law; the ratio is the dimensionless quantity stochastic domination
    controls.  Traceless observables are required, and the mesoscopic
    guard N*ell >= N^eps is enforced rather than silently ignored.
    """
    for a in observables:
        mterm.check_traceless(a)
    _check_meso_guard(fact.n, zs, eps)
    if mode == "avg":
        empirical = avg_chain(fact, zs, rotated_observables or observables, rotated=rotated_observables is not None)
        det = mterm.m_chain(zs, [np.asarray(a) for a in observables[:-1]], closing=np.asarray(observables[-1]), cumulants=cumulants).traced_value
        envelope = schatten.local_law_envelope_avg(zs, observables)
    elif mode == "iso":
        if x is None or y is None:
            raise GuardError("isotropic residual needs test vectors")
        empirical = iso_chain(fact, zs, rotated_observables or observables, x, y, rotated=rotated_observables is not None)
        m = mterm.m_chain(zs, [np.asarray(a) for a in observables], cumulants=cumulants, n=fact.n).matrix
        det = complex(np.asarray(x, dtype=complex).conj() @ m @ np.asarray(y, dtype=complex))
        envelope = schatten.local_law_envelope_iso(zs, observables)
    else:
        raise GuardError(f"unknown mode {mode!r}")
    residual = abs(empirical - det)
    return ResidualRecord(
        empirical=empirical,
        deterministic=det,
        residual=residual,
        envelope=envelope,
        ratio=residual / envelope,
    )


def reduction_check(
    fact: SpectralFactorization,
    q: np.ndarray,
    r: np.ndarray,
    z: complex,
    w: complex,
) -> ReductionRecord:
    """Reduction inequality splitting a long chain into two short ones.

    lhs = <Im G(z) Q G(w) R Im G(z) R* G(w)* Q*>, rhs = N times the
    product of the two reduced chains with |G(w)|; both evaluated from
    the factorization.
    """
    z, w = complex(z), complex(w)
    if z.imag == 0 or w.imag == 0:
        raise GuardError("spectral parameters must be off the real axis")
    lam = fact.eigenvalues
    n = fact.n
    qt = rotate_observable(fact, q)
    rt = rotate_observable(fact, r)
    ig = np.imag(1.0 / (lam - z))
    gw = 1.0 / (lam - w)
    absgw = np.abs(gw)
    m1 = (ig[:, None] * qt) @ (gw[:, None] * rt)
    m2 = (ig[:, None] * rt.conj().T) @ (gw.conj()[:, None] * qt.conj().T)
    lhs = complex(np.sum(m1 * m2.T)) / n
    red_q = float(np.einsum("i,ij,j->", ig, np.abs(qt) ** 2, absgw).real) / n
    red_r = float(np.einsum("i,ij,j->", ig, np.abs(rt.conj().T) ** 2, absgw).real) / n
    rhs = n * red_q * red_r
    lhs_real = lhs.real
    return ReductionRecord(lhs=lhs_real, rhs=rhs, ratio=lhs_real / rhs)


def absg_check(
    fact: SpectralFactorization,
    z: complex,
    w: np.ndarray | None = None,
    tol: float = 1e-8,
    max_nodes: int = 1 << 12,
) -> float:
    """Max entrywise gap between |G(z)| and its integral representation.

    Route one diagonalizes: |G| = sum |lambda_i - z|^-1 u_i u_i*.  Route
    two integrates (2/pi) Im G(E + i sqrt(eta^2 + v^2)) / sqrt(eta^2+v^2)
    over v with direct matrix inversions, so the two sides share nothing
    but the sample.  The v-integral is mapped through v = eta tan(phi)
    and evaluated by a doubling Gauss-Legendre rule.
    """
    z = complex(z)
    if z.imag == 0:
        raise GuardError("Im z must be nonzero")
    e_part, eta = z.real, abs(z.imag)
    u = fact.eigenvectors
    direct = (u * (1.0 / np.abs(fact.eigenvalues - z))) @ u.conj().T
    if w is None:
        w = fact.reconstruct()
    n = w.shape[0]
    eye = np.eye(n)

    # v = eta tan(phi) turns the half-line integral into
    # int_0^(pi/2) Im G(E + i eta sec(phi)) sec(phi) dphi.
    def estimate(n_nodes: int) -> np.ndarray:
        x_gl, w_gl = np.polynomial.legendre.leggauss(n_nodes)
        phis = (math.pi / 4.0) * (x_gl + 1.0)
        total = np.zeros((n, n), dtype=complex)
        for phi_node, wt in zip(phis, w_gl):
            sec = 1.0 / math.cos(phi_node)
            g = np.linalg.inv(w - (e_part + 1j * eta * sec) * eye)
            total += wt * sec * (g - g.conj().T) / 2j
        # Jacobian pi/4 times the 2/pi prefactor of the representation.
        return total * 0.5

    nodes = 32
    prev = None
    while nodes <= max_nodes:
        est = estimate(nodes)
        if prev is not None and np.max(np.abs(est - prev)) < tol / 10.0:
            return float(np.max(np.abs(est - direct)))
        prev = est
        nodes *= 2
    raise ContourError("integral representation quadrature did not stabilize")


@dataclass
class LinearizationRule:
    """Quadrature rule representing a product of two resolvents.

    Applying the rule to a factorization reproduces G(z_i) G(z_j); the
    scalar weight function is the same rule contracted against a real
    eigenvalue argument.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: Literal["contour", "resolvent-identity"]

    def weight_function(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        return np.sum(self.weights[:, None] / (lam[None, :] - self.nodes[:, None]), axis=0)

    def apply(self, fact: SpectralFactorization) -> np.ndarray:
        u = fact.eigenvectors
        d = self.weight_function(fact.eigenvalues)
        return (u * d) @ u.conj().T


def _level_heights(es: np.ndarray, target: float) -> np.ndarray:
    # Heights y with y * rho(e + i y) = target, vectorized bisection;
    # y*rho tends to 1/pi for large y, so targets below 1/(2 pi) are
    # always reachable.
    if target >= 1.0 / (2.0 * math.pi):
        raise ContourError("level target too large; ell must be below 1/pi")

    def f(ys):
        return ys * np.abs(np.imag(semicircle.m_sc(es + 1j * ys))) / math.pi - target

    hi = np.full(es.shape, 0.05)
    for _ in range(24):
        below = f(hi) < 0
        if not below.any():
            break
        hi[below] *= 2.0
    else:
        raise ContourError("level curve unreachable")
    lo = np.zeros_like(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = f(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


def linearize_pair(
    z_i: complex,
    z_j: complex,
    ell: float | None = None,
    n_start: int = 256,
    max_nodes: int = 1 << 14,
    stab_tol: float = 1e-8,
) -> LinearizationRule:
    """Rule expressing G(z_j) G(z_i) through single resolvents.

    Opposite half-planes use the resolvent identity exactly.  The same
    half-plane (including the coincident case) is handled by a contour
    around the spectrum whose upper and lower edges follow the level set
    |Im z| rho(z) = ell/2, discretized with trapezoid nodes and doubled
    until the rule's action on the Stieltjes transform stabilizes.
    """
    z_i, z_j = complex(z_i), complex(z_j)
    if z_i.imag == 0 or z_j.imag == 0:
        raise GuardError("spectral parameters must be off the real axis")
    if z_i.imag * z_j.imag < 0:
        dz = z_i - z_j
        nodes = np.array([z_i, z_j])
        weights = np.array([1.0 / dz, -1.0 / dz])
        return LinearizationRule(nodes=nodes, weights=weights, kind="resolvent-identity")
    if ell is None:
        ell = min(semicircle.SpectralParam.from_z(z_i).ell, semicircle.SpectralParam.from_z(z_j).ell)
    target = ell / 2.0
    r_max = max(2.0, abs(z_i.real), abs(z_j.real)) + 1.0

    def build(n_side: int):
        es = np.linspace(-r_max, r_max, n_side)
        ys = _level_heights(es, target)
        bottom = es - 1j * ys
        top = es[::-1] + 1j * ys[::-1]
        # The vertical closing segments must be discretized as well:
        # otherwise they are fixed-length chords whose error never
        # shrinks under refinement.
        n_vert = max(8, n_side // 4)
        y_r = ys[-1]
        y_l = ys[0]
        right = r_max + 1j * np.linspace(-y_r, y_r, n_vert)[1:-1]
        left = -r_max + 1j * np.linspace(y_l, -y_l, n_vert)[1:-1]
        path = np.concatenate([bottom, right, top, left])
        nxt = np.roll(path, -1)
        prv = np.roll(path, 1)
        trapz = (nxt - prv) / 2.0
        denom = (path - z_i) * (path - z_j)
        weights = -trapz / (2j * math.pi * denom)
        return path, weights

    def probe(rule_nodes, rule_weights):
        # action on the Stieltjes transform as the stabilization probe
        return complex(np.sum(rule_weights * semicircle.m_sc(rule_nodes)))

    # Trapezoid error on the polygonal contour is O(h^2); combining the
    # rule at n with the rule at 2n Richardson-cancels that term.  The
    # returned rule is the (4 S_2n - S_n)/3 combination, and doubling
    # stops once the extrapolated probe stabilizes.
    n_side = n_start
    nodes_c, weights_c = build(n_side)
    probe_c = probe(nodes_c, weights_c)
    prev_extrap = None
    while n_side < max_nodes:
        n_side *= 2
        nodes_f, weights_f = build(n_side)
        probe_f = probe(nodes_f, weights_f)
        extrap = (4.0 * probe_f - probe_c) / 3.0
        if prev_extrap is not None and abs(extrap - prev_extrap) < stab_tol:
            return LinearizationRule(
                nodes=np.concatenate([nodes_f, nodes_c]),
                weights=np.concatenate([4.0 * weights_f, -weights_c]) / 3.0,
                kind="contour",
            )
        prev_extrap = extrap
        nodes_c, weights_c, probe_c = nodes_f, weights_f, probe_f
    raise ContourError("contour pinching: the rule did not stabilize (parameters too close to the axis)")


@dataclass
class FlowDeviationResult:
    """Deviation of a chain from its deterministic term along the flow."""

    times: np.ndarray
    deviation: np.ndarray
    envelope: np.ndarray
    zpaths: np.ndarray
    terminal_ratio: float
    max_over_time_ratio: float


def flow_deviation_track(
    w0: np.ndarray,
    z_targets: Sequence[complex],
    observables: Sequence[np.ndarray],
    t_final: float,
    steps: int,
    rng: np.random.Generator,
    cumulants: nc_comb.FreeCumulants | None = None,
) -> FlowDeviationResult:
    """Co-evolve the matrix flow and its characteristics, tracking the
    deviation <(G_t - M_t) A> at every step.

    The matrix follows the pathwise Euler-Maruyama update, the spectral
    parameters follow the characteristic ODE shot backward from the
    targets, and the deviation is evaluated by direct inversion so no
    step needs a full factorization.  The deviation is reported against
    the standard-deviation-size envelope at the running scale, and the
    summary ratios divide by the terminal envelope.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    if t_final == 0:
        steps = 0
        h = 0.0
    else:
        h = t_final / steps
        if h > 0.01 + 1e-15:
            raise ValueError("pathwise step exceeds the h <= 0.01 guard")
    k = len(z_targets)
    if len(observables) != k:
        raise GuardError("need as many observables as spectral parameters")
    cumulants = cumulants if cumulants is not None else nc_comb.FreeCumulants()
    n = w0.shape[0]
    symmetry = "complex-hermitian" if np.iscomplexobj(w0) else "real-symmetric"
    if t_final > 0:
        zs = [shoot_initial_condition(z, t_final) for z in z_targets]
    else:
        zs = [complex(z) for z in z_targets]
    w = np.array(w0, copy=True)
    eye = np.eye(n)
    svals = [schatten.singular_values(a) for a in observables]

    times = np.empty(steps + 1)
    deviation = np.empty(steps + 1, dtype=complex)
    envelope = np.empty(steps + 1)
    zpaths = np.empty((steps + 1, k), dtype=complex)

    def record(idx: int, t: float):
        gs = [np.linalg.inv(w - z * eye) for z in zs]
        chain = gs[0] @ observables[0]
        for i in range(1, k):
            chain = chain @ gs[i] @ observables[i]
        emp = complex(np.trace(chain)) / n
        det = mterm.m_chain(zs, list(observables[:-1]), closing=observables[-1], cumulants=cumulants).traced_value
        ell_t = schatten.chain_ell(zs)
        sizes = schatten.size_report(ell_t, svals)
        times[idx] = t
        deviation[idx] = emp - det
        envelope[idx] = sizes.sd_size / n
        zpaths[idx] = zs

    record(0, 0.0)
    for step in range(1, steps + 1):
        w = (1.0 - h / 2.0) * w + math.sqrt(h) * gaussian_wigner(n, symmetry, rng)
        zs = [integrate_characteristic(z, h).z_end for z in zs]
        record(step, step * h)

    terminal_env = envelope[-1]
    return FlowDeviationResult(
        times=times,
        deviation=deviation,
        envelope=envelope,
        zpaths=zpaths,
        terminal_ratio=float(abs(deviation[-1]) / terminal_env),
        max_over_time_ratio=float(np.max(np.abs(deviation)) / terminal_env),
    )
