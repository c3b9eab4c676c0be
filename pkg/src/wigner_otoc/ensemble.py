"""Wigner ensembles, spectral factorizations, and the matrix flow.

Sampling is keyed by a counter-based splittable RNG so every
(seed, sample index, purpose) triple gets an independent, reproducible
stream under any execution schedule.  The Ornstein-Uhlenbeck evolution
offers a distributionally exact two-point update for statistics and an
Euler-Maruyama path for flow tracking; spectral parameters ride the
characteristic ODE of the semicircle flow.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import semicircle

__all__ = [
    "WignerSpec",
    "SpectralFactorization",
    "CharTrajectory",
    "AxisCrossingError",
    "EigendecompositionError",
    "rng_for",
    "sample_wigner",
    "gaussian_wigner",
    "eigendecompose",
    "ou_evolve",
    "integrate_characteristic",
    "shoot_initial_condition",
    "dist_to_bulk",
]

Symmetry = Literal["real-symmetric", "complex-hermitian"]
EntryLaw = Literal["gaussian", "rademacher", "uniform"]

OU_TIME_GUARD = 10.0
OU_MAX_STEP = 0.01
AXIS_GUARD = 1e-6
ODE_TOL = 1e-9


class AxisCrossingError(RuntimeError):
    """A characteristic trajectory came within the guard of the real axis."""

    def __init__(self, t_cross: float):
        super().__init__(f"trajectory reached |Im z| < {AXIS_GUARD} near t = {t_cross:.6g}")
        self.t_cross = t_cross


class EigendecompositionError(RuntimeError):
    """Eigensolver failed to converge on a sample."""


@dataclass(frozen=True)
class WignerSpec:
    """Ensemble description: dimension, symmetry class, entry law, seed.

    Entry laws are standardized so the off-diagonal entries have mean
    zero and unit second absolute moment; the complex case has vanishing
    second moment of the off-diagonal entries.
    """

    n: int
    symmetry: Symmetry = "complex-hermitian"
    entry_law: EntryLaw = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("dimension must be at least 2")
        if self.symmetry not in ("real-symmetric", "complex-hermitian"):
            raise ValueError(f"unknown symmetry {self.symmetry!r}")
        if self.entry_law not in ("gaussian", "rademacher", "uniform"):
            raise ValueError(f"unknown entry law {self.entry_law!r}")


@dataclass
class SpectralFactorization:
    """Eigenvalues (ascending) and orthonormal eigenvectors of one sample."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


@dataclass
class CharTrajectory:
    """Characteristic trajectory with the local quantities along the path."""

    times: np.ndarray
    zpath: np.ndarray
    eta_path: np.ndarray = field(default=None)
    rho_path: np.ndarray = field(default=None)
    ell_path: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.eta_path is None:
            self.eta_path = np.abs(self.zpath.imag)
        if self.rho_path is None:
            self.rho_path = np.abs(np.imag(semicircle.m_sc(self.zpath))) / math.pi
        if self.ell_path is None:
            self.ell_path = self.eta_path * self.rho_path

    @property
    def z_end(self) -> complex:
        return complex(self.zpath[-1])


def rng_for(seed: int, index: int = 0, purpose: str = "") -> np.random.Generator:
    """Independent generator for a (seed, sample index, purpose) triple."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index, tag))
    return np.random.Generator(np.random.PCG64(ss))


def _standardized(rng: np.random.Generator, law: EntryLaw, size) -> np.ndarray:
    if law == "gaussian":
        return rng.standard_normal(size)
    if law == "rademacher":
        return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
    # centered uniform with unit variance
    return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size)


def sample_wigner(spec: WignerSpec, index: int = 0, purpose: str = "wigner") -> np.ndarray:
    """One Hermitian Wigner sample, entries scaled by N^(-1/2).

    Deterministic in (spec.seed, index, purpose).  The real-symmetric
    Gaussian case is exactly GOE (diagonal variance 2/N), the complex
    Gaussian case exactly GUE (diagonal variance 1/N).
    """
    rng = rng_for(spec.seed, index, purpose)
    n = spec.n
    iu = np.triu_indices(n, k=1)
    scale = 1.0 / math.sqrt(n)
    if spec.symmetry == "real-symmetric":
        w = np.zeros((n, n))
        w[iu] = _standardized(rng, spec.entry_law, iu[0].size)
        w = w + w.T
        w[np.diag_indices(n)] = math.sqrt(2.0) * _standardized(rng, spec.entry_law, n)
        return scale * w
    w = np.zeros((n, n), dtype=complex)
    re = _standardized(rng, spec.entry_law, iu[0].size)
    im = _standardized(rng, spec.entry_law, iu[0].size)
    w[iu] = (re + 1j * im) / math.sqrt(2.0)
    w = w + w.conj().T
    w[np.diag_indices(n)] = _standardized(rng, spec.entry_law, n)
    return scale * w


def gaussian_wigner(n: int, symmetry: Symmetry, rng: np.random.Generator) -> np.ndarray:
    """GOE/GUE sample drawn from an existing generator (flow noise)."""
    iu = np.triu_indices(n, k=1)
    scale = 1.0 / math.sqrt(n)
    if symmetry == "real-symmetric":
        w = np.zeros((n, n))
        w[iu] = rng.standard_normal(iu[0].size)
        w = w + w.T
        w[np.diag_indices(n)] = math.sqrt(2.0) * rng.standard_normal(n)
        return scale * w
    w = np.zeros((n, n), dtype=complex)
    w[iu] = (rng.standard_normal(iu[0].size) + 1j * rng.standard_normal(iu[0].size)) / math.sqrt(2.0)
    w = w + w.conj().T
    w[np.diag_indices(n)] = rng.standard_normal(n)
    return scale * w


def eigendecompose(w: np.ndarray) -> SpectralFactorization:
    """Full Hermitian factorization; the single source for resolvents."""
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(w)
    except np.linalg.LinAlgError as exc:
        raise EigendecompositionError(str(exc)) from exc
    return SpectralFactorization(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def ou_evolve(
    w0: np.ndarray,
    t: float,
    rng: np.random.Generator,
    mode: Literal["exact", "euler-maruyama"] = "exact",
    h: float = OU_MAX_STEP,
    symmetry: Symmetry | None = None,
) -> np.ndarray:
    """Ornstein-Uhlenbeck evolution of a Wigner matrix over time t.

    "exact" uses the distributionally exact two-point update
    e^(-t/2) W_0 + sqrt(1 - e^(-t)) G with fresh Gaussian noise; the
    first two entry moments are preserved exactly.  "euler-maruyama"
    simulates the path with step h <= 0.01 for flow-deviation studies.
    """
    if t < 0 or t > OU_TIME_GUARD:
        raise ValueError(f"flow time must lie in [0, {OU_TIME_GUARD}]")
    symmetry = symmetry or ("complex-hermitian" if np.iscomplexobj(w0) else "real-symmetric")
    n = w0.shape[0]
    if t == 0:
        return w0.copy()
    if mode == "exact":
        fresh = gaussian_wigner(n, symmetry, rng)
        return math.exp(-t / 2.0) * w0 + math.sqrt(1.0 - math.exp(-t)) * fresh
    if mode != "euler-maruyama":
        raise ValueError(f"unknown mode {mode!r}")
    if h > OU_MAX_STEP:
        raise ValueError(f"pathwise step must satisfy h <= {OU_MAX_STEP}")
    steps = max(1, int(round(t / h)))
    dt = t / steps
    w = w0.copy()
    for _ in range(steps):
        w = (1.0 - dt / 2.0) * w + math.sqrt(dt) * gaussian_wigner(n, symmetry, rng)
    return w


def _char_field(z: complex) -> complex:
    return -semicircle.m_sc(z) - z / 2.0


def _rk4_step(z: complex, dt: float, sign: float) -> tuple[complex | None, bool]:
    """One classic step; reports a breach (and no value) as soon as a
    stage point leaves the starting half-plane, i.e. the step would
    span the branch cut."""
    f = lambda y: sign * _char_field(y)
    k1 = f(z)
    p2 = z + 0.5 * dt * k1
    if p2.imag * z.imag <= 0:
        return None, True
    k2 = f(p2)
    p3 = z + 0.5 * dt * k2
    if p3.imag * z.imag <= 0:
        return None, True
    k3 = f(p3)
    p4 = z + dt * k3
    if p4.imag * z.imag <= 0:
        return None, True
    k4 = f(p4)
    return z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), False


def integrate_characteristic(
    z_start: complex,
    t_final: float,
    direction: Literal["forward", "backward"] = "forward",
    tol: float = ODE_TOL,
    grid: np.ndarray | None = None,
) -> CharTrajectory:
    """Integrate the characteristic ODE dz/dt = -m(z) - z/2.

    Classic fourth-order steps with adaptive halving against a
    step-doubling error estimate; forward integration decreases
    |Im z|.  Aborts if the trajectory comes within the axis guard.
    When `grid` is given, those times (which must be increasing and end
    at t_final) are integrated exactly and recorded.
    """
    z = complex(z_start)
    if z.imag == 0:
        raise ValueError("characteristic start must be off the real axis")
    sign = 1.0 if direction == "forward" else -1.0
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    times = [0.0]
    zs = [z]
    if grid is not None:
        checkpoints = [float(s) for s in grid if s > 0.0]
    else:
        checkpoints = []
    checkpoints.append(float(t_final))

    t = 0.0
    dt = min(1e-2, max(t_final, 1e-12))
    for target in checkpoints:
        while t < target - 1e-15:
            dt = min(dt, target - t)
            full, breach = _rk4_step(z, dt, sign)
            if not breach:
                mid, breach = _rk4_step(z, dt / 2.0, sign)
            if not breach:
                half, breach = _rk4_step(mid, dt / 2.0, sign)
            if breach:
                raise AxisCrossingError(t + dt)
            err = abs(full - half) / 15.0
            if err > tol:
                if dt <= 1e-12:
                    raise AxisCrossingError(t)
                dt /= 2.0
                continue
            z_new = half
            if abs(z_new.imag) < AXIS_GUARD or z_new.imag * z.imag < 0:
                raise AxisCrossingError(t + dt)
            t += dt
            z = z_new
            times.append(t)
            zs.append(z)
            if err < tol / 32.0:
                dt *= 2.0
        # land exactly on the checkpoint in the record
        times[-1] = target
    return CharTrajectory(times=np.array(times), zpath=np.array(zs, dtype=complex))


def shoot_initial_condition(z_target: complex, t_flow: float, tol: float = ODE_TOL) -> complex:
    """Initial condition whose characteristic reaches z_target at time t_flow.

    Obtained by backward integration; the returned point sits at distance
    of order t_flow from the bulk spectrum, so forward propagation starts
    in the global regime.
    """
    if not 0 < t_flow <= 1.0:
        raise ValueError("flow time must lie in (0, 1]")
    traj = integrate_characteristic(z_target, t_flow, direction="backward", tol=tol)
    return traj.z_end


def dist_to_bulk(z: complex) -> float:
    """Distance from z to the limiting spectrum [-2, 2]."""
    x = min(max(z.real, -2.0), 2.0)
    return abs(z - x)
