"""Deterministic approximation of resolvent chains.

The deterministic limit of G_1 B_1 ... B_(k-1) G_k is a sum over the
non-crossing partitions of {1..k}: each partition contributes the
partial trace of the observables over its Kreweras complement, weighted
by the product of free cumulants of the divided differences over its
blocks.  This module evaluates that sum and the bounds that control it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nc_comb, schatten, semicircle
from .nc_comb import NCPartition
from .schatten import WeightedNormSpec

__all__ = [
    "MChainResult",
    "partial_trace",
    "m_chain",
    "m_bound_avg",
    "m_bound_iso",
    "partition_summand_bound",
    "check_traceless",
]

MAX_CHAIN = 8

TRACELESS_RTOL = 1e-12


@dataclass
class MChainResult:
    """Deterministic chain approximation: the matrix and, when a closing
    observable is supplied, its normalized trace against it."""

    matrix: np.ndarray
    traced_value: complex | None = None


def check_traceless(a: np.ndarray, name: str = "observable") -> None:
    a = np.asarray(a)
    scale = np.abs(a).max()
    if scale == 0:
        return
    if abs(np.trace(a)) > TRACELESS_RTOL * a.shape[0] * scale:
        raise ValueError(f"{name} is not traceless to working tolerance")


def partial_trace(pi: NCPartition, bs: Sequence[np.ndarray]) -> tuple[complex, np.ndarray | None]:
    """Partial trace of B_1..B_(k-1) over a partition of {1..k}.

    Returns (scalar, matrix): the scalar collects the normalized traces
    of the in-block products (ascending index order) over every block
    not containing k; the matrix is the ordered product over the block
    containing k, with None standing for the identity (scalar-only fast
    path when that block is the singleton {k}).
    """
    k = pi.k
    if len(bs) != k - 1:
        raise ValueError(f"need {k - 1} matrices for a partition of [{k}]")
    shapes = {np.asarray(b).shape for b in bs}
    if len(shapes) > 1 or any(s[0] != s[1] for s in shapes):
        raise ValueError("observables must be square matrices of one dimension")
    block_k = pi.block_of(k)
    scalar = 1.0 + 0.0j
    for block in pi.blocks:
        if k in block:
            continue
        prod = None
        for j in block:
            prod = bs[j - 1] if prod is None else prod @ bs[j - 1]
        n = prod.shape[0]
        scalar *= complex(np.trace(prod)) / n
    matrix = None
    for j in block_k:
        if j == k:
            continue
        matrix = bs[j - 1] if matrix is None else matrix @ bs[j - 1]
    return scalar, matrix


def m_chain(
    zs: Sequence[complex],
    bs: Sequence[np.ndarray],
    closing: np.ndarray | None = None,
    cumulants: nc_comb.FreeCumulants | None = None,
    n: int | None = None,
) -> MChainResult:
    """Deterministic approximation M(z_1, B_1, ..., B_(k-1), z_k).

    Sums over the non-crossing partitions of {1..k}: the Kreweras
    complement routes the observables through the partial trace, the
    partition itself weights the term with free cumulants of the
    divided differences.  Partition summands are reduced by pairwise
    summation so the result does not depend on evaluation order.
    """
    zs = [complex(z) for z in zs]
    k = len(zs)
    if not 1 <= k <= MAX_CHAIN:
        raise ValueError(f"chain length must be in [1, {MAX_CHAIN}], got {k}")
    if len(bs) != k - 1:
        raise ValueError(f"need {k - 1} observables for {k} spectral parameters")
    if any(z.imag == 0 for z in zs):
        raise ValueError("spectral parameters must be off the real axis")
    cumulants = cumulants if cumulants is not None else nc_comb.FreeCumulants()

    if k == 1:
        if closing is not None:
            n = closing.shape[0]
        elif n is None:
            raise ValueError("k = 1 without a closing observable needs an explicit dimension")
        m1 = cumulants.m_circ([zs[0]])
        matrix = m1 * np.eye(n, dtype=complex)
        traced = m1 * complex(np.trace(closing)) / n if closing is not None else None
        return MChainResult(matrix=matrix, traced_value=traced)

    n = np.asarray(bs[0]).shape[0]
    identity_coeff = []
    dense_terms = []
    traced_terms = [] if closing is not None else None
    for pi in nc_comb.enumerate_nc(k):
        weight = 1.0 + 0.0j
        for block in pi.blocks:
            weight *= cumulants.m_circ([zs[i - 1] for i in block])
        scalar, matrix = partial_trace(nc_comb.kreweras(pi), bs)
        coeff = weight * scalar
        if matrix is None:
            identity_coeff.append(coeff)
            if traced_terms is not None:
                traced_terms.append(coeff * complex(np.trace(closing)) / n)
        else:
            dense_terms.append(coeff * matrix)
            if traced_terms is not None:
                traced_terms.append(coeff * complex(np.trace(matrix @ closing)) / n)
    total = np.zeros((n, n), dtype=complex)
    if dense_terms:
        total = np.sum(np.stack(dense_terms), axis=0)
    if identity_coeff:
        total += complex(np.sum(np.array(identity_coeff))) * np.eye(n)
    traced = complex(np.sum(np.array(traced_terms))) if traced_terms else None
    return MChainResult(matrix=total, traced_value=traced)


def m_bound_avg(zs: Sequence[complex], observables: Sequence[np.ndarray]) -> float:
    """Bound ell * prod_i |||A_i|||_(k, ell) on |<M A_k>|, zero for k = 1.

    Inputs must be traceless; the implicit constant of the underlying
    inequality is not included (callers measure the ratio).
    """
    k = len(observables)
    if len(zs) != k:
        raise ValueError("need as many spectral parameters as observables")
    for a in observables:
        check_traceless(a)
    if k == 1:
        return 0.0
    ell = schatten.chain_ell(zs)
    bound = ell
    for a in observables:
        bound *= schatten.weighted_norm(a, WeightedNormSpec(p=k, ell=ell))
    return bound


def m_bound_iso(zs: Sequence[complex], observables: Sequence[np.ndarray]) -> float:
    """Bound prod_i |||A_i|||_(inf, ell) on the isotropic matrix element.

    Takes k + 1 spectral parameters and k traceless observables; unit
    test vectors carry no extra factor.
    """
    k = len(observables)
    if len(zs) != k + 1:
        raise ValueError("isotropic bound needs one more spectral parameter than observables")
    for a in observables:
        check_traceless(a)
    ell = schatten.chain_ell(zs)
    bound = 1.0
    for a in observables:
        bound *= schatten.weighted_norm(a, WeightedNormSpec(p=math.inf, ell=ell))
    return bound


def partition_summand_bound(
    pi: NCPartition,
    zs: Sequence[complex],
    observables: Sequence[np.ndarray],
    cumulants: nc_comb.FreeCumulants | None = None,
) -> tuple[complex, float]:
    """Single-partition summand of <M A_k> and its per-partition bound.

    For a partition with k + 1 - s blocks the bound is
    eta^(1-s) * prod over blocks S of the Kreweras complement with
    |S| >= 2 of prod_{j in S} <|A_j|^|S|>^(1/|S|); partitions whose
    complement contains a singleton block contribute exactly zero for
    traceless observables.
    """
    k = pi.k
    if len(zs) != k or len(observables) != k:
        raise ValueError("need k spectral parameters and k observables")
    cumulants = cumulants if cumulants is not None else nc_comb.FreeCumulants()
    closing = observables[k - 1]
    n = closing.shape[0]
    weight = 1.0 + 0.0j
    for block in pi.blocks:
        weight *= cumulants.m_circ([zs[i - 1] for i in block])
    complement = nc_comb.kreweras(pi)
    scalar, matrix = partial_trace(complement, observables[: k - 1])
    if matrix is None:
        summand = weight * scalar * complex(np.trace(closing)) / n
    else:
        summand = weight * scalar * complex(np.trace(matrix @ closing)) / n
    eta = min(abs(complex(z).imag) for z in zs)
    s = k + 1 - len(pi)
    bound = eta ** (1 - s)
    for block in complement.blocks:
        if len(block) < 2:
            continue
        for j in block:
            bound *= schatten.schatten_moment(observables[j - 1], float(len(block)))
    return summand, bound
