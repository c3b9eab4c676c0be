"""Non-crossing partition combinatorics.

Enumeration of the non-crossing partitions of {1..k}, Kreweras
complements, and the free-cumulant transform of the semicircle divided
differences by Moebius-style recursion over the non-crossing lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import semicircle

__all__ = [
    "NCPartition",
    "enumerate_nc",
    "kreweras",
    "catalan",
    "FreeCumulants",
    "free_cumulant",
]

MAX_GROUND_SET = 12


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


@dataclass(frozen=True)
class NCPartition:
    """A non-crossing set partition of {1..k} in canonical form.

    Blocks are ascending tuples, sorted by their minimum element.
    Construction validates disjointness, coverage and the non-crossing
    property.
    """

    k: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = set()
        for block in self.blocks:
            if not block:
                raise ValueError("empty block")
            if list(block) != sorted(block):
                raise ValueError(f"block {block} is not ascending")
            seen.update(block)
        if seen != set(range(1, self.k + 1)):
            raise ValueError("blocks do not partition {1..k}")
        if sum(len(b) for b in self.blocks) != self.k:
            raise ValueError("blocks overlap")
        if [b[0] for b in self.blocks] != sorted(b[0] for b in self.blocks):
            raise ValueError("blocks are not sorted by minimum")
        if not _is_noncrossing(self.k, self.blocks):
            raise ValueError("partition has a crossing")

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self, element: int) -> tuple[int, ...]:
        for block in self.blocks:
            if element in block:
                return block
        raise KeyError(element)


def _is_noncrossing(k: int, blocks) -> bool:
    # Stack scan: revisiting a block that is not the innermost open one
    # is exactly a crossing a < b < c < d.
    block_id = {}
    remaining = {}
    for idx, block in enumerate(blocks):
        remaining[idx] = len(block)
        for el in block:
            block_id[el] = idx
    stack: list[int] = []
    for el in range(1, k + 1):
        idx = block_id[el]
        if stack and stack[-1] == idx:
            pass
        elif idx in stack:
            return False
        else:
            stack.append(idx)
        remaining[idx] -= 1
        if remaining[idx] == 0:
            stack.pop()
    return True


def _canonical(blocks) -> tuple[tuple[int, ...], ...]:
    return tuple(sorted((tuple(sorted(b)) for b in blocks), key=lambda b: b[0]))


@lru_cache(maxsize=None)
def _nc_blocks_of_length(length: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    """All non-crossing partitions of {0..length-1} as raw block tuples.

    Recursive block-insertion: element 0 either stands alone, or its next
    block-mate c seals off the open interval {1..c-1}, which is then
    partitioned independently; the remainder {c..} is partitioned with 0
    merged into the block of c.  Linear in the output size.
    """
    if length == 0:
        return ((),)
    out = []
    for tail in _nc_blocks_of_length(length - 1):
        shifted = tuple(tuple(e + 1 for e in b) for b in tail)
        out.append(((0,),) + shifted)
    for c in range(1, length):
        inners = _nc_blocks_of_length(c - 1)
        outers = _nc_blocks_of_length(length - c)
        for outer in outers:
            merged_outer = []
            for block in outer:
                block = tuple(e + c for e in block)
                if block[0] == c:
                    block = (0,) + block
                merged_outer.append(block)
            merged_outer = tuple(merged_outer)
            for inner in inners:
                inner_shifted = tuple(tuple(e + 1 for e in b) for b in inner)
                out.append(merged_outer + inner_shifted)
    return tuple(out)


def enumerate_nc(k: int) -> list[NCPartition]:
    """Every non-crossing partition of {1..k}, canonical, Catalan(k) many."""
    if not 1 <= k <= MAX_GROUND_SET:
        raise ValueError(f"ground-set size must be in [1, {MAX_GROUND_SET}], got {k}")
    return [
        NCPartition(k, _canonical(tuple(tuple(e + 1 for e in b) for b in blocks)))
        for blocks in _nc_blocks_of_length(k)
    ]


def kreweras(pi: NCPartition) -> NCPartition:
    """Kreweras complement of a non-crossing partition.

    Computed on the interleaved circle 1, 1', 2, 2', ..., k, k' through
    the cycle decomposition of sigma_pi^-1 composed with the long cycle
    (1 2 ... k); satisfies |pi| + |K(pi)| = k + 1.
    """
    k = pi.k
    sigma_inv = {}
    for block in pi.blocks:
        for i, el in enumerate(block):
            nxt = block[(i + 1) % len(block)]
            sigma_inv[nxt] = el
    blocks = []
    unseen = set(range(1, k + 1))
    while unseen:
        start = min(unseen)
        cycle = [start]
        unseen.remove(start)
        cur = sigma_inv[start % k + 1]
        while cur != start:
            cycle.append(cur)
            unseen.remove(cur)
            cur = sigma_inv[cur % k + 1]
        blocks.append(tuple(sorted(cycle)))
    return NCPartition(k, _canonical(blocks))


def _memo_key(zs: Sequence[complex]):
    # Exact bit patterns of the parameters, order-insensitive.
    return tuple(sorted(((z.real, z.imag) for z in zs)))


class FreeCumulants:
    """Free cumulants m_o[.] of the divided differences m[.].

    The recursion inverts the moment-cumulant relation over the
    non-crossing lattice: m[S] equals the sum over pi in NC(S) of the
    product of m_o over the blocks of pi.  Values are memoized on the
    exact bit patterns of the spectral-parameter multiset, so repeated
    evaluation in chain sums is cheap and bit-reproducible.
    """

    def __init__(self, tol=semicircle.QUAD_TOL):
        self.tol = tol
        self._m: dict = {}
        self._mo: dict = {}

    def m(self, zs: Sequence[complex]) -> complex:
        key = _memo_key(zs)
        if key not in self._m:
            self._m[key] = semicircle.divided_difference(zs, tol=self.tol)
        return self._m[key]

    def m_circ(self, zs: Sequence[complex]) -> complex:
        zs = [complex(z) for z in zs]
        if len(zs) > MAX_GROUND_SET:
            raise ValueError(f"free cumulants limited to {MAX_GROUND_SET} parameters")
        key = _memo_key(zs)
        if key in self._mo:
            return self._mo[key]
        size = len(zs)
        value = self.m(zs)
        if size > 1:
            corrections = []
            for pi in enumerate_nc(size):
                if len(pi) < 2:
                    continue
                prod = 1.0 + 0.0j
                for block in pi.blocks:
                    prod *= self.m_circ([zs[i - 1] for i in block])
                corrections.append(prod)
            value -= complex(np.sum(np.array(corrections, dtype=complex)))
        self._mo[key] = value
        return value


def free_cumulant(zs: Sequence[complex], cache: FreeCumulants | None = None) -> complex:
    """Free cumulant of the divided differences at a parameter multiset."""
    cache = cache if cache is not None else FreeCumulants()
    return cache.m_circ(zs)
