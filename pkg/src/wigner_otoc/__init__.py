"""Numerical laboratory for out-of-time-ordered correlators of Wigner matrices.

Empirical OTOC/SFF/resolvent-chain statistics from sampled ensembles,
deterministic predictions built from semicircle analytics and
non-crossing-partition combinatorics, and weighted-Schatten error
envelopes to compare the two at desk scale.
"""

__version__ = "0.1.0"

from . import chains, ensemble, expcli, mterm, nc_comb, otoc, schatten, semicircle  # noqa: F401
