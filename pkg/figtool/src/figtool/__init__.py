"""Figure rendering for wigner-otoc CSV artifacts."""

__version__ = "0.1.0"

from .io import read_curve, read_residuals  # noqa: F401
from .plots import FigureSpec, render  # noqa: F401
