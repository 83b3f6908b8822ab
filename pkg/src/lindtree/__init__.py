"""Lindstedt series for perturbed oscillators: direct solver, tree expansion
and self-energy cancellation checks."""

from .coeffalg import BigFloat, CoeffPoly, QNum, parse_scalar

__version__ = "0.1.0"

__all__ = ["BigFloat", "CoeffPoly", "QNum", "parse_scalar", "__version__"]
