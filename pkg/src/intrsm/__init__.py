"""Numerical toolkit for intrinsic semigroups of Lévy-type Schrödinger operators."""

__version__ = "0.1.0"
