"""Numerical toolkit for Bessel-operator semigroups on the weighted half-line."""

__version__ = "0.1.0"
