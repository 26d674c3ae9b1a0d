"""Numerical laboratory for the DOZZ formula of Liouville conformal field theory."""

__version__ = "0.1.0"
