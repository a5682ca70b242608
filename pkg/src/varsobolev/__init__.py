"""Variable-exponent Sobolev inequalities checked through discrete optimal transport."""

__version__ = "0.1.0"
