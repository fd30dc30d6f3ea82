"""Gibbs-sampling sensor subset selection for centralized estimation."""

__version__ = "0.1.0"
