"""Interval-CVaR regression: risk measures, DCA fitting and robustness experiments."""

__version__ = "0.1.0"
