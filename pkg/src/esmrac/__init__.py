"""Extremum-seeking model reference adaptive control (ES-MRAC) simulation toolkit."""

__version__ = "0.1.0"
