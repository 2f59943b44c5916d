"""Automated calibration of single- and two-qubit gates against a simulated transmon pair."""

__version__ = "0.1.0"
