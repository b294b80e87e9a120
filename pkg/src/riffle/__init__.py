"""Asymmetric riffle shuffles: cutoff constants, exact small-deck oracles and Monte Carlo harnesses."""

__version__ = "0.1.0"
