"""Constellation-precoded SVD beamforming: precoder design, diversity analysis
and Monte Carlo BER simulation."""

__version__ = "0.1.0"
