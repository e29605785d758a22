"""Pareto-optimal hybrid beamforming for short-packet mmWave joint sensing and communication."""

__version__ = "0.1.0"
