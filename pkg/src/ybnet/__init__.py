"""Simulation and analysis toolkit for telecom-band atom-photon entanglement in tweezer arrays."""

__version__ = "0.1.0"
