"""Capacitor-voltage activity sensing simulator for kinetic-energy-harvesting wearables."""

__version__ = "0.1.0"
