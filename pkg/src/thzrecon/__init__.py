"""Simulation and reconstruction toolkit for THz-streaking-assisted photoionization spectroscopy."""

__version__ = "0.1.0"
