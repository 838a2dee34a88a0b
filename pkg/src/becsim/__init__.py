"""Finite-volume simulator and bound checker for the model equation
dn/dt = d/dx (x**2 dn/dx + n**2 - 2 x n) on (0, 1]."""

__version__ = "0.1.0"
