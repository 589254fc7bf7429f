"""Willmore-type energies on PL and Loop subdivision surfaces, and their constrained minimization."""

__version__ = "0.1.0"
