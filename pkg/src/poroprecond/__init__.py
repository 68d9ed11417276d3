"""Coupled two-phase poromechanics simulator with a two-stage block preconditioner."""

__version__ = "0.1.0"
