"""Asymptotic-preserving IMEX-DG solver for the compressible Euler equations."""

from . import cases, diagnostics, eos, mesh, operators, solver, tableau

__all__ = ["cases", "diagnostics", "eos", "mesh", "operators", "solver", "tableau"]

__version__ = "0.1.0"
