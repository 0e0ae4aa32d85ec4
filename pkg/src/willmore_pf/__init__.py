"""Phase-field Willmore flow laboratory.

Layer profiles, tubular geometry, sharp-interface reference solutions,
matched-asymptotic approximate solutions, the fourth-order phase-field
solver, and the spectral decomposition checks, plus an experiment harness.
"""

__version__ = "0.1.0"
