"""fracflow: solvers for fractional linear equations of Caputo and Riemann-Liouville type."""

__version__ = "0.1.0"
