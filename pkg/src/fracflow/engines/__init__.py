"""Solver engines: Monte Carlo over simulated paths and deterministic quadrature."""
