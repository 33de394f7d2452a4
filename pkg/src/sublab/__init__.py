"""Numerical laboratory for subordinacy, Lyapunov growth and perturbation series
of half-line Schrodinger and Jacobi operators."""

__version__ = "0.1.0"
