"""Numerical analysis and simulation of non-stationary multivariate Hawkes processes."""
