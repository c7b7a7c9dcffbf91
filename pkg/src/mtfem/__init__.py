"""Continuous simplicial elements whose broken Laplacian and Hessian have
equal L2 norms, with solvers for nondivergence-form and biharmonic
problems."""

__version__ = "0.1.0"
