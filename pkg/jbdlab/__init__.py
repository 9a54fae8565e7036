"""
jbdlab - Joint bidiagonalization for the GSVD of matrix pairs

Computes extreme generalized singular values and vectors of a large sparse
pair {A, L} by joint bidiagonalization, and measures how rounding errors
and loss of orthogonality affect the process.
"""

__version__ = "0.1.0"
__author__ = "jbdlab developers"
__description__ = "Joint bidiagonalization GSVD library and experiment runner"
