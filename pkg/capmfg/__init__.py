"""
Solver for a mean-field game of spatially interacting firms accumulating capital.
"""

__version__ = '1.0.0'
