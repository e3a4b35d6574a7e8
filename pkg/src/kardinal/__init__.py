"""Cardinality-constrained portfolio selection with XY-mixer QAOA, simulated annealing and HRP."""

__version__ = "0.1.0"
