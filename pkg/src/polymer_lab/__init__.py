"""Directed polymers in random environment: exact transfer recursions,
discrete chaos expansions, and crossover-distribution numerics."""

__version__ = "0.1.0"
