"""Operator algebra, Lindbladians, Krylov iterations and complexity analysis."""
