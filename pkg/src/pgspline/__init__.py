"""Extremal perfect g-splines and weighted differentiation moduli on the half-line."""
