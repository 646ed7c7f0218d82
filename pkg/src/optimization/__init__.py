"""Differential evolution and anchor configuration search."""
