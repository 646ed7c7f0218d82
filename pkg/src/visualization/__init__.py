"""Visualization module for FROC results."""
