"""Detection scoring and FROC analysis."""
