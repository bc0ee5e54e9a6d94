"""Tabular learners, baseline policies and the exact value-iteration solver."""
