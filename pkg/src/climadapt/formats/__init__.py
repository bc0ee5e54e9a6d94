"""Readers and writers for the on-disk formats."""
