"""Tabular data substrate and tabular tools."""
