"""Terrain: DEM containers, D8 flow and fill-spill-merge flooding."""
