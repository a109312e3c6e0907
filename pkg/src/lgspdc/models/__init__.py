"""Packaged dispersion-model coefficient files (JSON)."""
