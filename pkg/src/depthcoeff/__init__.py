"""Depth Coefficients for depth completion."""
