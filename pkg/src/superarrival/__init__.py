"""Superarrival of a Gaussian wave packet at a transient parabolic barrier."""

__version__ = "0.1.0"
