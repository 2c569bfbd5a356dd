"""Terminal velocity manifolds of a passively descending 2D glider."""

__version__ = "0.1.0"
