"""Thompson-CHM: convex hull membership testing with multi-armed bandits."""

__version__ = "1.0.0"
