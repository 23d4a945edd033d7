"""Memory-aware scheduling for size-heterogeneous parallel task sets."""
__version__ = "0.1.0"
