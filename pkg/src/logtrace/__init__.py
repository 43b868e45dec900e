"""Two-stage wood log cross-section recognition toolkit."""
__version__ = "0.1.0"
