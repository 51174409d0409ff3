"""Selection-adjusted FAB confidence sets."""
__version__ = "0.1.0"
