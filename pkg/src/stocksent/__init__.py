"""News-sentiment driven stock movement prediction harness."""

__version__ = "0.1.0"
