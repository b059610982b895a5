"""Theme-targeted passage retrieval and evaluation for systematic reviews."""

__version__ = "0.1.0"
