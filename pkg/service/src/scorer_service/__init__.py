"""Reference implementation of the /score and /generate wire protocol."""

__version__ = "0.1.0"
