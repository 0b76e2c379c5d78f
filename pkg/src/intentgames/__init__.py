"""Intent demonstration in general-sum dynamic games."""

__version__ = "0.1.0"
