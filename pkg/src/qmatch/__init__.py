"""Two-stage retrieval and neural re-ranking of short questions."""

__version__ = "0.1.0"
