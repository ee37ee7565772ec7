"""LLM-assisted enhancement of machine-generated unit tests."""

__version__ = "1.0.0"
