"""Region-assembly person individuation: solver library and CLI."""

__version__ = "0.1.0"
