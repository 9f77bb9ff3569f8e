"""Question answering over typed knowledge bases with S-expression logical forms."""

__version__ = "0.1.0"
