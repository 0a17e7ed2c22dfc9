"""Standalone converter: upstream HDF5 spike archive -> SHDB events."""

from .convert import ConversionError, convert, main

__all__ = ["ConversionError", "convert", "main"]
