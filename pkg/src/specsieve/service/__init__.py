"""HTTP service wrapping the enhancement library."""

from .app import create_app

__all__ = ["create_app"]
