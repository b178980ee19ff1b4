"""Multi-view low-light image enhancement toolkit."""

__version__ = "0.1.0"

from .backend import ACTIVE_BACKEND

__all__ = ["ACTIVE_BACKEND", "__version__"]
