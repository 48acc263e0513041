"""HTTP front end: pydantic request/response models and their handlers."""

from .app import create_app

__all__ = ["create_app"]
