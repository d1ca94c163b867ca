"""Diffusion-based jamming suppression and sparse radar target detection."""

from ._core import *  # noqa: F401,F403
from ._core import DmddError, cli

__all__ = [name for name in dir() if not name.startswith("_")]
