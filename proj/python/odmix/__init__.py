"""Poisson mixture OD-matrix models and traffic assignment."""

from ._odmix import *  # noqa: F401,F403
from ._odmix import __version__  # noqa: F401
