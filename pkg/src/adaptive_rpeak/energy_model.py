"""Duty-cycle energy model (alias of :mod:`adaptive_rpeak.energy`)."""

from .energy import *  # noqa: F401,F403
