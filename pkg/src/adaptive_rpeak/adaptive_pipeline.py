"""Adaptive orchestration (alias of :mod:`adaptive_rpeak.adaptive`)."""

from .adaptive import *  # noqa: F401,F403
