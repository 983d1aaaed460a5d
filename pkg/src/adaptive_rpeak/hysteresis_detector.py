"""Lightweight hysteresis R-peak detector (alias of :mod:`adaptive_rpeak.hysteresis`)."""

from .hysteresis import *  # noqa: F401,F403
