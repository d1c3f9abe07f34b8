"""Adaptive weight decay experiments (C++ core)."""

from ._awdlab import *  # noqa: F401,F403
from ._awdlab import __doc__  # noqa: F401
