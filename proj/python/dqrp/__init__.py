"""Deep quantile regression with ReQU networks and a non-crossing penalty."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
