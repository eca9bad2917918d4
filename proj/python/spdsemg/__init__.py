"""SPD-matrix decoding of surface EMG on the log-Cholesky manifold."""

from spdsemg._core import *  # noqa: F401,F403
from spdsemg._core import SpdsemgError

__all__ = [name for name in dir() if not name.startswith("_")]
