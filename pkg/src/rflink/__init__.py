"""Round-trip compensated RF frequency transfer over optical fibre."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402,F401
