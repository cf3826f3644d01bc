"""Reduced-order PLL stability toolkit for aggregated wind power plants."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import ComputationError, InputError, TlroaError  # noqa: E402

__all__ = ["__version__", "TlroaError", "InputError", "ComputationError"]
