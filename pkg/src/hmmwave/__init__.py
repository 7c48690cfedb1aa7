"""Heterogeneous multiscale method for wave equations with oscillatory coefficients."""

from . import coefficient, fd_core, flux_cache, kernel, macro, micro, reference

__version__ = "0.1.0"

__all__ = ["coefficient", "fd_core", "flux_cache", "kernel", "macro", "micro", "reference"]
