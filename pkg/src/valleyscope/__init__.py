"""Ising-convention RBMs, Chimera embedding and valley analysis of sampler landscapes."""

__version__ = "0.1.0"

from .rbm import RbmParams, SpinState  # noqa: E402

__all__ = ["RbmParams", "SpinState", "__version__"]
