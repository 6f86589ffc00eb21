"""Finite-strain gradient-enhanced damage with neural-network constitutive models."""

from .fem.element import BACKEND
from .materials import ClosedFormParams
from .networks import DataDrivenParams, load_weights, save_weights

__version__ = "0.1.0"

__all__ = ["BACKEND", "ClosedFormParams", "DataDrivenParams", "load_weights", "save_weights", "__version__"]
