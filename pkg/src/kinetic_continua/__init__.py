"""Kinetic continua: tensor balance laws of grain ensembles, a particle oracle, a grid solver and closed forms."""

__version__ = "0.1.0"

from . import analytic, constitutive, errors, particles, temperance, tensors
from .constitutive import MaterialParams

__all__ = ["MaterialParams", "__version__", "analytic", "constitutive", "errors", "particles", "temperance", "tensors"]
