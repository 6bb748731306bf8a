"""Hyperspectral pansharpening: classical fusion methods, Wald-protocol
degradation, quality indices and a benchmark campaign runner."""

from .core import FusionResult, ImageCube, PanImage, SensorModel, SubspaceModel

__version__ = "0.1.0"

__all__ = ["FusionResult", "ImageCube", "PanImage", "SensorModel", "SubspaceModel",
           "__version__"]
