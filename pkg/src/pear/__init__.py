"""Weather forecasting on an equal-area spherical grid."""

__version__ = "0.1.0"

from .grid import GridSpec, Scheme, SphereCoord
from .model import ModelConfig, PearModel
from .state import NormStats, VolumetricState

__all__ = [
    "GridSpec",
    "ModelConfig",
    "NormStats",
    "PearModel",
    "Scheme",
    "SphereCoord",
    "VolumetricState",
    "__version__",
]
