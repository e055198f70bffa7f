"""jointseg - learned edge/cloud image codec with a joint segmentation decoder."""

from .main import main

__version__ = "0.1.0"
__all__ = ["main"]
