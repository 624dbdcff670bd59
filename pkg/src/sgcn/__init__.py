"""Sequence-to-sequence translation with syntactic GCN encoders."""
from .tensor import Tape, Tensor, precision

__version__ = "0.1.0"

__all__ = ["Tape", "Tensor", "precision", "__version__"]
