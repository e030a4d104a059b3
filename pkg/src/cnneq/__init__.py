"""Channel equalization toolkit: channel simulators, FIR/Volterra/CNN
equalizers, quantization-aware training, design-space exploration and a
model of the stream-partitioned hardware pipeline."""

__version__ = "0.1.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
