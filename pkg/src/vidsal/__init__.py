"""Temporal saliency toolkit: learned frame masks, per-frame Grad-CAM and
quantitative comparison for small video classifiers."""

import os

# The GEMMs in this package are small enough that BLAS threading costs more
# than it buys (roughly 2.5x the CPU time at these shapes). Single-threaded
# is both faster and easier to reason about; set before numpy loads BLAS,
# and only as a default so callers can still override.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

__version__ = "0.1.0"

from .tensor import GradientStore, ShapeError, Tape, Tensor, backward, read_vten, write_vten

__all__ = [
    "GradientStore",
    "ShapeError",
    "Tape",
    "Tensor",
    "backward",
    "read_vten",
    "write_vten",
    "__version__",
]
