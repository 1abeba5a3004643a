"""Codeword-based feature decoding toolkit.

Dense tensors with reverse-mode differentiation, the holistically-guided
decoder (softmax-pooled codewords reassembled at high resolution), a toy
segmentation stack around it, a pyramid-decoder variant, and an analytic
MAC/parameter cost model.
"""

import os

# Cap BLAS/OpenMP thread pools before numpy gets imported anywhere in the
# package. HGD_THREADS is the single knob; 1 keeps runs deterministic.
_threads = os.environ.get("HGD_THREADS", "1")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)
del os, _var, _threads

from .tensor import Tensor, ComputeGraph, backward, DimensionError, ConfigError

__all__ = ["Tensor", "ComputeGraph", "backward", "DimensionError", "ConfigError"]
