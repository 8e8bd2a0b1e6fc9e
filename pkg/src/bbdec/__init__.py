"""Decoding workbench for bivariate bicycle quantum LDPC codes.

Builds BB codes and memory-experiment circuits under circuit-level
depolarizing noise, extracts detector error models, samples shots, and
decodes them with belief propagation + ordered statistics, a recurrent
transformer with code-aware self-attention, or an exact maximum-likelihood
oracle for small models.
"""

from . import bench, bposd, circuits, codes, faultsim, gf2, model, nn, oracle

__version__ = "0.1.0"

__all__ = [
    "bench",
    "bposd",
    "circuits",
    "codes",
    "faultsim",
    "gf2",
    "model",
    "nn",
    "oracle",
]
