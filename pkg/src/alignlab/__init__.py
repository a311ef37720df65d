"""Desk-scale laboratory for image-text embedding alignment.

Operates on precomputed or synthetic embeddings only: contrastive and
margin loss objectives with analytic gradients, projector training
schedules, linear-probe information diagnostics, negative-caption and
QA benchmark generators, and a yes/no scoring harness.
"""

from alignlab.kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
