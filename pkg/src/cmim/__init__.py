"""Contrastive MIM desk laboratory: objectives, training, probes and self-checks."""
from .config import RunConfig
from .contrastive import ContrastiveBatch, cmim_loss_and_grad, offset_equivalence
from .numerics import SimilarityConfig
from .objectives import VARIANTS, build_model, minibatch_loss

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "ContrastiveBatch",
    "SimilarityConfig",
    "VARIANTS",
    "build_model",
    "cmim_loss_and_grad",
    "minibatch_loss",
    "offset_equivalence",
]
