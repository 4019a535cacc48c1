"""Trainable video question answering over detected-object graphs.

Videos arrive as per-frame region features and boxes; the model links
regions into object tracks, reasons over per-clip object graphs with
temporal and spatial attention, compares the query-aware video vector
against candidate answer embeddings, and trains end to end on a built-in
reverse-mode autodiff engine.
"""

from .tensor import Tensor, no_grad
from .params import ParamStore
from .gradcheck import finite_diff_check

__all__ = ["Tensor", "no_grad", "ParamStore", "finite_diff_check"]
__version__ = "0.1.0"
