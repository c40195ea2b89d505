"""Minimal numpy-backed reverse-mode autodiff with the layer inventory the

highlighting network needs. Every primitive carries an analytic backward pass;
gradcheck verifies each one against central finite differences.
"""

from .tensor import Tensor, constant  # noqa: F401
from .layers import Parameter, ParamStore  # noqa: F401
