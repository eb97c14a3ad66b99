"""Exact fermionic rotations of second-quantized operators.

Submodules: ``algebra`` (operator sums and products), ``rotations`` (closed-form
conjugation by single-product generators), ``states`` (determinant-space
oracle), ``models``, ``downfold`` and ``dynamics``.
"""

from .algebra import (
    OperatorProduct,
    OperatorSum,
    adjoint,
    anticommutator,
    commutator,
    euclidean_norm,
    multiply,
    normal_order,
    number,
    product,
    rank_partition,
)
from .rotations import Generator, Kind, RotationClass, StructuralViolation, classify, rotate_product, rotate_sum

__version__ = "0.1.0"

__all__ = [
    "OperatorProduct", "OperatorSum", "adjoint", "anticommutator", "commutator", "euclidean_norm",
    "multiply", "normal_order", "number", "product", "rank_partition",
    "Generator", "Kind", "RotationClass", "StructuralViolation", "classify", "rotate_product", "rotate_sum",
]
