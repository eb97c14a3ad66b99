"""Closed-form fermionic rotations generated by a single operator product.

For a product ``T`` two generators are built:

* anti-Hermitian ``A = T - T+``, acting as ``O -> exp(-theta A) O exp(theta A)``;
* Hermitian ``H = T + T+``, acting as ``O -> exp(i theta H) O exp(-i theta H)``.

Both satisfy a three-term recursion for nested commutators, so the
transformed product needs only ``C = [O, G]`` and ``D = [C, G]``.  The
integer (1 or 4) selecting the closed form is found by evaluating ``G C G``
directly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .algebra import (
    DROP_TOL,
    OperatorProduct,
    OperatorSum,
    adjoint,
    commutator,
    linear_combination,
    multiply,
    popcount,
)

CLASS_TOL = 1e-12


class StructuralViolation(ArithmeticError):
    """G [O, G] G matched neither allowed outcome."""


class Kind(str, enum.Enum):
    ANTI_HERMITIAN = "anti_hermitian"
    HERMITIAN = "hermitian"


class RotationClass(str, enum.Enum):
    TRIVIAL = "trivial"
    CLASS1 = "class1"
    CLASS4 = "class4"

    @property
    def alpha(self) -> int | None:
        return {"trivial": None, "class1": 1, "class4": 4}[self.value]


@dataclass(frozen=True)
class Generator:
    t: OperatorProduct
    kind: Kind = Kind.ANTI_HERMITIAN
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "theta", float(self.theta))

    def with_theta(self, theta: float) -> "Generator":
        return Generator(self.t, self.kind, theta)

    @property
    def is_identity(self) -> bool:
        return self.kind is Kind.ANTI_HERMITIAN and self.t.is_number_product


def build_generator_sum(g: Generator) -> OperatorSum:
    """``A = T - T+`` or ``H = T + T+`` (angle not included)."""
    t = OperatorSum.from_product(g.t)
    if g.kind is Kind.ANTI_HERMITIAN:
        return t - adjoint(t)
    return t + adjoint(t)


def _as_sum(o) -> OperatorSum:
    return OperatorSum.from_product(o) if isinstance(o, OperatorProduct) else o


def _sandwich(g: OperatorSum, x: OperatorSum) -> OperatorSum:
    return multiply(multiply(g, x), g)


def classify(o: OperatorProduct, g: Generator) -> RotationClass:
    """Which closed form applies to ``o`` under ``g``."""
    return _classify(_as_sum(o), g)[0]


def _classify(o: OperatorSum, g: Generator):
    gs = build_generator_sum(g)
    if gs.is_zero():
        return RotationClass.TRIVIAL, OperatorSum(), gs
    c = commutator(o, gs)
    if c.is_zero():
        return RotationClass.TRIVIAL, c, gs
    if g.kind is Kind.HERMITIAN and g.t.is_number_product:
        # H = 2T is a multiple of a projector; G C G is not informative here
        return RotationClass.CLASS4, c, gs
    m = _sandwich(gs, c)
    target = c if g.kind is Kind.ANTI_HERMITIAN else -c
    if m.max_abs_diff(OperatorSum()) <= CLASS_TOL:
        return RotationClass.CLASS1, c, gs
    if m.max_abs_diff(target) <= CLASS_TOL:
        return RotationClass.CLASS4, c, gs
    raise StructuralViolation(f"G[O,G]G is neither 0 nor {'+' if g.kind is Kind.ANTI_HERMITIAN else '-'}[O,G]")


def closed_form_weights(kind: Kind, alpha: int, theta: float) -> tuple[complex, complex]:
    """Coefficients ``(w1, w2)`` in ``O + w1 [O,G] + w2 [[O,G],G]``."""
    r = np.sqrt(alpha)
    if Kind(kind) is Kind.ANTI_HERMITIAN:
        return np.sin(r * theta) / r, (1 - np.cos(r * theta)) / alpha
    return -1j * np.sin(r * theta) / r, (np.cos(r * theta) - 1) / alpha


def rotate_product(o: OperatorProduct, g: Generator) -> OperatorSum:
    """Transform one product with the closed form selected by :func:`classify`."""
    os_ = _as_sum(o)
    cls, c, gs = _classify(os_, g)
    if cls is RotationClass.TRIVIAL or g.theta == 0.0:
        return os_
    w1, w2 = closed_form_weights(g.kind, cls.alpha, g.theta)
    d = commutator(c, gs)
    return linear_combination([(1.0, os_), (w1, c), (w2, d)])


@dataclass(frozen=True)
class RotationPieces:
    """Angle-independent pieces of a rotated operator sum.

    ``c`` and ``d`` are the single and double commutators of the whole sum;
    ``c4``/``d4`` are the same quantities restricted to the terms whose class
    is 4.  Any rotated sum is ``o + w1 c + w2 d + w3 c4 + w4 d4``.
    """

    o: OperatorSum
    c: OperatorSum
    d: OperatorSum
    c4: OperatorSum
    d4: OperatorSum
    kind: Kind

    def weights(self, theta: float) -> tuple[complex, complex, complex, complex]:
        w1, w2 = closed_form_weights(self.kind, 1, theta)
        v1, v2 = closed_form_weights(self.kind, 4, theta)
        return w1, w2, v1 - w1, v2 - w2

    def evaluate(self, theta: float, drop_tol: float = DROP_TOL) -> OperatorSum:
        if theta == 0.0:
            return self.o
        w1, w2, w3, w4 = self.weights(theta)
        return linear_combination([(1.0, self.o), (w1, self.c), (w2, self.d), (w3, self.c4), (w4, self.d4)],
                                  drop_tol=drop_tol)


def _touches(o: OperatorSum, t: OperatorProduct) -> np.ndarray:
    """Terms that may fail to commute with the generator built from ``t``."""
    touch = (o.cre | o.ann) & np.uint64(t.support) != 0
    if (len(t.creators) + len(t.annihilators)) % 2:
        # odd generators anticommute with disjoint odd products
        touch |= ((popcount(o.cre) + popcount(o.ann)) & 1) == 1
    return touch


def rotation_pieces(o: OperatorSum, g: Generator, validate: bool = False) -> RotationPieces:
    """Decompose ``o`` for rotation by ``g`` at any angle.

    Per term, ``G [O_i, G] G`` is either 0 (class 1) or ``+-[O_i, G]``
    (class 4), so ``G C G`` summed over all terms isolates the class-4 part of
    ``C`` without classifying terms one at a time.
    """
    zero = OperatorSum()
    gs = build_generator_sum(g)
    if gs.is_zero() or o.is_zero():
        return RotationPieces(o, zero, zero, zero, zero, g.kind)
    active = o.filter(_touches(o, g.t))
    c = commutator(active, gs)
    if c.is_zero():
        return RotationPieces(o, zero, zero, zero, zero, g.kind)
    gc = multiply(gs, c, drop_tol=0.0)
    d = _difference(multiply(c, gs, drop_tol=0.0), gc)
    if g.kind is Kind.HERMITIAN and g.t.is_number_product:
        return RotationPieces(o, c, d, c, d, g.kind)
    m = multiply(gc, gs)
    c4 = m if g.kind is Kind.ANTI_HERMITIAN else -m
    if validate:
        # each class-4 piece reproduces itself under another sandwich
        back = _sandwich(gs, c4)
        target = c4 if g.kind is Kind.ANTI_HERMITIAN else -c4
        if back.max_abs_diff(target) > CLASS_TOL * max(1.0, float(np.abs(c.coef).max())):
            raise StructuralViolation("sandwich of the class-4 commutator is inconsistent")
    d4 = commutator(c4, gs)
    return RotationPieces(o, c, d, c4, d4, g.kind)


def _difference(x: OperatorSum, y: OperatorSum) -> OperatorSum:
    return linear_combination([(1.0, x), (-1.0, y)])


def rotate_sum(o: OperatorSum, g: Generator, validate: bool = False, drop_tol: float = DROP_TOL) -> OperatorSum:
    """Rotate every term of ``o`` by ``g`` (linear extension of :func:`rotate_product`)."""
    if g.theta == 0.0:
        return o
    return rotation_pieces(o, g, validate=validate).evaluate(g.theta, drop_tol=drop_tol)


def flow_derivative(o: OperatorProduct, g: Generator) -> OperatorSum:
    """``d/dtheta`` of :func:`rotate_product` (anti-Hermitian generators only)."""
    if g.kind is not Kind.ANTI_HERMITIAN:
        raise NotImplementedError("operator flow is only available for anti-Hermitian generators")
    os_ = _as_sum(o)
    cls, c, gs = _classify(os_, g)
    if cls is RotationClass.TRIVIAL:
        return OperatorSum()
    r = np.sqrt(cls.alpha)
    d = commutator(c, gs)
    return linear_combination([(np.cos(r * g.theta), c), (np.sin(r * g.theta) / r, d)])


def exp_generator(g: Generator) -> OperatorSum:
    """``exp(theta A) = 1 + sin(theta) A + (1 - cos(theta)) A^2``."""
    if g.kind is not Kind.ANTI_HERMITIAN:
        raise NotImplementedError("closed-form exponential is only available for anti-Hermitian generators")
    a = build_generator_sum(g)
    one = OperatorSum.identity()
    if a.is_zero():
        return one
    return linear_combination([(1.0, one), (np.sin(g.theta), a), (1 - np.cos(g.theta), multiply(a, a))])
