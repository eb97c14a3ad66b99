"""Normal-ordered fermionic operator products and their linear combinations.

A product is stored as a pair of bitmasks ``(creators, annihilators)``.  The
physical string it stands for is

    a+_{p1} a+_{p2} ... a+_{pn} a_{qm} ... a_{q2} a_{q1}

with ``p1 < p2 < ...`` and ``q1 < q2 < ...``, so the adjoint of a product is
just the swap of its two masks.  An index present in both masks is a number
operator factor, e.g. ``(0b01, 0b01)`` is ``n_0``.

Operator sums keep their terms in three parallel numpy arrays sorted by
``(creators, annihilators)``, which lets products, commutators and rotations
run vectorized over all terms at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _kernels

DROP_TOL = 1e-14
MAX_ORBITALS = 64

_U64 = np.uint64
_ONE = np.uint64(1)
_ZERO = np.uint64(0)

# Products of large sums are evaluated in chunks of at most this many pairs.
_CHUNK = 1 << 21


def mask_of(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


def bits_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def popcount(x):
    return np.bitwise_count(x)


def above_xor(b):
    """Bit ``k`` is set iff an odd number of set bits of ``b`` lie strictly below ``k``.

    ``popcount(a & above_xor(b)) % 2`` is the parity of the number of pairs
    ``(i in a, j in b)`` with ``i > j``.
    """
    y = np.left_shift(b, _ONE)
    for s in (1, 2, 4, 8, 16, 32):
        y = y ^ np.left_shift(y, _U64(s))
    return y


def below_xor(b):
    """Bit ``k`` is set iff an odd number of set bits of ``b`` lie strictly above ``k``."""
    y = np.right_shift(b, _ONE)
    for s in (1, 2, 4, 8, 16, 32):
        y = y ^ np.right_shift(y, _U64(s))
    return y


def _parity(x):
    return (popcount(x) & 1).astype(np.int8)


@dataclass(frozen=True, order=True)
class OperatorProduct:
    """A single canonical product ``a^{creators}_{annihilators}``."""

    creators: tuple[int, ...] = ()
    annihilators: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("creators", "annihilators"):
            idx = tuple(int(i) for i in getattr(self, name))
            object.__setattr__(self, name, idx)
            if any(i < 0 or i >= MAX_ORBITALS for i in idx):
                raise ValueError(f"{name} out of range [0, {MAX_ORBITALS}): {idx}")
            if any(a >= b for a, b in zip(idx, idx[1:])):
                raise ValueError(f"{name} must be strictly ascending: {idx}")

    @classmethod
    def from_masks(cls, cre: int, ann: int) -> "OperatorProduct":
        return cls(bits_of(int(cre)), bits_of(int(ann)))

    @classmethod
    def number(cls, *indices: int) -> "OperatorProduct":
        idx = tuple(sorted(indices))
        return cls(idx, idx)

    @property
    def cre_mask(self) -> int:
        return mask_of(self.creators)

    @property
    def ann_mask(self) -> int:
        return mask_of(self.annihilators)

    @property
    def rank(self) -> float:
        return (len(self.creators) + len(self.annihilators)) / 2

    @property
    def is_number_product(self) -> bool:
        return self.creators == self.annihilators

    @property
    def support(self) -> int:
        return self.cre_mask | self.ann_mask

    def adjoint(self) -> "OperatorProduct":
        return OperatorProduct(self.annihilators, self.creators)

    def __str__(self) -> str:
        up = " ".join(f"{p}+" for p in self.creators)
        down = " ".join(f"{q}-" for q in reversed(self.annihilators))
        return "[" + " ".join(s for s in (up, down) if s) + "]"


def _sort_order(cre, ann):
    top = cre | ann
    if len(top) and int(top.max()) < (1 << 32):
        # one packed key; the stable sort also exploits presorted runs
        return np.argsort(np.left_shift(cre, _U64(32)) | ann, kind="stable")
    return np.lexsort((ann, cre))


def _canonicalize(cre, ann, coef, drop_tol):
    if len(coef) == 0:
        return cre, ann, coef
    order = _sort_order(cre, ann)
    cre, ann, coef = cre[order], ann[order], coef[order]
    new = np.ones(len(cre), dtype=bool)
    new[1:] = (cre[1:] != cre[:-1]) | (ann[1:] != ann[:-1])
    if not new.all():
        starts = np.flatnonzero(new)
        coef = np.add.reduceat(coef, starts)
        cre, ann = cre[starts], ann[starts]
    keep = np.abs(coef) >= drop_tol if drop_tol > 0 else coef != 0
    # + 0.0 clears negative zeros so serialized output is stable
    return cre[keep], ann[keep], coef[keep] + 0.0


class OperatorSum:
    """Finite linear combination of canonical products with complex coefficients.

    Instances are immutable.  Arithmetic operators are provided for
    convenience: ``x + y``, ``x - y``, ``c * x`` and ``x * y`` (operator
    product).
    """

    __slots__ = ("cre", "ann", "coef")

    def __init__(self, cre=(), ann=(), coef=(), drop_tol: float = DROP_TOL, canonical: bool = False):
        cre = np.asarray(cre, dtype=_U64).ravel()
        ann = np.asarray(ann, dtype=_U64).ravel()
        coef = np.asarray(coef, dtype=np.complex128).ravel()
        if not (len(cre) == len(ann) == len(coef)):
            raise ValueError("mask and coefficient arrays must have equal length")
        if not canonical:
            cre, ann, coef = _canonicalize(cre, ann, coef, drop_tol)
        for a in (cre, ann, coef):
            a.flags.writeable = False
        self.cre, self.ann, self.coef = cre, ann, coef

    # construction helpers -------------------------------------------------

    @classmethod
    def zero(cls) -> "OperatorSum":
        return cls()

    @classmethod
    def identity(cls, coeff: complex = 1.0) -> "OperatorSum":
        return cls([0], [0], [coeff])

    @classmethod
    def from_product(cls, p: OperatorProduct, coeff: complex = 1.0) -> "OperatorSum":
        return cls([p.cre_mask], [p.ann_mask], [coeff])

    @classmethod
    def from_terms(cls, terms: Mapping[OperatorProduct, complex] | Iterable[tuple[OperatorProduct, complex]],
                   drop_tol: float = DROP_TOL) -> "OperatorSum":
        items = list(terms.items()) if isinstance(terms, Mapping) else list(terms)
        return cls([p.cre_mask for p, _ in items], [p.ann_mask for p, _ in items],
                   [c for _, c in items], drop_tol=drop_tol)

    # container protocol -----------------------------------------------------

    def __len__(self) -> int:
        return len(self.coef)

    def __iter__(self) -> Iterator[tuple[OperatorProduct, complex]]:
        for c, a, v in zip(self.cre.tolist(), self.ann.tolist(), self.coef.tolist()):
            yield OperatorProduct.from_masks(c, a), v

    def terms(self) -> dict[OperatorProduct, complex]:
        return dict(iter(self))

    def coefficient(self, p: OperatorProduct) -> complex:
        hit = np.flatnonzero((self.cre == _U64(p.cre_mask)) & (self.ann == _U64(p.ann_mask)))
        return complex(self.coef[hit[0]]) if len(hit) else 0j

    def is_zero(self) -> bool:
        return len(self.coef) == 0

    @property
    def num_orbitals(self) -> int:
        """One past the highest orbital index touched (0 for scalars)."""
        if len(self) == 0:
            return 0
        top = int(np.bitwise_or.reduce(self.cre | self.ann))
        return top.bit_length()

    # arithmetic -----------------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, OperatorSum):
            other = OperatorSum.identity(other)
        return axpy(1.0, other, self)

    __radd__ = __add__

    def __neg__(self):
        return OperatorSum(self.cre, self.ann, -self.coef, canonical=True)

    def __sub__(self, other):
        if not isinstance(other, OperatorSum):
            other = OperatorSum.identity(other)
        return axpy(-1.0, other, self)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, OperatorProduct):
            other = OperatorSum.from_product(other)
        if isinstance(other, OperatorSum):
            return multiply(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, OperatorProduct):
            return multiply(OperatorSum.from_product(other), self)
        return self.scale(other)

    def scale(self, alpha: complex, drop_tol: float = DROP_TOL) -> "OperatorSum":
        return OperatorSum(self.cre, self.ann, self.coef * alpha, drop_tol=drop_tol)

    def adjoint(self) -> "OperatorSum":
        return adjoint(self)

    def allclose(self, other: "OperatorSum", atol: float = 1e-12) -> bool:
        diff = self - other
        return bool(np.all(np.abs(diff.coef) <= atol))

    def max_abs_diff(self, other: "OperatorSum") -> float:
        diff = axpy(-1.0, other, self, drop_tol=0.0)
        return float(np.abs(diff.coef).max()) if len(diff) else 0.0

    def filter(self, keep) -> "OperatorSum":
        keep = np.asarray(keep, dtype=bool)
        return OperatorSum(self.cre[keep], self.ann[keep], self.coef[keep], canonical=True)

    def truncate(self, tol: float) -> tuple["OperatorSum", float]:
        """Drop terms with ``|c| < tol``; return the remainder and the dropped squared weight."""
        small = np.abs(self.coef) < tol
        dropped = float(np.sum(np.abs(self.coef[small]) ** 2))
        return self.filter(~small), dropped

    def __repr__(self) -> str:
        if len(self) == 0:
            return "OperatorSum(0)"
        shown = [f"({c:.6g}) {p}" for p, c in list(self)[:8]]
        more = f" + ... ({len(self)} terms)" if len(self) > 8 else ""
        return "OperatorSum(" + " + ".join(shown) + more + ")"

    # serialization ----------------------------------------------------------------

    def to_records(self) -> list[dict]:
        return [
            {"creators": list(p.creators), "annihilators": list(p.annihilators),
             "re": float(c.real), "im": float(c.imag)}
            for p, c in self
        ]

    @classmethod
    def from_records(cls, records: Sequence[Mapping]) -> "OperatorSum":
        terms = [(OperatorProduct(tuple(r["creators"]), tuple(r["annihilators"])),
                  complex(r.get("re", 0.0), r.get("im", 0.0))) for r in records]
        return cls.from_terms(terms)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_records(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "OperatorSum":
        return cls.from_records(json.loads(text))


def product(creators: Sequence[int] = (), annihilators: Sequence[int] = (), coeff: complex = 1.0) -> OperatorSum:
    """Operator sum holding one canonical product; both index lists must be ascending."""
    return OperatorSum.from_product(OperatorProduct(tuple(creators), tuple(annihilators)), coeff)


def number(*indices: int) -> OperatorSum:
    return OperatorSum.from_product(OperatorProduct.number(*indices))


# ---------------------------------------------------------------------------
# normal ordering by repeated adjacent swaps (independent of the vector kernel)


def normal_order(raw: Sequence[tuple[int, bool]], coeff: complex = 1.0) -> OperatorSum:
    """Normal order an arbitrary string of elementary operators.

    ``raw`` lists ``(index, is_creator)`` pairs from left to right.  The
    anticommutation relations are applied by adjacent swaps; each swap of
    ``a_p a+_p`` also emits the contracted string.
    """
    terms: dict[tuple[int, int], complex] = {}
    for (cre, ann), sign in _bubble(tuple((int(i), bool(d)) for i, d in raw)).items():
        terms[(cre, ann)] = terms.get((cre, ann), 0) + sign
    items = [(c, a, v * coeff) for (c, a), v in terms.items() if v != 0]
    if not items:
        return OperatorSum()
    c, a, v = zip(*items)
    return OperatorSum(c, a, v)


def _out_of_order(x, y) -> bool:
    (i, di), (j, dj) = x, y
    if di and dj:
        return i >= j
    if not di and not dj:
        return i <= j
    return (not di) and dj


@lru_cache(maxsize=4096)
def _bubble(ops: tuple[tuple[int, bool], ...]) -> dict[tuple[int, int], int]:
    for k in range(len(ops) - 1):
        x, y = ops[k], ops[k + 1]
        if not _out_of_order(x, y):
            continue
        if x[1] == y[1] and x[0] == y[0]:
            return {}
        out: dict[tuple[int, int], int] = {}
        swapped = ops[:k] + (y, x) + ops[k + 2:]
        for key, v in _bubble(swapped).items():
            out[key] = out.get(key, 0) - v
        if x[0] == y[0]:  # a_p a+_p = 1 - a+_p a_p
            for key, v in _bubble(ops[:k] + ops[k + 2:]).items():
                out[key] = out.get(key, 0) + v
        return {k_: v for k_, v in out.items() if v != 0}
    cre = mask_of(i for i, d in ops if d)
    ann = mask_of(i for i, d in ops if not d)
    return {(cre, ann): 1}


# ---------------------------------------------------------------------------
# vectorized products


def _multiply_pairs_numpy(p1, q1, c1, p2, q2, c2):
    """Elementwise products ``(p1, q1) * (p2, q2)`` of canonical products.

    Uses  a(Q1) a+(P2) = sum over S in Q1 & P2 of signed a+(S | P2') a(S | Q1')
    with ``P2' = P2 \\ C``, ``Q1' = Q1 \\ C`` and ``C = Q1 & P2``: the shared
    indices become a product of (1 - n_k) factors, expanded over subsets.
    Returns unaggregated term arrays.
    """
    common = q1 & p2
    pp = p2 & ~common
    qq = q1 & ~common
    npp = popcount(pp).astype(np.int64)
    nqq = popcount(qq).astype(np.int64)
    base = (_parity(common & above_xor(qq)) + _parity(common & above_xor(pp))
            + ((nqq * npp) & 1)).astype(np.int64)
    ax_pp = above_xor(pp)

    out_c, out_a, out_v = [], [], []
    sub = common.copy()
    active = np.ones(len(sub), dtype=bool)
    while True:
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        s = sub[idx]
        ns = popcount(s).astype(np.int64)
        cp = s | pp[idx]
        cq = s | qq[idx]
        ok = ((p1[idx] & cp) == 0) & ((cq & q2[idx]) == 0)
        sign = (base[idx] + ns + ns * npp[idx]
                + _parity(s & ax_pp[idx]) + _parity(qq[idx] & above_xor(s))
                + _parity(p1[idx] & above_xor(cp)) + _parity(q2[idx] & above_xor(cq)))
        sel = idx[ok]
        val = np.where(sign[ok] & 1, -1.0, 1.0) * c1[sel] * c2[sel]
        out_c.append(p1[sel] | cp[ok])
        out_a.append(cq[ok] | q2[sel])
        out_v.append(val)
        # next subset; an element whose subset was already empty is finished
        done = s == 0
        sub[idx] = (s - _ONE * (~done)) & common[idx]
        active[idx[done]] = False
    if not out_c:
        e = np.zeros(0, dtype=_U64)
        return e, e.copy(), np.zeros(0, dtype=np.complex128)
    return np.concatenate(out_c), np.concatenate(out_a), np.concatenate(out_v)


def _multiply_pairs(p1, q1, c1, p2, q2, c2):
    if _kernels.multiply_pairs is not None:
        return _kernels.multiply_pairs(p1, q1, c1, p2, q2, c2)
    return _multiply_pairs_numpy(p1, q1, c1, p2, q2, c2)


def _multiply_raw(x: OperatorSum, y: OperatorSum):
    nx, ny = len(x), len(y)
    if nx == 0 or ny == 0:
        e = np.zeros(0, dtype=_U64)
        return e, e.copy(), np.zeros(0, dtype=np.complex128)
    parts = []
    if _kernels.multiply_outer is not None:
        step = max(1, _CHUNK // nx)
        for j0 in range(0, ny, step):
            j = slice(j0, j0 + step)
            parts.append(_kernels.multiply_outer(x.cre, x.ann, x.coef, y.cre[j], y.ann[j], y.coef[j]))
    elif nx >= ny:
        step = max(1, _CHUNK // nx)
        for j0 in range(0, ny, step):
            j = slice(j0, j0 + step)
            m = len(y.coef[j])
            parts.append(_multiply_pairs_numpy(
                np.tile(x.cre, m), np.tile(x.ann, m), np.tile(x.coef, m),
                np.repeat(y.cre[j], nx), np.repeat(y.ann[j], nx), np.repeat(y.coef[j], nx)))
    else:
        step = max(1, _CHUNK // ny)
        for i0 in range(0, nx, step):
            i = slice(i0, i0 + step)
            m = len(x.coef[i])
            parts.append(_multiply_pairs_numpy(
                np.repeat(x.cre[i], ny), np.repeat(x.ann[i], ny), np.repeat(x.coef[i], ny),
                np.tile(y.cre, m), np.tile(y.ann, m), np.tile(y.coef, m)))
    if len(parts) == 1:
        return parts[0]
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def multiply(x: OperatorSum, y: OperatorSum, drop_tol: float = DROP_TOL) -> OperatorSum:
    """Exact normal-ordered product ``x y``."""
    return OperatorSum(*_multiply_raw(x, y), drop_tol=drop_tol)


def commutator(x: OperatorSum, y: OperatorSum, drop_tol: float = DROP_TOL) -> OperatorSum:
    """``[x, y] = x y - y x``."""
    c1, a1, v1 = _multiply_raw(x, y)
    c2, a2, v2 = _multiply_raw(y, x)
    return OperatorSum(np.concatenate([c1, c2]), np.concatenate([a1, a2]),
                       np.concatenate([v1, -v2]), drop_tol=drop_tol)


def anticommutator(x: OperatorSum, y: OperatorSum, drop_tol: float = DROP_TOL) -> OperatorSum:
    c1, a1, v1 = _multiply_raw(x, y)
    c2, a2, v2 = _multiply_raw(y, x)
    return OperatorSum(np.concatenate([c1, c2]), np.concatenate([a1, a2]),
                       np.concatenate([v1, v2]), drop_tol=drop_tol)


def adjoint(x: OperatorSum) -> OperatorSum:
    return OperatorSum(x.ann, x.cre, np.conj(x.coef))


def axpy(alpha: complex, x: OperatorSum, y: OperatorSum, drop_tol: float = DROP_TOL) -> OperatorSum:
    """``y + alpha x``."""
    if alpha == 0:
        return y
    return OperatorSum(np.concatenate([y.cre, x.cre]), np.concatenate([y.ann, x.ann]),
                       np.concatenate([y.coef, alpha * x.coef]), drop_tol=drop_tol)


def linear_combination(pairs: Iterable[tuple[complex, OperatorSum]], drop_tol: float = DROP_TOL) -> OperatorSum:
    """``sum_k c_k x_k`` with a single canonicalization pass."""
    pairs = [(c, x) for c, x in pairs if c != 0 and len(x)]
    if not pairs:
        return OperatorSum()
    return OperatorSum(np.concatenate([x.cre for _, x in pairs]),
                       np.concatenate([x.ann for _, x in pairs]),
                       np.concatenate([c * x.coef for c, x in pairs]), drop_tol=drop_tol)


def term_ranks(x: OperatorSum) -> np.ndarray:
    return (popcount(x.cre).astype(np.int64) + popcount(x.ann).astype(np.int64)) / 2


def rank_partition(x: OperatorSum) -> dict[float, OperatorSum]:
    """Split ``x`` by rank, half the total number of elementary operators."""
    ranks = term_ranks(x)
    return {float(r): x.filter(ranks == r) for r in np.unique(ranks)}


def euclidean_norm(x: OperatorSum) -> float:
    return float(np.sqrt(np.sum(np.abs(x.coef) ** 2)))


def is_number_conserving(x: OperatorSum) -> bool:
    return bool(np.all(popcount(x.cre) == popcount(x.ann)))


def hermiticity_residual(x: OperatorSum) -> float:
    return x.max_abs_diff(adjoint(x))
