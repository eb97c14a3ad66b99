"""Shared fixtures: an independent Jordan-Wigner matrix builder and hypothesis strategies."""

from functools import lru_cache

import numpy as np
import pytest
from hypothesis import strategies as st

from fermirot.algebra import OperatorProduct, OperatorSum


@lru_cache(maxsize=None)
def _jw_annihilators(n):
    """``a_p`` as 2^n x 2^n matrices, basis index = integer whose bit p is n_p."""
    dim = 1 << n
    ops = []
    for p in range(n):
        m = np.zeros((dim, dim))
        for d in range(dim):
            if d >> p & 1:
                sign = (-1) ** bin(d & ((1 << p) - 1)).count("1")
                m[d ^ (1 << p), d] = sign
        ops.append(m)
    return tuple(ops)


def jw_dense(x: OperatorSum, n: int) -> np.ndarray:
    """Dense matrix of ``x`` built from explicit products of single-mode matrices."""
    a = _jw_annihilators(n)
    out = np.zeros((1 << n, 1 << n), dtype=complex)
    for p, c in x:
        m = np.eye(1 << n)
        for i in p.creators:
            m = m @ a[i].T
        for i in reversed(p.annihilators):
            m = m @ a[i]
        out += c * m
    return out


@pytest.fixture
def jw():
    return jw_dense


def products(n_orbitals=5, max_len=3):
    idx = st.lists(st.integers(0, n_orbitals - 1), max_size=max_len, unique=True).map(lambda v: tuple(sorted(v)))
    return st.builds(OperatorProduct, idx, idx)


def nonnumber_products(n_orbitals=5, max_len=3):
    return products(n_orbitals, max_len).filter(lambda p: not p.is_number_product)


coefficients = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False).filter(
    lambda z: abs(z) > 1e-3)


def operator_sums(n_orbitals=5, max_terms=4, max_len=3):
    return st.lists(st.tuples(products(n_orbitals, max_len), coefficients), min_size=1, max_size=max_terms).map(
        OperatorSum.from_terms)


def random_sum(rng, n_orbitals, n_terms, max_len=3, hermitian=False):
    terms = []
    for _ in range(n_terms):
        k, l = rng.integers(0, max_len + 1, size=2)
        cre = tuple(sorted(rng.choice(n_orbitals, size=k, replace=False)))
        ann = tuple(sorted(rng.choice(n_orbitals, size=l, replace=False)))
        terms.append((OperatorProduct(cre, ann), complex(rng.normal(), rng.normal())))
    x = OperatorSum.from_terms(terms)
    if hermitian:
        x = x + x.adjoint()
    return x


def random_product(rng, n_orbitals, max_len=3, allow_number=False):
    while True:
        k, l = rng.integers(0, max_len + 1, size=2)
        cre = tuple(sorted(rng.choice(n_orbitals, size=k, replace=False)))
        ann = tuple(sorted(rng.choice(n_orbitals, size=l, replace=False)))
        p = OperatorProduct(cre, ann)
        if k + l and (allow_number or not p.is_number_product):
            return p
