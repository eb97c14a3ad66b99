import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from fermirot.algebra import OperatorProduct, OperatorSum, number, product
from fermirot.models import HubbardSpec, hubbard_chain
from fermirot.states import (
    MAX_FOCK_ORBITALS,
    SectorBasis,
    StateVector,
    TransitionTable,
    apply_operator,
    apply_product,
    build_dense,
    eigensolve_hermitian,
    exact_heisenberg,
    expectation,
    fock_basis,
    ground_state,
    number_sector,
    spin_sector,
    time_evolved_norms,
)
from conftest import jw_dense, operator_sums, random_sum

N = 5


def random_state(rng, dets):
    v = rng.normal(size=len(dets)) + 1j * rng.normal(size=len(dets))
    return StateVector(dets, v).normalized()


def test_determinant_phase_convention():
    # a+_1 |{0}> = -|{0,1}> because a+_0 stands to the left in |{0,1}> = a+_0 a+_1 |vac>
    assert apply_product(OperatorProduct((1,), ()), 0b01) == (-1, 0b11)
    assert apply_product(OperatorProduct((0,), ()), 0b10) == (1, 0b11)
    assert apply_product(OperatorProduct((0,), ()), 0b01) is None
    assert apply_product(OperatorProduct((), (1,)), 0b11) == (-1, 0b01)


@settings(max_examples=80, deadline=None)
@given(operator_sums(N, max_terms=5))
def test_dense_builder_matches_jordan_wigner(x):
    assert np.allclose(build_dense(x, N), jw_dense(x, N), atol=1e-14)


def test_apply_operator_matches_dense():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = random_sum(rng, 6, 6)
        v = random_state(rng, np.arange(64))
        out = apply_operator(x, v).to_dense(fock_basis(6))
        assert np.allclose(out, build_dense(x, 6) @ v.to_dense(fock_basis(6)))


def test_transition_table_matches_direct_expectation():
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = random_sum(rng, 6, 12, max_len=3)
        bra = random_state(rng, rng.choice(64, size=5, replace=False))
        ket = random_state(rng, rng.choice(64, size=4, replace=False))
        assert TransitionTable(bra, ket).expectation(x) == pytest.approx(expectation(bra, x, ket), abs=1e-12)


def test_state_vector_arithmetic_and_json():
    v = StateVector.from_dict({3: 1.0, 5: 1j})
    w = StateVector.determinant([0, 1])
    assert v.vdot(w) == pytest.approx(1.0)
    assert (v - v).norm() == 0
    assert (v + w).to_dict() == {3: 2.0, 5: 1j}
    assert StateVector.from_json(v.to_json()).to_dict() == v.to_dict()
    assert v.normalized().norm() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        StateVector().normalized()


def test_to_dense_rejects_outside_components():
    with pytest.raises(ValueError):
        StateVector.determinant(0b111).to_dense(number_sector(4, 2))


def test_sector_dimensions_and_index():
    assert len(number_sector(6, 3)) == 20
    b = spin_sector(5, 3, 3)
    assert len(b) == 100
    assert b.index([b.dets[7], 0]).tolist() == [7, -1]
    # every determinant has 3 even and 3 odd orbitals filled
    assert all(bin(int(d) & 0x155).count("1") == 3 for d in b.dets)


def test_fock_basis_limit():
    with pytest.raises(ValueError):
        fock_basis(MAX_FOCK_ORBITALS + 1)


def test_eigensolver():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    m = m + m.conj().T
    w, v = eigensolve_hermitian(m)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(m @ v, v * w)
    assert np.allclose(v.conj().T @ v, np.eye(6))
    with pytest.raises(ValueError):
        eigensolve_hermitian(np.array([[0, 1], [0, 0]]))


def test_hubbard_dimer_ground_state():
    h = hubbard_chain(HubbardSpec(2, 1.0, 1.0))
    e, psi = ground_state(h, spin_sector(2, 1, 1))
    assert e == pytest.approx((1 - np.sqrt(17)) / 2, abs=1e-12)
    assert psi.norm() == pytest.approx(1.0)


def test_hubbard_five_site_ground_energy():
    e, _ = ground_state(hubbard_chain(HubbardSpec(5, 1.0, 1.0)), spin_sector(5, 3, 3))
    assert e == pytest.approx(-3.728187466752245, abs=1e-10)


def test_exact_heisenberg_matches_expm():
    h = hubbard_chain(HubbardSpec(2, 1.0, 2.0))
    psi = StateVector.determinant([0, 1])
    times = [0.0, 0.3, 1.1]
    got = exact_heisenberg(number(0), h, psi, times, n_orbitals=4)
    hm, om = build_dense(h, 4), build_dense(number(0), 4)
    v0 = psi.to_dense(fock_basis(4))
    for t, g in zip(times, got):
        vt = expm(-1j * hm * t) @ v0
        assert g == pytest.approx(np.vdot(vt, om @ vt), abs=1e-12)
    assert np.allclose(time_evolved_norms(h, psi, times), 1.0)


def test_build_dense_rejects_out_of_range_operator():
    with pytest.raises(ValueError):
        build_dense(product((5,), (0,)), number_sector(4, 1))
