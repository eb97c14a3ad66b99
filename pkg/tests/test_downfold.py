import numpy as np
import pytest
from scipy.linalg import expm

from fermirot.algebra import OperatorProduct, OperatorSum, euclidean_norm, number, product
from fermirot.downfold import (
    DownfoldConfig,
    EnergyCurve,
    PoolError,
    TransformationSequence,
    build_pool,
    exact_energy,
    gradient,
    optimize_theta,
    rank_magnitude_matrix,
    run_adaptive,
    select_operator,
    subspace_ground_state,
    sweep,
    transform_hamiltonian,
)
from fermirot.models import HubbardSpec, hubbard_chain, synthetic_integrals, two_level
from fermirot.rotations import Generator, Kind, build_generator_sum, exp_generator, flow_derivative, rotate_sum
from fermirot.states import StateVector, TransitionTable, apply_operator, build_dense, expectation
from conftest import random_sum

DIMER = hubbard_chain(HubbardSpec(2, 1.0, 1.0))
DIMER_CFG = DownfoldConfig(active=(0, 1), external=(2, 3), active_dets=(0b0011,))


def test_config_validation():
    with pytest.raises(ValueError):
        DownfoldConfig(active=(0, 1), external=(1, 2), active_dets=(3,))
    with pytest.raises(ValueError):
        DownfoldConfig(active=(0,), external=(1,), active_dets=(1,), grad_tol=0)
    with pytest.raises(ValueError):
        DownfoldConfig(active=(0,), external=(1,), active_dets=(1,), sweep="full")


class TestPool:
    def test_one_spin_enumeration(self):
        pool = build_pool(DownfoldConfig(active=(0, 2), external=(4, 6), active_dets=(5,)))
        assert pool == [OperatorProduct((4,), (0,)), OperatorProduct((6,), (0,)),
                        OperatorProduct((4,), (2,)), OperatorProduct((6,), (2,)),
                        OperatorProduct((4, 6), (0, 2))]

    def test_empty_external_is_an_error(self):
        with pytest.raises(PoolError):
            build_pool(DownfoldConfig(active=(0, 1), external=(), active_dets=(3,)))

    def test_four_by_four_contains_pair_doubles(self):
        pool = build_pool(DownfoldConfig(active=(0, 1, 2, 3), external=(4, 5, 6, 7), active_dets=(3,)))
        assert OperatorProduct((6, 7), (0, 1)) in pool
        assert len(pool) == len(set(pool)) == 26
        assert all(not build_generator_sum(Generator(t)).is_zero() for t in pool)
        # spin projection conserved
        assert all(sum(i % 2 for i in t.creators) == sum(i % 2 for i in t.annihilators) for t in pool)


def test_transform_hamiltonian_against_dense():
    assert transform_hamiltonian(DIMER, TransformationSequence()) is DIMER
    seq = TransformationSequence().append(OperatorProduct((2,), (0,)), 0.4).append(OperatorProduct((2, 3), (0, 1)), -0.9)
    m = build_dense(DIMER, 4)
    u1 = expm(0.4 * build_dense(build_generator_sum(Generator(seq.steps[0][0])), 4))
    u2 = expm(-0.9 * build_dense(build_generator_sum(Generator(seq.steps[1][0])), 4))
    expect = np.linalg.inv(u2) @ np.linalg.inv(u1) @ m @ u1 @ u2
    assert np.allclose(build_dense(transform_hamiltonian(DIMER, seq), 4), expect, atol=1e-12)


class TestGradient:
    def test_diagonal_hamiltonian_on_determinant(self):
        h = number(0) + number(1, 2) * 0.5
        assert gradient(h, OperatorProduct((2,), (0,)), StateVector.determinant([0, 1])) == 0

    def test_equals_flow_derivative_at_zero(self):
        rng = np.random.default_rng(4)
        psi = StateVector([3, 5, 6], rng.normal(size=3)).normalized()
        for _ in range(10):
            h = random_sum(rng, 4, 8, max_len=2, hermitian=True)
            t = OperatorProduct((3,), (1,))
            deriv = OperatorSum()
            for p, c in h:
                deriv = deriv + flow_derivative(p, Generator(t, Kind.ANTI_HERMITIAN, 0.0)) * c
            assert gradient(h, t, psi) == pytest.approx(expectation(psi, deriv, psi).real, abs=1e-10)

    def test_sign_flips_under_adjoint(self):
        _, psi = subspace_ground_state(DIMER, (0b0011,))
        t = OperatorProduct((2,), (0,))
        assert gradient(DIMER, t.adjoint(), psi) == pytest.approx(-gradient(DIMER, t, psi))


class TestSelect:
    def test_single_entry_pool(self):
        psi = StateVector.determinant(0b0011)
        t, g = select_operator(DIMER, [OperatorProduct((3,), (1,))], psi)
        assert t == OperatorProduct((3,), (1,)) and g == pytest.approx(-2.0)

    def test_zero_gradients_return_first(self):
        h = number(0)
        pool = [OperatorProduct((2,), (0,)), OperatorProduct((3,), (1,))]
        assert select_operator(h, pool, StateVector.determinant(0b0011)) == (pool[0], 0.0)

    def test_matches_brute_force_scan(self):
        h = synthetic_integrals(2, 2, seed=1).spinorbital_hamiltonian()
        cfg = DownfoldConfig(active=(0, 1), external=(2, 3), active_dets=(3,))
        psi = StateVector.determinant(3)
        pool = build_pool(cfg)
        grads = [gradient(h, t, psi) for t in pool]
        t, g = select_operator(h, pool, psi)
        assert t == pool[int(np.argmax(np.abs(grads)))]


class TestOptimizeTheta:
    def test_trivial_generator_returns_zero(self):
        assert optimize_theta(number(0), OperatorProduct((3,), (2,)), StateVector.determinant(1)) == 0.0

    @pytest.mark.parametrize("a,b,g", [(0.3, -1.0, 0.4), (-2.0, 1.0, 0.7), (0.0, 0.5, -0.2)])
    def test_two_level_stationary_condition(self, a, b, g):
        h = two_level(a, b, g, 0, 1)
        w = np.linalg.eigvalsh([[a, g], [g, b]])
        # occupy the orbital carrying the larger weight of the lower eigenvector
        v = np.linalg.eigh([[a, g], [g, b]])[1][:, 0]
        psi = StateVector.determinant([int(np.argmax(np.abs(v)))])
        th = optimize_theta(h, OperatorProduct((0,), (1,)), psi)
        e = expectation(psi, rotate_sum(h, Generator(OperatorProduct((0,), (1,)), Kind.ANTI_HERMITIAN, th)), psi).real
        assert e == pytest.approx(w[0], abs=1e-10)
        # 1/2 sin(2t)(a - b) + g cos(2t) = 0
        assert 0.5 * np.sin(2 * th) * (a - b) + g * np.cos(2 * th) == pytest.approx(0, abs=1e-12)

    def test_beats_fine_grid(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            h = random_sum(rng, 4, 10, max_len=2, hermitian=True)
            psi = StateVector([3, 5, 9], rng.normal(size=3)).normalized()
            t = OperatorProduct((2, 3), (0, 1))
            g = Generator(t)

            def energy(th):
                return expectation(psi, rotate_sum(h, g.with_theta(th)), psi).real

            th = optimize_theta(h, t, psi)
            grid = min(energy(x) for x in np.linspace(-np.pi, np.pi, 1000, endpoint=False))
            assert energy(th) <= grid + 1e-9
            assert energy(th) <= energy(0.0) + 1e-14


def test_energy_curve_derivatives():
    rng = np.random.default_rng(12)
    h = random_sum(rng, 5, 12, max_len=2, hermitian=True)
    psi = StateVector([3, 6, 17], rng.normal(size=3)).normalized()
    curve = EnergyCurve(h, OperatorProduct((3, 4), (0, 1)), psi)
    eps = 1e-4
    for th in (-2.0, 0.3, 1.7):
        d1, d2 = curve.slope(th)
        assert d1 == pytest.approx((curve(th + eps) - curve(th - eps)) / (2 * eps), abs=1e-7)
        assert d2 == pytest.approx((curve(th + eps) - 2 * curve(th) + curve(th - eps)) / eps ** 2, abs=1e-5)


class TestSweep:
    def setup_method(self):
        self.h = synthetic_integrals(3, 2, seed=2).spinorbital_hamiltonian()
        self.cfg = DownfoldConfig(active=(0, 1), external=(2, 3, 4, 5), active_dets=(3,))
        self.psi = StateVector.determinant(3)

    def energy(self, seq):
        return expectation(self.psi, transform_hamiltonian(self.h, seq), self.psi).real

    def test_single_entry_equals_optimize(self):
        t = OperatorProduct((2, 3), (0, 1))
        seq = sweep(self.h, TransformationSequence().append(t, 0.0), self.cfg, self.psi)
        assert seq.steps[0][1] == pytest.approx(optimize_theta(self.h, t, self.psi), abs=1e-8)

    def test_energy_non_increasing_and_fixed_point(self):
        seq = (TransformationSequence().append(OperatorProduct((2,), (0,)), 0.3)
               .append(OperatorProduct((2, 3), (0, 1)), -0.2).append(OperatorProduct((5,), (1,)), 0.1))
        e0 = self.energy(seq)
        once = sweep(self.h, seq, self.cfg, self.psi)
        assert self.energy(once) <= e0 + 1e-14
        for _ in range(30):
            once = sweep(self.h, once, self.cfg, self.psi)
        again = sweep(self.h, once, self.cfg, self.psi)
        assert np.allclose([s[1] for s in again], [s[1] for s in once], atol=1e-5)

    def test_state_side_curve_matches_retransform(self):
        seq = (TransformationSequence().append(OperatorProduct((2,), (0,)), 0.3)
               .append(OperatorProduct((2, 3), (0, 1)), -0.2).append(OperatorProduct((5,), (1,)), 0.1))
        gens = seq.generators()
        x = rotate_sum(self.h, gens[0])
        phi = apply_operator(exp_generator(gens[2]), self.psi)
        curve = EnergyCurve(x, gens[1].t, phi)
        for th in (-2.0, -0.2, 0.5, 1.7):
            assert curve(th) == pytest.approx(self.energy(seq.with_theta(1, th)), abs=1e-12)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError):
            sweep(self.h, TransformationSequence(), self.cfg, self.psi)


class TestSubspace:
    def test_one_determinant_gives_diagonal(self):
        e, psi = subspace_ground_state(DIMER, (0b0011,))
        assert e == pytest.approx(1.0) and psi.to_dict() == {3: 1.0}

    def test_two_by_two(self):
        h = two_level(0.3, -1.0, 0.4, 0, 1)
        e, _ = subspace_ground_state(h, (1, 2))
        assert e == pytest.approx(-0.35 - np.sqrt(0.65 ** 2 + 0.16))


class TestRunAdaptive:
    def test_block_diagonal_stops_immediately(self):
        h = number(0) + number(1) + number(2) * 3.0
        rep = run_adaptive(h, DownfoldConfig(active=(0, 1), external=(2, 3), active_dets=(3,)))
        assert len(rep.sequence) == 0 and rep.stop_reason == "gradient"

    def test_dimer_converges_to_exact(self):
        cfg = DownfoldConfig(active=(0, 1), external=(2, 3), active_dets=(3,), sweep="one-pass", to_convergence=True)
        rep = run_adaptive(DIMER, cfg)
        assert rep.exact_energy == pytest.approx((1 - np.sqrt(17)) / 2, abs=1e-12)
        assert abs(rep.records[-1].error) < 1e-8
        assert rep.stop_reason == "gradient"
        assert np.all(np.diff(rep.energies) <= 1e-12)

    def test_energy_telescoping_and_spectrum(self):
        h = synthetic_integrals(3, 2, seed=4).spinorbital_hamiltonian()
        cfg = DownfoldConfig(active=(0, 1, 2, 3), external=(4, 5), active_dets=(3, 12), max_operators=6)
        rep = run_adaptive(h, cfg)
        assert np.all(np.diff(rep.energies) <= 1e-12)
        for k, rec in enumerate(rep.records):
            hk = transform_hamiltonian(h, TransformationSequence(rep.sequence.steps[:k]))
            e, psi = subspace_ground_state(hk, cfg.active_dets)
            assert e == pytest.approx(rec.energy, abs=1e-10)
            assert TransitionTable(psi, psi).expectation(hk).real == pytest.approx(rec.energy, abs=1e-10)
        w0 = np.linalg.eigvalsh(build_dense(h, 6))
        w1 = np.linalg.eigvalsh(build_dense(rep.hbar, 6))
        assert np.max(np.abs(w0 - w1)) < 1e-9

    def test_gradient_stop_means_all_gradients_small(self):
        cfg = DownfoldConfig(active=(0, 1), external=(2, 3), active_dets=(3,), max_operators=40, energy_tol=1e-15)
        rep = run_adaptive(DIMER, cfg)
        assert rep.stop_reason == "gradient"
        assert max(abs(gradient(rep.hbar, t, rep.psi)) for t in rep.pool) < cfg.grad_tol

    def test_operator_budget(self):
        rep = run_adaptive(DIMER, DownfoldConfig(active=(0, 1), external=(2, 3), active_dets=(3,), max_operators=1))
        assert len(rep.sequence) == 1 and rep.stop_reason == "max_operators"


def test_exact_energy_in_sector():
    assert exact_energy(DIMER, (3,)) == pytest.approx((1 - np.sqrt(17)) / 2)


class TestRankMatrix:
    def test_identity_only(self):
        m = rank_magnitude_matrix(OperatorSum.identity(2.0))
        assert m.shape == (1, 1) and m[0, 0] == 2.0

    def test_hubbard_blocks(self):
        m = rank_magnitude_matrix(hubbard_chain(HubbardSpec(3, 1.0, 1.0)))
        assert set(zip(*np.nonzero(m))) == {(1, 1), (2, 2)}
        assert m[1, 1] == pytest.approx(np.sqrt(8))

    def test_partition_of_norm(self):
        x = product((0, 1), (2,), 3.0) + number(4) * 4j + OperatorSum.identity()
        m = rank_magnitude_matrix(x, size=3)
        assert m.shape == (4, 4)
        assert np.sum(m ** 2) == pytest.approx(euclidean_norm(x) ** 2)
        assert m[2, 1] == 3.0
