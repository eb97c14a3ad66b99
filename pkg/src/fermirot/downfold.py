"""Adaptive block-diagonalization of a Hamiltonian by exact fermionic rotations.

The transformed Hamiltonian is

    Hbar = exp(-t_n A_n) ... exp(-t_1 A_1) H exp(t_1 A_1) ... exp(t_n A_n)

and the state ``Psi`` lives in a small set of active determinants.  At every
iteration the pool operator with the largest ``|<Psi|[Hbar, A]|Psi>|`` is
appended, its angle optimized, and ``Psi`` re-diagonalized in the active
determinant space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .algebra import OperatorProduct, OperatorSum, commutator, euclidean_norm, hermiticity_residual, popcount
from .rotations import Generator, Kind, build_generator_sum, exp_generator, rotate_sum, rotation_pieces
from .states import (
    SectorBasis,
    StateVector,
    TransitionTable,
    _sector_of,
    apply_operator,
    build_dense,
    eigensolve_hermitian,
)

logger = logging.getLogger(__name__)

GRID_POINTS = 64


class PoolError(ValueError):
    pass


@dataclass(frozen=True)
class DownfoldConfig:
    active: tuple[int, ...]
    external: tuple[int, ...]
    active_dets: tuple[int, ...]
    grad_tol: float = 1e-6
    energy_tol: float = 1e-9
    max_operators: int | None = None
    sweep: str = "none"
    to_convergence: bool = False
    theta_tol: float = 1e-10
    max_sweeps: int = 50

    def __post_init__(self):
        for name in ("active", "external", "active_dets"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        if set(self.active) & set(self.external):
            raise ValueError("active and external spinorbitals overlap")
        if self.grad_tol <= 0 or self.energy_tol <= 0 or self.theta_tol <= 0:
            raise ValueError("thresholds must be positive")
        if self.sweep not in ("none", "one-pass"):
            raise ValueError(f"unknown sweep mode {self.sweep!r}")
        if not self.active_dets:
            raise ValueError("need at least one active determinant")


@dataclass(frozen=True)
class TransformationSequence:
    steps: tuple[tuple[OperatorProduct, float], ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def append(self, t: OperatorProduct, theta: float) -> "TransformationSequence":
        return TransformationSequence(self.steps + ((t, float(theta)),))

    def with_theta(self, j: int, theta: float) -> "TransformationSequence":
        steps = list(self.steps)
        steps[j] = (steps[j][0], float(theta))
        return TransformationSequence(tuple(steps))

    def generators(self) -> list[Generator]:
        return [Generator(t, Kind.ANTI_HERMITIAN, th) for t, th in self.steps]


@dataclass
class IterationRecord:
    iteration: int
    operator: OperatorProduct | None
    theta: float
    gradient: float
    energy: float
    error: float | None


@dataclass
class DownfoldReport:
    records: list[IterationRecord]
    sequence: TransformationSequence
    hbar: OperatorSum
    psi: StateVector
    rank_matrix: np.ndarray
    exact_energy: float | None
    stop_reason: str
    pool: list[OperatorProduct] = field(default_factory=list)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records])

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy


def _spin(p: int) -> int:
    return p % 2


def build_pool(cfg: DownfoldConfig) -> list[OperatorProduct]:
    """Spin-conserving singles ``a+_x a_i`` and doubles ``a+_x a+_y a_j a_i`` (active -> external)."""
    if not cfg.active or not cfg.external:
        raise PoolError("pool needs both active and external spinorbitals")
    act, ext = sorted(cfg.active), sorted(cfg.external)
    pool = []
    for i in act:
        for x in ext:
            if _spin(i) == _spin(x):
                pool.append(OperatorProduct((x,), (i,)))
    for i, j in combinations(act, 2):
        for x, y in combinations(ext, 2):
            if _spin(i) + _spin(j) == _spin(x) + _spin(y):
                pool.append(OperatorProduct((x, y), (i, j)))
    if not pool:
        raise PoolError("no spin-conserving substitutions between the active and external sets")
    return pool


def transform_hamiltonian(h: OperatorSum, seq: TransformationSequence) -> OperatorSum:
    """Apply the rotations of ``seq`` to ``h``, first entry innermost."""
    for g in seq.generators():
        h = rotate_sum(h, g)
    return h


def gradient(hbar: OperatorSum, t: OperatorProduct, psi: StateVector, table: TransitionTable | None = None) -> float:
    """``<Psi|[Hbar, A]|Psi>`` with ``A = T - T+``."""
    if table is None:
        table = TransitionTable(psi, psi)
    a = build_generator_sum(Generator(t, Kind.ANTI_HERMITIAN))
    return float(table.expectation(commutator(hbar, a)).real)


def select_operator(hbar: OperatorSum, pool: Sequence[OperatorProduct], psi: StateVector) -> tuple[OperatorProduct, float]:
    """Pool entry with the largest absolute gradient (first one on ties)."""
    if not pool:
        raise PoolError("empty pool")
    table = TransitionTable(psi, psi)
    grads = [gradient(hbar, t, psi, table) for t in pool]
    k = int(np.argmax(np.abs(grads)))
    return pool[k], grads[k]


class EnergyCurve:
    """``E(theta) = <phi| rotate(X, T, theta) |phi>`` as an explicit trigonometric function."""

    def __init__(self, x: OperatorSum, t: OperatorProduct, phi: StateVector):
        pieces = rotation_pieces(x, Generator(t, Kind.ANTI_HERMITIAN))
        table = TransitionTable(phi, phi)
        self.pieces = pieces
        self.trivial = pieces.c.is_zero()
        self.values = [table.expectation(p) for p in (pieces.o, pieces.c, pieces.d, pieces.c4, pieces.d4)]

    def __call__(self, theta: float) -> float:
        e0, ec, ed, ec4, ed4 = self.values
        if theta == 0.0:
            return float(e0.real)
        w1, w2, w3, w4 = self.pieces.weights(theta)
        return float((e0 + w1 * ec + w2 * ed + w3 * ec4 + w4 * ed4).real)

    def slope(self, theta: float) -> tuple[float, float]:
        """First and second derivatives in ``theta`` (anti-Hermitian weights)."""
        _, ec, ed, ec4, ed4 = self.values
        s1, c1, s2, c2 = np.sin(theta), np.cos(theta), np.sin(2 * theta), np.cos(2 * theta)
        d1 = c1 * ec + s1 * ed + (c2 - c1) * ec4 + (s2 / 2 - s1) * ed4
        d2 = -s1 * ec + c1 * ed + (s1 - 2 * s2) * ec4 + (c2 - c1) * ed4
        return float(d1.real), float(d2.real)


def minimize_curve(curve: EnergyCurve, tol: float = 1e-10, start: float = 0.0) -> float:
    """Global minimizer over [-pi, pi): uniform grid, then bounded refinement."""
    if curve.trivial:
        return start
    grid = -np.pi + 2 * np.pi * np.arange(GRID_POINTS) / GRID_POINTS
    vals = np.array([curve(th) for th in grid])
    k = int(np.argmin(vals))
    h = 2 * np.pi / GRID_POINTS
    res = minimize_scalar(curve, bounds=(grid[k] - h, grid[k] + h), method="bounded",
                          options={"xatol": tol})
    best = float(res.x) if res.fun <= vals[k] else float(grid[k])
    for _ in range(4):
        d1, d2 = curve.slope(best)
        if d2 <= 0 or abs(d1 / d2) > h:
            break
        trial = best - d1 / d2
        if curve(trial) > curve(best):
            break
        best = trial
    best = (best + np.pi) % (2 * np.pi) - np.pi
    if curve(best) > curve(start):
        return start
    return best


def optimize_theta(hbar: OperatorSum, t: OperatorProduct, psi: StateVector, tol: float = 1e-10) -> float:
    """Angle minimizing ``<Psi| exp(-theta A) Hbar exp(theta A) |Psi>``."""
    return minimize_curve(EnergyCurve(hbar, t, psi), tol)


def sweep(h: OperatorSum, seq: TransformationSequence, cfg: DownfoldConfig, psi: StateVector) -> TransformationSequence:
    """Re-optimize each angle once, in order, holding the others fixed.

    For entry ``j`` the prefix rotations act on ``h`` and the suffix rotations
    are moved onto the state: ``<Psi|W+ Y W|Psi> = <W Psi|Y|W Psi>``.
    """
    if len(seq) == 0:
        raise ValueError("cannot sweep an empty sequence")
    gens = seq.generators()
    n = len(gens)
    phis = [None] * n
    phi = psi
    for j in range(n - 1, -1, -1):
        phis[j] = phi
        phi = apply_operator(exp_generator(gens[j]), phi)
    x = h
    for j in range(n):
        t, old = seq.steps[j]
        curve = EnergyCurve(x, t, phis[j])
        new = minimize_curve(curve, cfg.theta_tol, start=old)
        if curve(new) > curve(old):
            new = old
        seq = seq.with_theta(j, new)
        x = rotate_sum(x, Generator(t, Kind.ANTI_HERMITIAN, new))
    return seq


def subspace_ground_state(hbar: OperatorSum, active_dets: Sequence[int]) -> tuple[float, StateVector]:
    """Lowest eigenpair of ``Hbar`` projected onto the active determinants."""
    if len(active_dets) == 0:
        raise ValueError("no active determinants")
    n_orb = max(hbar.num_orbitals, max(int(d).bit_length() for d in active_dets))
    basis = SectorBasis(list(active_dets), n_orb, label="active")
    w, v = eigensolve_hermitian(build_dense(hbar, basis))
    return float(w[0]), StateVector.from_dense(v[:, 0], basis)


def exact_energy(h: OperatorSum, active_dets: Sequence[int]) -> float:
    """Dense ground-state energy in the particle-number sector of the active determinants."""
    n_orb = max(h.num_orbitals, max(int(d).bit_length() for d in active_dets))
    n_orb += n_orb % 2
    basis = _sector_of(StateVector(list(active_dets), np.ones(len(active_dets))), n_orb)
    w, _ = eigensolve_hermitian(build_dense(h, basis))
    return float(w[0])


def rank_magnitude_matrix(hbar: OperatorSum, size: int | None = None) -> np.ndarray:
    """Entry ``(n, m)``: Euclidean norm of all terms with ``n`` creators and ``m`` annihilators."""
    nc = popcount(hbar.cre).astype(np.int64)
    na = popcount(hbar.ann).astype(np.int64)
    if size is None:
        size = int(max(nc.max(initial=0), na.max(initial=0)))
    out = np.zeros((size + 1, size + 1))
    np.add.at(out, (nc, na), np.abs(hbar.coef) ** 2)
    return np.sqrt(out)


def run_adaptive(h: OperatorSum, cfg: DownfoldConfig, exact: float | None = None,
                 compute_exact: bool = True) -> DownfoldReport:
    """Grow the rotation sequence until the gradient, energy change or operator budget stops it."""
    pool = build_pool(cfg)
    max_ops = len(pool) if cfg.max_operators is None else cfg.max_operators
    if exact is None and compute_exact:
        try:
            exact = exact_energy(h, cfg.active_dets)
        except ValueError as exc:
            logger.info("no exact reference: %s", exc)

    def err(e):
        return None if exact is None else e - exact

    seq = TransformationSequence()
    hbar = h
    energy, psi = subspace_ground_state(hbar, cfg.active_dets)
    records = [IterationRecord(0, None, 0.0, 0.0, energy, err(energy))]
    it = 0
    while True:
        t, g = select_operator(hbar, pool, psi)
        if abs(g) < cfg.grad_tol:
            stop = "gradient"
            break
        if it >= max_ops:
            stop = "max_operators"
            break
        it += 1
        theta = optimize_theta(hbar, t, psi, cfg.theta_tol)
        seq = seq.append(t, theta)
        if cfg.sweep == "one-pass":
            prev = None
            for _ in range(cfg.max_sweeps if cfg.to_convergence else 1):
                seq = sweep(h, seq, cfg, psi)
                e_now = float(TransitionTable(psi, psi).expectation(transform_hamiltonian(h, seq)).real)
                if prev is not None and abs(prev - e_now) < cfg.energy_tol:
                    break
                prev = e_now
            hbar = transform_hamiltonian(h, seq)
        else:
            hbar = rotate_sum(hbar, Generator(t, Kind.ANTI_HERMITIAN, theta))
        new_energy, psi = subspace_ground_state(hbar, cfg.active_dets)
        records.append(IterationRecord(it, t, seq.steps[-1][1], g, new_energy, err(new_energy)))
        logger.info("iter %d  op %s  theta %.6f  grad %.3e  E %.12f", it, t, theta, g, new_energy)
        if abs(new_energy - energy) < cfg.energy_tol:
            energy = new_energy
            stop = "energy"
            break
        energy = new_energy
    res = hermiticity_residual(hbar)
    if res > 1e-10:
        logger.warning("transformed Hamiltonian lost Hermiticity (residual %.3e)", res)
    return DownfoldReport(records, seq, hbar, psi, rank_magnitude_matrix(hbar), exact, stop, pool)


def total_norm_check(hbar: OperatorSum, matrix: np.ndarray) -> float:
    """``|sum(matrix**2) - ||Hbar||^2|``."""
    return abs(float(np.sum(matrix ** 2)) - euclidean_norm(hbar) ** 2)
