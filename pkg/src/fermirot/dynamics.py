"""Heisenberg-picture dynamics with symmetric second-order Trotter steps.

Each Trotter factor ``exp(-i H_l dt/2)`` comes from a single Hamiltonian term
``H_l = c (T + T+)`` (or ``c T`` for a number product), so conjugating the
observable by it is one exact closed-form Hermitian rotation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .algebra import (
    DROP_TOL,
    OperatorProduct,
    OperatorSum,
    hermiticity_residual,
    popcount,
    term_ranks,
)
from .rotations import Generator, Kind, rotation_pieces
from .states import StateVector, TransitionTable, apply_operator

logger = logging.getLogger(__name__)


def split_hamiltonian(h: OperatorSum, tol: float = 1e-12) -> list[tuple[OperatorProduct, float]]:
    """Split ``h`` into ``c (T + T+)`` pairs and self-adjoint ``c T`` number products.

    The non-self-adjoint member of each pair is reported as the one whose
    creator mask is larger.  The returned order is the Trotter order:
    off-diagonal terms first, then number products, each sorted by the lowest
    orbital index they touch (site-major, then spin).
    """
    res = hermiticity_residual(h)
    if res > tol:
        raise ValueError(f"Hamiltonian is not Hermitian (residual {res:.3e})")
    if len(h) and np.abs(h.coef.imag).max() > tol:
        raise ValueError("Trotter splitting needs real coefficients")
    pairs, numbers = [], []
    for p, c in h:
        if p.is_number_product:
            if p.creators:  # identity commutes with everything
                numbers.append((p, c.real))
        elif p.cre_mask > p.ann_mask:
            pairs.append((p, c.real))

    def key(pc):
        p = pc[0]
        return (sorted(set(p.creators) | set(p.annihilators)), p.creators, p.annihilators)

    return sorted(pairs, key=key) + sorted(numbers, key=key)


@dataclass(frozen=True)
class TrotterSchedule:
    """One symmetric step: ``entries`` are conjugations applied in order to the observable."""

    entries: tuple[Generator, ...]
    dt: float
    steps: int = 1

    def __len__(self) -> int:
        return len(self.entries)


def term_angle(t: OperatorProduct, coeff: float, dt: float) -> float:
    """Angle of ``exp(i theta (T + T+))`` equal to ``exp(i H_l dt/2)``."""
    half = coeff * dt / 2
    return half / 2 if t.is_number_product else half


def build_schedule(terms: Sequence[tuple[OperatorProduct, float]], dt: float, steps: int = 1) -> TrotterSchedule:
    """Symmetric second-order step for ``exp(-i H dt)``.

    With ``U = V_N ... V_1 V_1 ... V_N`` and ``V_l = exp(-i H_l dt/2)``, the
    observable ``U+ O U`` is obtained by conjugating with ``V_N`` first, then
    ``V_{N-1}``, down to ``V_1``, and back up to ``V_N``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    half = [Generator(t, Kind.HERMITIAN, term_angle(t, c, dt)) for t, c in terms]
    return TrotterSchedule(tuple(half[::-1] + half), dt, steps)


@dataclass
class DynamicsReport:
    times: np.ndarray
    expectations: np.ndarray
    rank_norms: dict[float, np.ndarray]
    term_counts: np.ndarray
    dropped_weight: np.ndarray
    exact: np.ndarray | None = None
    snapshots: list[OperatorSum] = field(default_factory=list)

    @property
    def deviations(self) -> np.ndarray | None:
        if self.exact is None:
            return None
        return self.expectations.real - self.exact.real

    def rank_norm_table(self) -> list[tuple[float, float, float]]:
        rows = []
        for i, t in enumerate(self.times):
            for k in sorted(self.rank_norms):
                rows.append((float(t), k, float(self.rank_norms[k][i])))
        return rows


def rank_norms(x: OperatorSum) -> dict[float, float]:
    """Euclidean norm of each rank component of ``x``."""
    ranks = term_ranks(x)
    out = {}
    for r in np.unique(ranks):
        out[float(r)] = float(np.sqrt(np.sum(np.abs(x.coef[ranks == r]) ** 2)))
    return out


def rank_norm_timeline(snapshots: Sequence[OperatorSum], times: Sequence[float]) -> list[tuple[float, float, float]]:
    rows = []
    for t, x in zip(times, snapshots):
        for k, v in sorted(rank_norms(x).items()):
            rows.append((float(t), k, v))
    return rows


def trotter_step(obs: OperatorSum, schedule: TrotterSchedule, trunc: float = 0.0) -> tuple[OperatorSum, float]:
    """Apply one symmetric step; returns the new observable and the squared weight dropped."""
    dropped = 0.0
    for g in schedule.entries:
        obs = rotation_pieces(obs, g).evaluate(g.theta, drop_tol=DROP_TOL)
        if trunc > 0:
            obs, w = obs.truncate(trunc)
            dropped += w
    return obs, dropped


def evolve(obs: OperatorSum, h: OperatorSum, total_t: float, steps: int,
           trunc: float = 0.0) -> Iterator[tuple[float, OperatorSum, float]]:
    """Yield ``(t, O(t), dropped weight so far)`` for ``t = 0, dt, ..., total_t``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if trunc < 0:
        raise ValueError("trunc must be >= 0")
    dt = total_t / steps
    yield 0.0, obs, 0.0
    if total_t == 0:
        return
    schedule = build_schedule(split_hamiltonian(h), dt, steps)
    dropped = 0.0
    for n in range(1, steps + 1):
        obs, w = trotter_step(obs, schedule, trunc)
        dropped += w
        yield n * dt, obs, dropped


def heisenberg_evolve(obs: OperatorSum, h: OperatorSum, total_t: float, steps: int,
                      psi0: StateVector | None = None, trunc: float = 0.0,
                      keep_snapshots: bool = False, progress=None) -> DynamicsReport:
    """Trotterized ``O(t) = exp(iHt) O exp(-iHt)``, recording ``<psi0|O(t)|psi0>`` and rank norms."""
    table = TransitionTable(psi0, psi0) if psi0 is not None else None
    times, vals, counts, drops, snaps = [], [], [], [], []
    norms: list[dict[float, float]] = []
    for t, o, dropped in evolve(obs, h, total_t, steps, trunc):
        times.append(t)
        vals.append(table.expectation(o) if table is not None else np.nan)
        norms.append(rank_norms(o))
        counts.append(len(o))
        drops.append(dropped)
        if keep_snapshots:
            snaps.append(o)
        if progress is not None:
            progress(t, o)
    ks = sorted({k for n in norms for k in n})
    return DynamicsReport(
        times=np.array(times),
        expectations=np.array(vals, dtype=np.complex128),
        rank_norms={k: np.array([n.get(k, 0.0) for n in norms]) for k in ks},
        term_counts=np.array(counts),
        dropped_weight=np.array(drops),
        snapshots=snaps,
    )


def sudden_ionization_state(gs: StateVector, orbital: int) -> StateVector:
    """Normalized ``a_orbital |gs>``."""
    out = apply_operator(OperatorSum.from_product(OperatorProduct((), (orbital,))), gs)
    if out.norm() == 0:
        raise ValueError(f"orbital {orbital} is empty in every determinant of the state")
    return out.normalized()


def compare_exact(values: Sequence[complex], oracle: Sequence[complex]) -> tuple[float, float]:
    """Maximum and mean absolute deviation between two series on the same time grid."""
    values, oracle = np.asarray(values), np.asarray(oracle)
    if values.shape != oracle.shape:
        raise ValueError(f"time grids differ: {values.shape} vs {oracle.shape}")
    dev = np.abs(values - oracle)
    return float(dev.max()), float(dev.mean())


def number_conserving_blocks(x: OperatorSum) -> bool:
    return bool(np.all(popcount(x.cre) == popcount(x.ann)))
