"""Occupation-number states, operator action and dense exact-diagonalization oracles.

Determinants are plain integers: bit ``p`` set means spinorbital ``p`` is
occupied, and ``|d> = a+_{i1} a+_{i2} ... |vac>`` with ``i1 < i2 < ...``.
Acting with ``a+_p`` or ``a_p`` therefore picks up a factor
``(-1)**popcount(d & ((1 << p) - 1))``.
"""

from __future__ import annotations

import json
from itertools import combinations
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

from .algebra import (
    DROP_TOL,
    OperatorProduct,
    OperatorSum,
    below_xor,
    hermiticity_residual,
    popcount,
)

_U64 = np.uint64

# Largest full Fock space / sector the dense oracles will build.
MAX_FOCK_ORBITALS = 12
MAX_SECTOR_DIM = 1 << 14

# Pair budget for (terms x determinants) broadcasts.
_CHUNK = 1 << 21


class StateVector:
    """Sparse linear combination of determinants (immutable)."""

    __slots__ = ("dets", "amps")

    def __init__(self, dets=(), amps=(), drop_tol: float = DROP_TOL):
        dets = np.asarray(dets, dtype=_U64).ravel()
        amps = np.asarray(amps, dtype=np.complex128).ravel()
        if len(dets) != len(amps):
            raise ValueError("dets and amps must have equal length")
        if len(dets):
            order = np.argsort(dets, kind="stable")
            dets, amps = dets[order], amps[order]
            new = np.ones(len(dets), dtype=bool)
            new[1:] = dets[1:] != dets[:-1]
            if not new.all():
                starts = np.flatnonzero(new)
                amps = np.add.reduceat(amps, starts)
                dets = dets[starts]
            keep = np.abs(amps) >= drop_tol
            dets, amps = dets[keep], amps[keep]
        dets.flags.writeable = False
        amps.flags.writeable = False
        self.dets, self.amps = dets, amps

    @classmethod
    def from_dict(cls, amplitudes: Mapping[int, complex]) -> "StateVector":
        return cls(list(amplitudes.keys()), list(amplitudes.values()))

    @classmethod
    def determinant(cls, occupied: Iterable[int] | int) -> "StateVector":
        d = occupied if isinstance(occupied, (int, np.integer)) else sum(1 << int(i) for i in occupied)
        return cls([d], [1.0])

    @classmethod
    def from_dense(cls, vec, basis: "SectorBasis") -> "StateVector":
        return cls(basis.dets, np.asarray(vec))

    def to_dict(self) -> dict[int, complex]:
        return dict(zip(self.dets.tolist(), self.amps.tolist()))

    def to_dense(self, basis: "SectorBasis") -> np.ndarray:
        out = np.zeros(len(basis), dtype=np.complex128)
        if len(self.dets):
            idx = basis.index(self.dets)
            if np.any(idx < 0):
                raise ValueError("state has components outside the basis")
            out[idx] = self.amps
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.dets, self.amps / n)

    def scale(self, alpha: complex) -> "StateVector":
        return StateVector(self.dets, self.amps * alpha)

    def __add__(self, other: "StateVector") -> "StateVector":
        return StateVector(np.concatenate([self.dets, other.dets]), np.concatenate([self.amps, other.amps]))

    def __sub__(self, other: "StateVector") -> "StateVector":
        return self + other.scale(-1.0)

    def __len__(self) -> int:
        return len(self.dets)

    def vdot(self, other: "StateVector") -> complex:
        """``<self|other>``."""
        common, i, j = np.intersect1d(self.dets, other.dets, assume_unique=True, return_indices=True)
        return complex(np.sum(np.conj(self.amps[i]) * other.amps[j]))

    def to_records(self) -> list[dict]:
        return [{"bits": int(d), "re": float(a.real), "im": float(a.imag)}
                for d, a in zip(self.dets.tolist(), self.amps.tolist())]

    @classmethod
    def from_records(cls, records: Sequence[Mapping]) -> "StateVector":
        return cls([r["bits"] for r in records], [complex(r.get("re", 0.0), r.get("im", 0.0)) for r in records])

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_records(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "StateVector":
        return cls.from_records(json.loads(text))

    def __repr__(self) -> str:
        return f"StateVector({len(self)} determinants, norm={self.norm():.6g})"


class SectorBasis:
    """Sorted list of determinants sharing fixed particle numbers."""

    __slots__ = ("dets", "n_orbitals", "label")

    def __init__(self, dets, n_orbitals: int, label=None):
        dets = np.unique(np.asarray(dets, dtype=_U64))
        dets.flags.writeable = False
        self.dets = dets
        self.n_orbitals = int(n_orbitals)
        self.label = label

    def __len__(self) -> int:
        return len(self.dets)

    def index(self, dets) -> np.ndarray:
        """Positions of ``dets`` in the basis, -1 where absent."""
        dets = np.asarray(dets, dtype=_U64)
        pos = np.searchsorted(self.dets, dets)
        pos = np.minimum(pos, max(len(self.dets) - 1, 0))
        found = len(self.dets) > 0
        hit = (self.dets[pos] == dets) if found else np.zeros(dets.shape, dtype=bool)
        return np.where(hit, pos, -1)

    def __repr__(self) -> str:
        return f"SectorBasis(dim={len(self)}, n_orbitals={self.n_orbitals}, label={self.label})"


def fock_basis(n_orbitals: int) -> SectorBasis:
    if n_orbitals > MAX_FOCK_ORBITALS:
        raise ValueError(f"full Fock oracle limited to {MAX_FOCK_ORBITALS} spinorbitals")
    return SectorBasis(np.arange(1 << n_orbitals, dtype=_U64), n_orbitals, label="fock")


def _masks_with(orbitals: Sequence[int], n: int) -> list[int]:
    return [sum(1 << o for o in c) for c in combinations(orbitals, n)]


def number_sector(n_orbitals: int, n_particles: int) -> SectorBasis:
    return SectorBasis(_masks_with(range(n_orbitals), n_particles), n_orbitals, label=(n_particles,))


def spin_sector(n_sites: int, n_up: int, n_down: int) -> SectorBasis:
    """Determinants with ``n_up`` electrons on even and ``n_down`` on odd spinorbitals."""
    dim = comb(n_sites, n_up) * comb(n_sites, n_down)
    if dim > MAX_SECTOR_DIM:
        raise ValueError(f"sector dimension {dim} exceeds oracle limit {MAX_SECTOR_DIM}")
    ups = _masks_with(range(0, 2 * n_sites, 2), n_up)
    downs = _masks_with(range(1, 2 * n_sites, 2), n_down)
    return SectorBasis([u | d for u in ups for d in downs], 2 * n_sites, label=(n_up, n_down))


# ---------------------------------------------------------------------------
# operator action


def _act(cre, ann, det):
    """Elementwise action of products on determinants: (ok, result, sign)."""
    ok = (det & ann) == ann
    d1 = det ^ ann
    ok &= (d1 & cre) == 0
    nq = popcount(ann).astype(np.int64)
    par = (popcount(det & below_xor(ann)).astype(np.int64) + (nq * (nq - 1) // 2)
           + popcount(d1 & below_xor(cre)).astype(np.int64))
    sign = np.where(par & 1, -1.0, 1.0)
    return ok, d1 | cre, sign


def apply_product(p: OperatorProduct, det: int) -> tuple[int, int] | None:
    """``(phase, result)`` of ``p |det>``, or None when the result vanishes."""
    ok, res, sign = _act(np.array([p.cre_mask], dtype=_U64), np.array([p.ann_mask], dtype=_U64),
                         np.array([det], dtype=_U64))
    if not ok[0]:
        return None
    return int(sign[0]), int(res[0])


def _broadcast_action(x: OperatorSum, dets: np.ndarray, amps: np.ndarray):
    """Yield (source det index, result det, amplitude) arrays for ``x`` acting on a vector."""
    nt, nd = len(x), len(dets)
    if nt == 0 or nd == 0:
        return
    step = max(1, _CHUNK // nt)
    for d0 in range(0, nd, step):
        dd = dets[d0:d0 + step]
        aa = amps[d0:d0 + step]
        m = len(dd)
        cre = np.tile(x.cre, m)
        ann = np.tile(x.ann, m)
        det = np.repeat(dd, nt)
        ok, res, sign = _act(cre, ann, det)
        val = sign * np.tile(x.coef, m) * np.repeat(aa, nt)
        src = np.repeat(np.arange(d0, d0 + m), nt)
        yield src[ok], res[ok], val[ok]


def apply_operator(x: OperatorSum, v: StateVector) -> StateVector:
    """``x |v>``."""
    dets, vals = [], []
    for _, res, val in _broadcast_action(x, v.dets, v.amps):
        dets.append(res)
        vals.append(val)
    if not dets:
        return StateVector()
    return StateVector(np.concatenate(dets), np.concatenate(vals))


def expectation(bra: StateVector, x: OperatorSum, ket: StateVector) -> complex:
    """``<bra| x |ket>``."""
    return bra.vdot(apply_operator(x, ket))


def build_dense(x: OperatorSum, basis: SectorBasis | int) -> np.ndarray:
    """Matrix ``M[i, j] = <d_i| x |d_j>`` over a sector or, given an int, the full Fock space."""
    if not isinstance(basis, SectorBasis):
        basis = fock_basis(int(basis))
    if x.num_orbitals > basis.n_orbitals:
        raise ValueError("operator acts on orbitals outside the basis")
    dim = len(basis)
    m = np.zeros((dim, dim), dtype=np.complex128)
    for src, res, val in _broadcast_action(x, basis.dets, np.ones(dim, dtype=np.complex128)):
        row = basis.index(res)
        keep = row >= 0
        np.add.at(m, (row[keep], src[keep]), val[keep])
    return m


def eigensolve_hermitian(m: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a Hermitian matrix."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if m.size and np.max(np.abs(m - m.conj().T)) > tol:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(m)
    # fix the phase of each eigenvector so the largest component is real positive
    if v.size:
        pivot = np.argmax(np.abs(v), axis=0)
        ph = v[pivot, np.arange(v.shape[1])]
        v = v * (np.abs(ph) / ph)[None, :]
    return w, v


def ground_state(h: OperatorSum, sector: SectorBasis) -> tuple[float, StateVector]:
    if len(sector) == 0:
        raise ValueError("empty sector")
    w, v = eigensolve_hermitian(build_dense(h, sector))
    return float(w[0]), StateVector.from_dense(v[:, 0], sector)


def _sector_of(v: StateVector, n_orbitals: int) -> SectorBasis:
    counts = np.unique(popcount(v.dets))
    if len(counts) != 1:
        raise ValueError("state mixes particle numbers")
    up = np.unique(popcount(v.dets & _U64(0x5555555555555555)))
    down = np.unique(popcount(v.dets & _U64(0xAAAAAAAAAAAAAAAA)))
    if len(up) == 1 and len(down) == 1 and n_orbitals % 2 == 0:
        return spin_sector(n_orbitals // 2, int(up[0]), int(down[0]))
    return number_sector(n_orbitals, int(counts[0]))


def exact_heisenberg(obs: OperatorSum, h: OperatorSum, psi0: StateVector, times: Sequence[float],
                     n_orbitals: int | None = None, basis: SectorBasis | None = None) -> np.ndarray:
    """``<psi0| e^{iHt} obs e^{-iHt} |psi0>`` for each time, by dense diagonalization."""
    if n_orbitals is None:
        n_orbitals = max(h.num_orbitals, obs.num_orbitals, int(np.max(psi0.dets)).bit_length())
    if basis is None:
        basis = _sector_of(psi0, n_orbitals)
    hm = build_dense(h, basis)
    om = build_dense(obs, basis)
    w, v = eigensolve_hermitian(hm)
    c0 = v.conj().T @ psi0.to_dense(basis)
    om_eig = v.conj().T @ om @ v
    out = []
    for t in times:
        ct = np.exp(-1j * w * t) * c0
        out.append(np.vdot(ct, om_eig @ ct))
    return np.array(out)


def time_evolved_norms(h: OperatorSum, psi0: StateVector, times: Sequence[float],
                       basis: SectorBasis | None = None) -> np.ndarray:
    if basis is None:
        basis = _sector_of(psi0, max(h.num_orbitals, int(np.max(psi0.dets)).bit_length()))
    w, v = eigensolve_hermitian(build_dense(h, basis))
    c0 = v.conj().T @ psi0.to_dense(basis)
    return np.array([np.linalg.norm(v @ (np.exp(-1j * w * t) * c0)) for t in times])


# ---------------------------------------------------------------------------
# transition tables: <bra| a+(P) a(Q) |ket> for every product with a nonzero value


class TransitionTable:
    """All nonzero ``<bra| a+(P) a(Q) |ket>`` values, for fast repeated expectations.

    ``table.expectation(x)`` equals ``expectation(bra, x, ket)`` but costs one
    sorted join instead of applying ``x`` to the ket.
    """

    def __init__(self, bra: StateVector, ket: StateVector):
        cre, ann, val = [], [], []
        for dj, aj in zip(ket.dets.tolist(), ket.amps.tolist()):
            for di, ai in zip(bra.dets.tolist(), bra.amps.tolist()):
                up, down, common = di & ~dj, dj & ~di, di & dj
                shared = _subsets(common)
                c = np.bitwise_or(shared, _U64(up))
                a = np.bitwise_or(shared, _U64(down))
                ok, res, sign = _act(c, a, np.full(len(c), dj, dtype=_U64))
                cre.append(c[ok])
                ann.append(a[ok])
                val.append(sign[ok] * np.conj(ai) * aj)
        table = OperatorSum(np.concatenate(cre), np.concatenate(ann), np.concatenate(val), drop_tol=0.0)
        self.cre, self.ann, self.val = table.cre, table.ann, table.coef

    def __len__(self) -> int:
        return len(self.val)

    def expectation(self, x: OperatorSum) -> complex:
        if len(x) == 0 or len(self) == 0:
            return 0j
        # both sides sorted by (cre, ann): merge through a combined sort
        kx = np.stack([x.cre, x.ann])
        kt = np.stack([self.cre, self.ann])
        allk = np.concatenate([kt, kx], axis=1)
        order = np.lexsort((allk[1], allk[0]))
        s = allk[:, order]
        src = order
        same = (s[0, 1:] == s[0, :-1]) & (s[1, 1:] == s[1, :-1])
        pos = np.flatnonzero(same)
        a, b = src[pos], src[pos + 1]
        nt = len(self.val)
        ti = np.where(a < nt, a, b)
        xi = np.where(a < nt, b, a) - nt
        return complex(np.sum(self.val[ti] * x.coef[xi]))


def _subsets(mask: int) -> np.ndarray:
    out = []
    s = mask
    while True:
        out.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    return np.array(out, dtype=_U64)


def hermitian_check(x: OperatorSum, tol: float = 1e-10) -> None:
    res = hermiticity_residual(x)
    if res > tol:
        raise ValueError(f"operator is not Hermitian (residual {res:.3e})")
