"""Hamiltonian constructors: Hubbard chains, a two-level model and FCIDUMP input.

Spinorbitals are packed site-major with spin as the fast index: site ``i``
(1-based) spin up is ``2*(i-1)``, spin down is ``2*(i-1) + 1``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import OperatorProduct, OperatorSum, linear_combination, normal_order

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8


def spinorbital(site: int, spin: str | int) -> int:
    """Index of (1-based ``site``, ``spin``) with spin given as 'up'/'down' or 0/1."""
    s = {"up": 0, "down": 1, "u": 0, "d": 1}.get(spin, spin) if isinstance(spin, str) else spin
    if s not in (0, 1) or site < 1:
        raise ValueError(f"bad spinorbital label ({site}, {spin})")
    return 2 * (site - 1) + s


@dataclass(frozen=True)
class HubbardSpec:
    sites: int
    hopping: float = 1.0
    onsite: float = 1.0
    boundaries: str = "open"

    def __post_init__(self):
        if self.sites < 1:
            raise ValueError("need at least one site")
        if self.boundaries != "open":
            raise ValueError("only open boundaries are supported")


def hubbard_chain(spec: HubbardSpec) -> OperatorSum:
    """``-J sum_{i,s} (a+_{i+1,s} a_{i,s} + h.c.) + U sum_i n_{i,up} n_{i,down}``."""
    terms = []
    for i in range(1, spec.sites):
        for s in (0, 1):
            p, q = spinorbital(i, s), spinorbital(i + 1, s)
            terms.append((OperatorProduct((q,), (p,)), -spec.hopping))
            terms.append((OperatorProduct((p,), (q,)), -spec.hopping))
    for i in range(1, spec.sites + 1):
        terms.append((OperatorProduct.number(spinorbital(i, 0), spinorbital(i, 1)), spec.onsite))
    return OperatorSum.from_terms(terms)


def two_level(h_pp: float, h_qq: float, h_pq: float, p: int, q: int) -> OperatorSum:
    """``h_pp n_p + h_qq n_q + h_pq (a+_p a_q + a+_q a_p)``."""
    if p == q:
        raise ValueError("two_level needs distinct orbitals")
    return OperatorSum.from_terms([
        (OperatorProduct.number(p), h_pp),
        (OperatorProduct.number(q), h_qq),
        (OperatorProduct((p,), (q,)), h_pq),
        (OperatorProduct((q,), (p,)), h_pq),
    ])


def decoupling_angle(h_pp: float, h_qq: float, h_pq: float) -> float:
    """Rotation angle for ``T = a+_p a_q`` that removes the ``p``-``q`` coupling."""
    return 0.5 * np.arctan2(2 * h_pq, h_qq - h_pp)


# ---------------------------------------------------------------------------
# FCIDUMP


class FCIDumpError(ValueError):
    pass


@dataclass
class MolecularIntegrals:
    norb: int
    nelec: int
    ms2: int
    e_core: float
    h1: np.ndarray  # (norb, norb), spatial
    h2: np.ndarray  # (norb,)*4, chemist notation (pq|rs)
    header: dict = field(default_factory=dict)

    def symmetry_residual(self) -> float:
        h1, h2 = self.h1, self.h2
        res = np.abs(h1 - h1.T).max(initial=0.0)
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            res = max(res, np.abs(h2 - h2.transpose(perm)).max(initial=0.0))
        return float(res)

    def spinorbital_hamiltonian(self) -> OperatorSum:
        return integrals_to_operator(self.e_core, self.h1, self.h2)


def integrals_to_operator(e_core: float, h1: np.ndarray, h2: np.ndarray, tol: float = 1e-14) -> OperatorSum:
    """``E + sum h_pq a+_ps a_qs + 1/2 sum (pq|rs) a+_ps a+_rt a_st a_qs`` over spins ``s, t``."""
    norb = h1.shape[0]
    parts = [(e_core, OperatorSum.identity())] if e_core else []
    for p in range(norb):
        for q in range(norb):
            if abs(h1[p, q]) > tol:
                for s in (0, 1):
                    parts.append((h1[p, q], normal_order([(2 * p + s, True), (2 * q + s, False)])))
    for p, q, r, s_ in zip(*np.nonzero(np.abs(h2) > tol)):
        v = 0.5 * h2[p, q, r, s_]
        for s in (0, 1):
            for t in (0, 1):
                raw = [(2 * p + s, True), (2 * r + t, True), (2 * s_ + t, False), (2 * q + s, False)]
                parts.append((v, normal_order(raw)))
    return linear_combination(parts)


_HEADER_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=]*?)(?=,?\s*[A-Za-z_][A-Za-z0-9_]*\s*=|$)")


def _parse_header(text: str) -> dict:
    body = re.sub(r"^\s*&\s*FCI", "", text, flags=re.I)
    body = re.sub(r"(&\s*END|/)\s*$", "", body.strip(), flags=re.I)
    out = {}
    for key, val in _HEADER_KEY.findall(body):
        vals = [v for v in re.split(r"[,\s]+", val.strip()) if v]
        out[key.upper()] = vals
    return out


def read_fcidump(path: str | Path) -> MolecularIntegrals:
    """Parse a restricted FCIDUMP file (1-based spatial indices, chemist notation)."""
    lines = Path(path).read_text().splitlines()
    header_lines = []
    body_start = None
    for n, line in enumerate(lines):
        header_lines.append(line)
        if re.search(r"&\s*END|^\s*/\s*$", line, flags=re.I):
            body_start = n + 1
            break
    if body_start is None:
        raise FCIDumpError(f"{path}: missing &END terminating the namelist header")
    header = _parse_header(" ".join(header_lines))
    try:
        norb = int(header["NORB"][0])
        nelec = int(header.get("NELEC", ["0"])[0])
        ms2 = int(header.get("MS2", ["0"])[0])
    except (KeyError, ValueError) as exc:
        raise FCIDumpError(f"{path}: header lacks a valid NORB/NELEC/MS2 ({exc})") from None

    h1 = np.zeros((norb, norb))
    h2 = np.zeros((norb,) * 4)
    e_core = 0.0
    seen: dict[tuple[int, int, int, int], float] = {}
    for n, line in enumerate(lines[body_start:], start=body_start + 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise FCIDumpError(f"{path}:{n}: expected 'value i j k l', got {line!r}")
        try:
            val = float(fields[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(f) for f in fields[1:])
        except ValueError:
            raise FCIDumpError(f"{path}:{n}: cannot parse {line!r}") from None
        if any(x < 0 or x > norb for x in (i, j, k, l)):
            raise FCIDumpError(f"{path}:{n}: index out of range 0..{norb}")
        if i == j == k == l == 0:
            e_core = val
        elif k == 0 and l == 0:
            if i == 0 or j == 0:
                raise FCIDumpError(f"{path}:{n}: orbital energies (i 0 0 0) are not supported")
            h1[i - 1, j - 1] = h1[j - 1, i - 1] = val
        else:
            if 0 in (i, j, k, l):
                raise FCIDumpError(f"{path}:{n}: malformed two-electron index {line!r}")
            p, q, r, s = i - 1, j - 1, k - 1, l - 1
            key = min((p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                      (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p))
            if key in seen and abs(seen[key] - val) > SYMMETRY_TOL:
                logger.warning("%s:%d: integral (%d %d|%d %d) conflicts with an equivalent entry; "
                               "the integrals violate permutational symmetry", path, n, i, j, k, l)
            seen[key] = val
            for a, b, c, d in ((p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
                               (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p)):
                h2[a, b, c, d] = val
    return MolecularIntegrals(norb, nelec, ms2, e_core, h1, h2, header)


def load_fcidump(path: str | Path) -> tuple[MolecularIntegrals, OperatorSum]:
    ints = read_fcidump(path)
    return ints, ints.spinorbital_hamiltonian()


def write_fcidump(path: str | Path, ints: MolecularIntegrals, tol: float = 1e-14) -> None:
    norb = ints.norb
    out = [f"&FCI NORB={norb},NELEC={ints.nelec},MS2={ints.ms2},", "&END"]
    for p in range(norb):
        for q in range(p + 1):
            for r in range(norb):
                for s in range(r + 1):
                    if p * (p + 1) // 2 + q < r * (r + 1) // 2 + s:
                        continue
                    v = ints.h2[p, q, r, s]
                    if abs(v) > tol:
                        out.append(f"{v: .16e} {p + 1} {q + 1} {r + 1} {s + 1}")
    for p in range(norb):
        for q in range(p + 1):
            if abs(ints.h1[p, q]) > tol:
                out.append(f"{ints.h1[p, q]: .16e} {p + 1} {q + 1} 0 0")
    out.append(f"{ints.e_core: .16e} 0 0 0 0")
    Path(path).write_text("\n".join(out) + "\n")


def synthetic_integrals(norb: int = 4, nelec: int = 2, seed: int = 7, parity_symmetric: bool = True) -> MolecularIntegrals:
    """Random integrals with the 8-fold permutational symmetry.

    With ``parity_symmetric`` the orbitals alternate between two irreducible
    representations (even/odd index), as for a homonuclear diatomic, and
    integrals that break that symmetry are zero.
    """
    rng = np.random.default_rng(seed)
    par = np.arange(norb) % 2
    h1 = rng.normal(scale=0.1, size=(norb, norb))
    h1 = 0.5 * (h1 + h1.T)
    h1 += np.diag(np.linspace(-1.2, 0.8, norb))
    h2 = rng.normal(scale=0.05, size=(norb,) * 4)
    for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
        h2 = 0.5 * (h2 + h2.transpose(perm))
    for p in range(norb):
        for q in range(norb):
            h2[p, p, q, q] += 0.5 + 0.05 * abs(p - q)
    if parity_symmetric:
        h1 *= (par[:, None] == par[None, :])
        tot = par[:, None, None, None] + par[None, :, None, None] + par[None, None, :, None] + par[None, None, None, :]
        h2 *= (tot % 2 == 0)
    return MolecularIntegrals(norb, nelec, 0, 0.7, h1, h2, {"NORB": [str(norb)]})
