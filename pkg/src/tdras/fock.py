"""Restricted-active-space Fock spaces built from closed-shell spin strings.

A configuration is a pair of alpha/beta strings over ``M = m0 + m1 + m2``
spatial orbitals, ordered core (P0), first active space (P1), second active
space (P2).  The excitation level of a configuration is the number of electrons
(both spins) sitting in P2; core orbitals are always doubly occupied.

CI algebra is carried out on the full determinant product ``strings x strings``
(a complex matrix ``C[alpha, beta]``) with zeros outside the RAS space, so that
products of excitation operators never lose intermediate components.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from . import kernels

METHODS = ("TDHF", "MCTDHF", "CASSCF", "S", "D", "SD", "SDT")

_LEVELS = {
    "S": (0, 1),
    "D": (0, 2),
    "SD": (0, 1, 2),
    "SDT": (0, 1, 2, 3),
}


class InvalidScheme(ValueError):
    pass


@dataclass(frozen=True)
class RasScheme:
    method: str
    m0: int
    m1: int
    m2: int = 0

    def __post_init__(self):
        method = self.method.upper()
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise InvalidScheme(f"unknown method tag {self.method!r}")
        if min(self.m0, self.m1, self.m2) < 0:
            raise InvalidScheme("orbital counts must be nonnegative")
        if method in ("TDHF", "MCTDHF") and (self.m0 or self.m2):
            raise InvalidScheme(f"{method} uses a single active space (m0 = m2 = 0)")
        if method == "CASSCF" and self.m2:
            raise InvalidScheme("CASSCF has no second active space (m2 = 0)")
        if method in _LEVELS and self.m2 < 1:
            raise InvalidScheme(f"{method} needs at least one P2 orbital")
        if method == "SDT" and self.m2 < 2:
            raise InvalidScheme("SDT needs m2 >= 2; with one P2 orbital no triple excitation exists")

    @classmethod
    def tdhf(cls, n_electrons: int) -> "RasScheme":
        return cls("TDHF", 0, n_electrons // 2, 0)

    @classmethod
    def mctdhf(cls, n_orbitals: int) -> "RasScheme":
        return cls("MCTDHF", 0, n_orbitals, 0)

    @property
    def n_orbitals(self) -> int:
        return self.m0 + self.m1 + self.m2

    @property
    def levels(self) -> tuple[int, ...]:
        return _LEVELS.get(self.method, (0,))

    @property
    def max_excite(self) -> int:
        return max(self.levels)

    @property
    def has_p_coupling(self) -> bool:
        """True when P1-P2 rotations follow the excite-out (zeta) equations."""
        return self.method in ("S", "SD", "SDT")

    def blocks(self) -> list[np.ndarray]:
        """Orbital index ranges of the nonempty subspaces P0, P1, P2."""
        edges = np.cumsum([0, self.m0, self.m1, self.m2])
        return [np.arange(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def subspace_of(self) -> np.ndarray:
        """Subspace label (0, 1, 2) of every orbital."""
        return np.repeat([0, 1, 2], [self.m0, self.m1, self.m2])

    def label(self) -> str:
        return f"{self.method}({self.m0},{self.m1},{self.m2})"


def _sign_and_target(occ: tuple[int, ...], p: int, q: int):
    """Apply c+_p c_q to an ordered occupation tuple; return (sign, new tuple) or None."""
    if q not in occ:
        return None
    pos_q = occ.index(q)
    rest = occ[:pos_q] + occ[pos_q + 1 :]
    if p in rest:
        return None
    pos_p = sum(1 for o in rest if o < p)
    sign = -1 if (pos_q + pos_p) % 2 else 1
    return sign, tuple(sorted(rest + (p,)))


@dataclass(frozen=True)
class ExcitationTable:
    """E_p^q = c+_p c_q on one spin's strings, for every (p, q) pair.

    Entries for pair ``pq = p*M + q`` live in ``src[ptr[pq]:ptr[pq+1]]`` etc.
    """

    n_orbitals: int
    n_strings: int
    ptr: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    sgn: np.ndarray

    def pair(self, p: int, q: int):
        k = p * self.n_orbitals + q
        s = slice(self.ptr[k], self.ptr[k + 1])
        return self.src[s], self.dst[s], self.sgn[s]

    @cached_property
    def stacked(self) -> sp.csr_matrix:
        """Vertical stack of all M^2 string maps: shape (M^2 * ns, ns)."""
        ns = self.n_strings
        pair_id = np.repeat(np.arange(self.n_orbitals**2), np.diff(self.ptr))
        rows = pair_id * ns + self.dst
        return sp.csr_matrix((self.sgn.astype(float), (rows, self.src)), shape=(self.n_orbitals**2 * ns, ns))

    @cached_property
    def stacked_t(self) -> sp.csr_matrix:
        """Horizontal stack of the same maps: shape (ns, M^2 * ns)."""
        ns = self.n_strings
        pair_id = np.repeat(np.arange(self.n_orbitals**2), np.diff(self.ptr))
        cols = pair_id * ns + self.src
        return sp.csr_matrix((self.sgn.astype(float), (self.dst, cols)), shape=(ns, self.n_orbitals**2 * ns))


def build_strings(n_orbitals: int, n_per_spin: int) -> list[tuple[int, ...]]:
    return list(combinations(range(n_orbitals), n_per_spin))


def build_table(strings: list[tuple[int, ...]], n_orbitals: int) -> ExcitationTable:
    index = {s: i for i, s in enumerate(strings)}
    src, dst, sgn, ptr = [], [], [], [0]
    for p in range(n_orbitals):
        for q in range(n_orbitals):
            for i, s in enumerate(strings):
                res = _sign_and_target(s, p, q)
                if res is None:
                    continue
                src.append(i)
                dst.append(index[res[1]])
                sgn.append(res[0])
            ptr.append(len(src))
    return ExcitationTable(
        n_orbitals,
        len(strings),
        np.asarray(ptr, dtype=np.int64),
        np.asarray(src, dtype=np.int64),
        np.asarray(dst, dtype=np.int64),
        np.asarray(sgn, dtype=np.int8),
    )


class FockSpace:
    """Enumerated RAS configuration space for a closed-shell system."""

    def __init__(self, scheme: RasScheme, n_electrons: int):
        if n_electrons <= 0 or n_electrons % 2:
            raise InvalidScheme("closed-shell systems need a positive even electron count")
        nps = n_electrons // 2
        if nps > scheme.m0 + scheme.m1:
            raise InvalidScheme(f"reference configuration does not fit in P0+P1 for {scheme.label()}")
        if scheme.method == "TDHF" and scheme.m1 != nps:
            raise InvalidScheme("TDHF uses exactly N_e/2 orbitals")
        self.scheme = scheme
        self.n_electrons = n_electrons
        self.n_per_spin = nps
        M = scheme.n_orbitals
        self.n_orbitals = M
        self.strings = build_strings(M, nps)
        self.n_strings = len(self.strings)
        sub = scheme.subspace_of()
        occ = np.zeros((self.n_strings, M), dtype=bool)
        for i, s in enumerate(self.strings):
            occ[i, list(s)] = True
        self.string_occupations = occ
        self.string_p2 = occ[:, sub == 2].sum(axis=1)
        self.string_core_full = occ[:, sub == 0].all(axis=1)
        self.level_matrix = self.string_p2[:, None] + self.string_p2[None, :]
        core_ok = self.string_core_full[:, None] & self.string_core_full[None, :]
        self.core_mask = core_ok
        self.mask = core_ok & np.isin(self.level_matrix, scheme.levels)

        a_idx, b_idx = np.nonzero(self.mask)  # row-major -> lexicographic in (alpha, beta)
        lev = self.level_matrix[a_idx, b_idx]
        order = np.argsort(lev, kind="stable")
        self.cfg_alpha = a_idx[order]
        self.cfg_beta = b_idx[order]
        self.cfg_level = lev[order]
        self.dim = len(order)
        self.sectors = {
            n: np.nonzero(self.cfg_level == n)[0] for n in scheme.levels if np.any(self.cfg_level == n)
        }
        self.index = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(self.cfg_alpha, self.cfg_beta))}
        self.table = build_table(self.strings, M)

    def __repr__(self):
        return f"FockSpace({self.scheme.label()}, Ne={self.n_electrons}, dim={self.dim})"

    # -- layout conversion -------------------------------------------------
    def to_matrix(self, c: np.ndarray) -> np.ndarray:
        mat = np.zeros((self.n_strings, self.n_strings), dtype=complex)
        mat[self.cfg_alpha, self.cfg_beta] = c
        return mat

    def from_matrix(self, mat: np.ndarray) -> np.ndarray:
        return mat[self.cfg_alpha, self.cfg_beta]

    def configurations(self):
        """List of (alpha string, beta string) tuples in storage order."""
        return [(self.strings[a], self.strings[b]) for a, b in zip(self.cfg_alpha, self.cfg_beta)]

    def sector_sizes(self) -> dict[int, int]:
        return {n: len(idx) for n, idx in self.sectors.items()}

    @cached_property
    def outer_mask(self) -> np.ndarray:
        """Configurations one excitation level above the top sector (full core)."""
        top = self.scheme.max_excite
        return self.core_mask & (self.level_matrix == top + 1)

    @cached_property
    def top_mask(self) -> np.ndarray:
        return self.mask & (self.level_matrix == self.scheme.max_excite)

    def reference(self) -> np.ndarray:
        c = np.zeros(self.dim, dtype=complex)
        ref = tuple(range(self.n_per_spin))
        a = self.strings.index(ref)
        c[self.index[(a, a)]] = 1.0
        return c


def enumerate_space(scheme: RasScheme, n_electrons: int) -> FockSpace:
    return FockSpace(scheme, n_electrons)


# -- closed-form sector dimensions ------------------------------------------

def dim_subspace(scheme: RasScheme, n_electrons: int, level: int) -> int:
    """Size of the n-fold excited sector from the closed-form expressions.

    Valid for the simple partition in which P0 + P1 hold exactly the occupied
    orbitals of the reference; ``N_e/2`` is replaced by the number of active
    electrons per spin.
    """
    if level > 3 or level < 0:
        raise ValueError(f"unsupported-level: closed form available for levels 0..3, got {level}")
    occ = n_electrons // 2 - scheme.m0
    if occ != scheme.m1:
        raise ValueError("closed form needs m0 + m1 = N_e/2")
    virt = scheme.m2
    if level == 0:
        return 1
    if level == 1:
        return 2 * occ * virt
    if level == 2:
        return (occ * virt) ** 2 + 2 * comb(occ, 2) * comb(virt, 2)
    return 2 * comb(occ, 3) * comb(virt, 3) + 2 * occ * virt * comb(occ, 2) * comb(virt, 2)


def dim_space(scheme: RasScheme, n_electrons: int) -> int:
    """Total RAS dimension by per-spin convolution (any partition)."""
    npa = n_electrons // 2 - scheme.m0
    if npa < 0:
        return 0
    per_spin = [comb(scheme.m2, k) * comb(scheme.m1, npa - k) if npa - k >= 0 else 0 for k in range(npa + 1)]
    total = 0
    for a, wa in enumerate(per_spin):
        for b, wb in enumerate(per_spin):
            if a + b in scheme.levels or scheme.method in ("TDHF", "MCTDHF", "CASSCF"):
                total += wa * wb
    return total


# -- operator application ------------------------------------------------------

def _e1_matrix(mat: np.ndarray, table: ExcitationTable, p: int, q: int) -> np.ndarray:
    src, dst, sgn = table.pair(p, q)
    out = np.zeros_like(mat)
    out[dst, :] += sgn[:, None] * mat[src, :]
    out[:, dst] += sgn[None, :] * mat[:, src]
    return out


def apply_e1(p: int, q: int, c: np.ndarray, space: FockSpace, project: bool = True):
    """E_p^q |Psi>.

    With ``project=True`` the result is returned as a CI vector over ``space``
    (components outside the RAS space dropped); otherwise the full
    ``(n_strings, n_strings)`` product-space matrix is returned.  ``c`` may be
    either layout.
    """
    mat = c if c.ndim == 2 else space.to_matrix(c)
    out = _e1_matrix(np.asarray(mat, dtype=complex), space.table, p, q)
    return space.from_matrix(out) if project else out


def apply_e2(p: int, q: int, r: int, s: int, c: np.ndarray, space: FockSpace, project: bool = True):
    """E_{pr}^{qs} |Psi> = (E_p^q E_r^s - delta_qr E_p^s) |Psi>."""
    mat = c if c.ndim == 2 else space.to_matrix(c)
    mat = np.asarray(mat, dtype=complex)
    out = _e1_matrix(_e1_matrix(mat, space.table, r, s), space.table, p, q)
    if q == r:
        out -= _e1_matrix(mat, space.table, p, s)
    return space.from_matrix(out) if project else out


def excite_out(c: np.ndarray, space: FockSpace, i: int, j: int) -> np.ndarray:
    """Component of E_j^i |Psi> one excitation level above the RAS space.

    ``i`` is a P1 orbital, ``j`` a P2 orbital; only the top sector of ``c``
    contributes.  Returned as a matrix over the product space, zero outside
    the excited sector.
    """
    scheme = space.scheme
    if not scheme.has_p_coupling:
        raise InvalidScheme(f"excite_out is defined for S/SD/SDT schemes, not {scheme.method}")
    sub = scheme.subspace_of()
    if sub[i] != 1 or sub[j] != 2:
        raise ValueError("need i in P1 and j in P2")
    mat = c if c.ndim == 2 else space.to_matrix(c)
    return _e1_matrix(np.asarray(mat, dtype=complex), space.table, j, i) * space.outer_mask


def effective_one_body(h: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """h_pq - 1/2 sum_r v[p,r,r,q]: absorbs the contraction term of E2."""
    return h - 0.5 * np.einsum("prrq->pq", v2)


def sigma(c_mat: np.ndarray, space: FockSpace, h: np.ndarray, v2: np.ndarray, d=None) -> np.ndarray:
    """(sum h_pq E_p^q + 1/2 sum v_pqrs E_pr^qs) C on the full product space.

    ``h`` may already contain the orbital-rotation term.  ``d`` is the
    optional precomputed stack of single excitations of ``c_mat``.
    """
    M = space.n_orbitals
    ns = space.n_strings
    if d is None:
        d = kernels.excite_all(c_mat, space.table)
    heff = effective_one_body(h, v2).reshape(M * M)
    g = 0.5 * (v2.reshape(M * M, M * M) @ d.reshape(M * M, ns * ns)).reshape(M * M, ns, ns)
    g += heff[:, None, None] * c_mat[None, :, :]
    return kernels.deexcite_sum(g, space.table)


def hamiltonian_matrix(space: FockSpace, h: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Dense H over the RAS space, column by column (small spaces only)."""
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for k in range(space.dim):
        e = np.zeros(space.dim, dtype=complex)
        e[k] = 1.0
        out[:, k] = space.from_matrix(sigma(space.to_matrix(e), space, h, v2))
    return out
